import pytest

from sgdsched import make_problem


@pytest.fixture(scope="session")
def quad64():
    return make_problem("quadratic", n=64, d=8, seed=3, noise=0.5)


@pytest.fixture(scope="session")
def logistic64():
    return make_problem("logistic", n=64, d=8, seed=5, noise=0.5)


@pytest.fixture(scope="session")
def mlp48():
    return make_problem("tiny_mlp", n=48, d=5, seed=7, noise=0.3)


@pytest.fixture(scope="session")
def all_kinds(quad64, logistic64, mlp48):
    return {"quadratic": quad64, "logistic": logistic64, "tiny_mlp": mlp48}
