"""Finite-sum objectives with exact per-sample gradients.

Every problem here is an average of ``n`` nonnegative sample losses,

    f(theta) = (1/n) * sum_i f_i(theta),

with analytically computed gradients. Because the sums are small enough to
enumerate, the full gradient, the per-sample gradient variance and (where
the structure allows) the smoothness constant and the minimum value are all
available exactly. That makes these objectives usable as ground truth when
checking convergence bounds and batch-size schedules.

Three kinds are provided:

* :class:`QuadraticLeastSquares` - convex, every constant analytic;
* :class:`RidgeLogistic` - smooth and strongly convex, smoothness constant
  analytic, minimum found by a deterministic descent oracle;
* :class:`TinyMlp` - a one-hidden-layer tanh network on synthetic data, a
  small nonconvex witness with no analytic constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigurationError
from .rand import INIT_STREAM, PROBE_STREAM, make_rng

Array = np.ndarray

#: Step threshold and iteration cap of the deterministic descent oracle used
#: to locate the minimum value when no closed form exists.
FSTAR_GRAD_TOL = 1e-10
FSTAR_MAX_ITERS = 10**6


def _as_param_vector(theta, d: int) -> Array:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (d,):
        raise ConfigurationError(
            f"parameter vector has shape {theta.shape}, expected ({d},)"
        )
    return theta


def _largest_eigenvalue(matrix: Array) -> float:
    return float(np.linalg.eigvalsh(matrix)[-1])


class FiniteSumProblem:
    """Shared interface of the finite-sum objectives.

    Subclasses provide vectorized internals; instances are immutable after
    construction and safe for concurrent reads.
    """

    kind: str = ""

    @property
    def n(self) -> int:
        raise NotImplementedError

    @property
    def d(self) -> int:
        raise NotImplementedError

    @property
    def analytic_lipschitz(self) -> float | None:
        """Exact smoothness constant of the full loss, when computable."""
        return None

    @property
    def analytic_min_loss(self) -> float | None:
        """Exact minimum of the full loss, when computable."""
        return None

    def per_sample_loss(self, theta, i: int) -> float:
        raise NotImplementedError

    def per_sample_grad(self, theta, i: int) -> Array:
        raise NotImplementedError

    def grad_matrix(self, theta) -> Array:
        """All per-sample gradients stacked into an (n, d) array."""
        raise NotImplementedError

    def loss(self, theta) -> float:
        raise NotImplementedError

    def full_grad(self, theta) -> Array:
        """Gradient of the average loss; mean of the per-sample gradients."""
        raise NotImplementedError

    def batch_grad(self, theta, indices) -> Array:
        """Mean gradient over the given sample indices (with multiplicity)."""
        raise NotImplementedError

    def default_theta0(self) -> Array:
        """Canonical starting point for experiments on this instance."""
        raise NotImplementedError

    def _check_index(self, i: int) -> None:
        if not 0 <= i < self.n:
            raise IndexError(f"sample index {i} out of range [0, {self.n})")


@dataclass(frozen=True)
class QuadraticLeastSquares(FiniteSumProblem):
    """Least squares: f_i(theta) = 0.5 * (a_i . theta - y_i)^2.

    The full loss is a convex quadratic with Hessian H = (1/n) A^T A, so the
    smoothness constant is the largest eigenvalue of H and the minimum value
    comes from the least-squares solution, both exact.
    """

    features: Array  # (n, d) rows a_i
    targets: Array  # (n,)
    seed: int = 0

    def __post_init__(self):
        a = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.targets, dtype=np.float64)
        if a.ndim != 2 or y.ndim != 1 or a.shape[0] != y.shape[0]:
            raise ConfigurationError(
                f"features {a.shape} and targets {y.shape} are inconsistent"
            )
        if a.shape[0] < 1 or a.shape[1] < 1:
            raise ConfigurationError("need at least one sample and one feature")
        if not (np.isfinite(a).all() and np.isfinite(y).all()):
            raise ConfigurationError("features/targets contain non-finite values")
        object.__setattr__(self, "features", a)
        object.__setattr__(self, "targets", y)
        object.__setattr__(self, "kind", "quadratic")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @cached_property
    def hessian(self) -> Array:
        return self.features.T @ self.features / self.n

    @cached_property
    def _analytic_lipschitz(self) -> float:
        return _largest_eigenvalue(self.hessian)

    @property
    def analytic_lipschitz(self) -> float:
        return self._analytic_lipschitz

    @cached_property
    def least_squares_solution(self) -> Array:
        theta_star, *_ = np.linalg.lstsq(self.features, self.targets, rcond=None)
        return theta_star

    @cached_property
    def _analytic_min_loss(self) -> float:
        return self.loss(self.least_squares_solution)

    @property
    def analytic_min_loss(self) -> float:
        return self._analytic_min_loss

    def _residuals(self, theta: Array) -> Array:
        return self.features @ theta - self.targets

    def per_sample_loss(self, theta, i: int) -> float:
        self._check_index(i)
        theta = _as_param_vector(theta, self.d)
        r = float(self.features[i] @ theta - self.targets[i])
        return 0.5 * r * r

    def per_sample_grad(self, theta, i: int) -> Array:
        self._check_index(i)
        theta = _as_param_vector(theta, self.d)
        r = float(self.features[i] @ theta - self.targets[i])
        return r * self.features[i]

    def grad_matrix(self, theta) -> Array:
        theta = _as_param_vector(theta, self.d)
        return self._residuals(theta)[:, None] * self.features

    def loss(self, theta) -> float:
        theta = _as_param_vector(theta, self.d)
        r = self._residuals(theta)
        return 0.5 * float(r @ r) / self.n

    def full_grad(self, theta) -> Array:
        theta = _as_param_vector(theta, self.d)
        return self.features.T @ self._residuals(theta) / self.n

    def batch_grad(self, theta, indices) -> Array:
        theta = _as_param_vector(theta, self.d)
        idx = np.asarray(indices, dtype=np.intp)
        if idx.size == 0:
            raise ConfigurationError("batch is empty")
        a = self.features[idx]
        r = a @ theta - self.targets[idx]
        return a.T @ r / idx.size

    def default_theta0(self) -> Array:
        return np.zeros(self.d)


def _sigmoid(z: Array) -> Array:
    # tanh form is stable for large |z| in both directions
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(frozen=True)
class RidgeLogistic(FiniteSumProblem):
    """L2-regularized logistic regression with labels in {-1, +1}.

    f_i(theta) = log(1 + exp(-y_i x_i . theta)) + (ridge/2) ||theta||^2.

    The Hessian of the average loss is (1/n) sum_i s_i (1-s_i) x_i x_i^T
    + ridge * I with s_i in (0, 1); the weights peak at 1/4 when all margins
    are zero, i.e. at theta = 0, so the smoothness constant is exactly
    lambda_max(X^T X / (4n)) + ridge.
    """

    features: Array  # (n, d)
    labels: Array  # (n,), entries in {-1, +1}
    ridge: float = 0.1
    seed: int = 0

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.float64)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise ConfigurationError(
                f"features {x.shape} and labels {y.shape} are inconsistent"
            )
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ConfigurationError("labels must be -1 or +1")
        if self.ridge < 0:
            raise ConfigurationError("ridge must be nonnegative")
        if not np.isfinite(x).all():
            raise ConfigurationError("features contain non-finite values")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "kind", "logistic")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @cached_property
    def _analytic_lipschitz(self) -> float:
        gram = self.features.T @ self.features / (4.0 * self.n)
        return _largest_eigenvalue(gram) + self.ridge

    @property
    def analytic_lipschitz(self) -> float:
        return self._analytic_lipschitz

    def _margins(self, theta: Array) -> Array:
        return self.labels * (self.features @ theta)

    def per_sample_loss(self, theta, i: int) -> float:
        self._check_index(i)
        theta = _as_param_vector(theta, self.d)
        m = float(self.labels[i] * (self.features[i] @ theta))
        return float(np.logaddexp(0.0, -m)) + 0.5 * self.ridge * float(theta @ theta)

    def per_sample_grad(self, theta, i: int) -> Array:
        self._check_index(i)
        theta = _as_param_vector(theta, self.d)
        m = float(self.labels[i] * (self.features[i] @ theta))
        coeff = -self.labels[i] * float(_sigmoid(-m))
        return coeff * self.features[i] + self.ridge * theta

    def grad_matrix(self, theta) -> Array:
        theta = _as_param_vector(theta, self.d)
        coeff = -self.labels * _sigmoid(-self._margins(theta))
        return coeff[:, None] * self.features + self.ridge * theta

    def loss(self, theta) -> float:
        theta = _as_param_vector(theta, self.d)
        m = self._margins(theta)
        return float(np.mean(np.logaddexp(0.0, -m))) + 0.5 * self.ridge * float(
            theta @ theta
        )

    def full_grad(self, theta) -> Array:
        theta = _as_param_vector(theta, self.d)
        coeff = -self.labels * _sigmoid(-self._margins(theta))
        return self.features.T @ coeff / self.n + self.ridge * theta

    def batch_grad(self, theta, indices) -> Array:
        theta = _as_param_vector(theta, self.d)
        idx = np.asarray(indices, dtype=np.intp)
        if idx.size == 0:
            raise ConfigurationError("batch is empty")
        x = self.features[idx]
        y = self.labels[idx]
        coeff = -y * _sigmoid(-y * (x @ theta))
        return x.T @ coeff / idx.size + self.ridge * theta

    def default_theta0(self) -> Array:
        return np.zeros(self.d)


@dataclass(frozen=True)
class TinyMlp(FiniteSumProblem):
    """One-hidden-layer tanh network with squared loss on synthetic data.

    The parameter vector packs [W1 (h x p), b1 (h), w2 (h), b2 (1)] for
    input width p and hidden width h, giving d = h*(p+2) + 1 parameters.
    Nonconvex; no analytic constants.
    """

    inputs: Array  # (n, p)
    targets: Array  # (n,)
    hidden: int = 4
    seed: int = 0

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=np.float64)
        y = np.asarray(self.targets, dtype=np.float64)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise ConfigurationError(
                f"inputs {x.shape} and targets {y.shape} are inconsistent"
            )
        if self.hidden < 1:
            raise ConfigurationError("hidden width must be positive")
        if not (np.isfinite(x).all() and np.isfinite(y).all()):
            raise ConfigurationError("inputs/targets contain non-finite values")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", y)
        object.__setattr__(self, "kind", "tiny_mlp")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def d(self) -> int:
        return self.hidden * (self.input_dim + 2) + 1

    def _unpack(self, theta: Array):
        h, p = self.hidden, self.input_dim
        w1 = theta[: h * p].reshape(h, p)
        b1 = theta[h * p : h * p + h]
        w2 = theta[h * p + h : h * p + 2 * h]
        b2 = theta[-1]
        return w1, b1, w2, b2

    def _forward(self, theta: Array, x: Array):
        w1, b1, w2, b2 = self._unpack(theta)
        activ = np.tanh(x @ w1.T + b1)
        out = activ @ w2 + b2
        return activ, out

    def _batch_mean_grad(self, theta: Array, x: Array, y: Array) -> Array:
        w1, b1, w2, b2 = self._unpack(theta)
        activ = np.tanh(x @ w1.T + b1)  # (m, h)
        resid = activ @ w2 + b2 - y  # (m,)
        back = (1.0 - activ * activ) * w2 * resid[:, None]  # (m, h)
        m = x.shape[0]
        g_w1 = back.T @ x / m
        g_b1 = back.mean(axis=0)
        g_w2 = activ.T @ resid / m
        g_b2 = resid.mean()
        return np.concatenate([g_w1.ravel(), g_b1, g_w2, [g_b2]])

    def per_sample_loss(self, theta, i: int) -> float:
        self._check_index(i)
        theta = _as_param_vector(theta, self.d)
        _, out = self._forward(theta, self.inputs[i : i + 1])
        r = float(out[0] - self.targets[i])
        return 0.5 * r * r

    def per_sample_grad(self, theta, i: int) -> Array:
        self._check_index(i)
        theta = _as_param_vector(theta, self.d)
        return self._batch_mean_grad(
            theta, self.inputs[i : i + 1], self.targets[i : i + 1]
        )

    def grad_matrix(self, theta) -> Array:
        theta = _as_param_vector(theta, self.d)
        w1, b1, w2, b2 = self._unpack(theta)
        x = self.inputs
        activ = np.tanh(x @ w1.T + b1)
        resid = activ @ w2 + b2 - self.targets
        back = (1.0 - activ * activ) * w2 * resid[:, None]  # (n, h)
        g_w1 = back[:, :, None] * x[:, None, :]  # (n, h, p)
        g_w2 = activ * resid[:, None]
        return np.concatenate(
            [g_w1.reshape(self.n, -1), back, g_w2, resid[:, None]], axis=1
        )

    def loss(self, theta) -> float:
        theta = _as_param_vector(theta, self.d)
        _, out = self._forward(theta, self.inputs)
        r = out - self.targets
        return 0.5 * float(r @ r) / self.n

    def full_grad(self, theta) -> Array:
        theta = _as_param_vector(theta, self.d)
        return self._batch_mean_grad(theta, self.inputs, self.targets)

    def batch_grad(self, theta, indices) -> Array:
        theta = _as_param_vector(theta, self.d)
        idx = np.asarray(indices, dtype=np.intp)
        if idx.size == 0:
            raise ConfigurationError("batch is empty")
        return self._batch_mean_grad(theta, self.inputs[idx], self.targets[idx])

    def default_theta0(self) -> Array:
        # zero is a saddle for this architecture, so start from a small
        # seeded Gaussian init instead
        rng = make_rng(self.seed, INIT_STREAM)
        scale = 1.0 / math.sqrt(self.input_dim)
        return scale * rng.standard_normal(self.d)


PROBLEM_KINDS = ("quadratic", "logistic", "tiny_mlp")


def make_problem(
    kind: str,
    n: int,
    d: int,
    seed: int,
    noise: float = 0.5,
    ridge: float = 0.1,
    hidden: int = 4,
    signal: float = 1.0,
    isotropic: bool = False,
) -> FiniteSumProblem:
    """Generate a seeded problem instance.

    ``d`` is the feature dimension; for ``tiny_mlp`` the parameter dimension
    is ``hidden*(d+2)+1``. ``noise`` scales the target/label corruption and
    ``signal`` the planted teacher. Quadratic instances with ``isotropic``
    use orthonormalized features, so the Hessian is exactly the identity:
    on such instances the variance bound is tight and critical-batch-size
    predictions line up with measurements.
    """
    if kind not in PROBLEM_KINDS:
        raise ConfigurationError(
            f"unknown problem kind {kind!r}; expected one of {PROBLEM_KINDS}"
        )
    if n < 1 or d < 1:
        raise ConfigurationError("n and d must be positive")
    if noise < 0 or signal < 0:
        raise ConfigurationError("noise and signal must be nonnegative")
    if isotropic and kind != "quadratic":
        raise ConfigurationError("isotropic applies to the quadratic kind only")
    rng = make_rng(seed)
    if kind == "quadratic":
        if isotropic:
            if n < d:
                raise ConfigurationError("isotropic quadratic needs n >= d")
            basis, _ = np.linalg.qr(rng.standard_normal((n, d)))
            a = math.sqrt(n) * basis
            theta_true = signal * rng.standard_normal(d) / math.sqrt(d)
        else:
            a = rng.standard_normal((n, d)) / math.sqrt(d)
            theta_true = signal * rng.standard_normal(d)
        y = a @ theta_true + noise * rng.standard_normal(n)
        return QuadraticLeastSquares(features=a, targets=y, seed=seed)
    if kind == "logistic":
        x = rng.standard_normal((n, d)) / math.sqrt(d)
        theta_true = rng.standard_normal(d) * 2.0
        margins = x @ theta_true + noise * rng.standard_normal(n)
        y = np.where(margins >= 0, 1.0, -1.0)
        return RidgeLogistic(features=x, labels=y, ridge=ridge, seed=seed)
    x = rng.standard_normal((n, d))
    teacher_w1 = rng.standard_normal((hidden, d)) / math.sqrt(d)
    teacher_b1 = 0.1 * rng.standard_normal(hidden)
    teacher_w2 = rng.standard_normal(hidden) / math.sqrt(hidden)
    y = np.tanh(x @ teacher_w1.T + teacher_b1) @ teacher_w2
    y = y + noise * rng.standard_normal(n)
    return TinyMlp(inputs=x, targets=y, hidden=hidden, seed=seed)


def gradient_variance(problem: FiniteSumProblem, theta) -> float:
    """Exact per-sample gradient variance (1/n) sum_i ||g_i - g_bar||^2."""
    grads = problem.grad_matrix(theta)
    centered = grads - grads.mean(axis=0)
    return float(np.mean(np.sum(centered * centered, axis=1)))


def descend_to_min(problem: FiniteSumProblem, theta0, lipschitz: float) -> float:
    """Deterministic full-gradient descent oracle for the minimum value.

    Runs plain gradient descent with step 1/lipschitz until the gradient
    norm drops below ``FSTAR_GRAD_TOL`` or the iteration cap is hit, and
    returns the final loss. Independent of the stochastic engine.
    """
    theta = _as_param_vector(theta0, problem.d).copy()
    step = 1.0 / lipschitz
    for _ in range(FSTAR_MAX_ITERS):
        g = problem.full_grad(theta)
        if float(np.linalg.norm(g)) <= FSTAR_GRAD_TOL:
            break
        theta -= step * g
    return problem.loss(theta)


@dataclass(frozen=True)
class TheoryConstants:
    """Constants feeding the closed-form convergence and complexity bounds.

    ``bias_coeff`` multiplies 1/T and ``variance_coeff`` multiplies 1/b in
    the constant-step bound sqrt(bias_coeff/T + variance_coeff/b); both are
    derived from the other fields and never set independently.
    """

    lipschitz: float
    grad_variance: float  # variance bound sigma^2 on per-sample gradients
    initial_loss: float
    min_loss: float
    lr: float  # the constant learning rate the coefficients assume
    bias_coeff: float = field(init=False)
    variance_coeff: float = field(init=False)

    def __post_init__(self):
        if self.lipschitz <= 0:
            raise ConfigurationError("lipschitz must be positive")
        if self.grad_variance < 0:
            raise ConfigurationError("grad_variance must be nonnegative")
        if not self.lr > 0:
            raise ConfigurationError("lr must be positive")
        if self.lr >= 2.0 / self.lipschitz:
            raise ConfigurationError(
                f"lr violates the bound lr < 2/lipschitz "
                f"({self.lr} >= {2.0 / self.lipschitz})"
            )
        if self.initial_loss < self.min_loss - 1e-9 * max(1.0, abs(self.min_loss)):
            raise ConfigurationError("initial_loss is below min_loss")
        denom = 2.0 - self.lipschitz * self.lr
        gap = max(self.initial_loss - self.min_loss, 0.0)
        object.__setattr__(self, "bias_coeff", 2.0 * gap / (self.lr * denom))
        object.__setattr__(
            self,
            "variance_coeff",
            self.lipschitz * self.lr * self.grad_variance / denom,
        )


def _ball_point(rng: np.random.Generator, center: Array, radius: float) -> Array:
    d = center.shape[0]
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    return center + radius * rng.uniform() ** (1.0 / d) * direction


#: Longest deterministic descent path the variance probing will walk.
PROBE_PATH_CAP = 4096


def _probe_path(problem, theta0: Array, lipschitz: float, probes: int) -> list[Array]:
    """Probe points along a deterministic descent path from theta0.

    Geometric strides (steps 0, 1, 2, 4, ...) cover both the early
    high-loss region and the late near-stationary one; the path length is
    capped so large probe counts saturate instead of exploding.
    """
    marks = sorted({0} | {min(2**k, PROBE_PATH_CAP) for k in range(probes - 1)})
    points = []
    theta = theta0.copy()
    step = 1.0 / lipschitz
    last = marks[-1]
    for t in range(last + 1):
        if t in marks:
            points.append(theta.copy())
        if t < last:
            theta -= step * problem.full_grad(theta)
    return points


def estimate_constants(
    problem: FiniteSumProblem,
    theta0,
    lr: float,
    probes: int = 8,
    seed: int = 0,
) -> TheoryConstants:
    """Measure or look up the constants the closed-form bounds need.

    The smoothness constant is analytic when the problem provides it and is
    otherwise the largest secant ratio ||g(a)-g(b)||/||a-b|| over seeded
    point pairs from a ball around theta0. The gradient-variance bound is
    the maximum of the exact per-sample variance over probe points along a
    deterministic descent path. The minimum value is analytic when known
    and otherwise comes from :func:`descend_to_min`. Deterministic for a
    fixed seed.
    """
    if probes < 1:
        raise ConfigurationError("probes must be at least 1")
    theta0 = _as_param_vector(theta0, problem.d)

    lipschitz = problem.analytic_lipschitz
    if lipschitz is None:
        rng = make_rng(seed, PROBE_STREAM)
        radius = 1.0 + float(np.linalg.norm(theta0))
        best = 0.0
        for _ in range(probes):
            a = _ball_point(rng, theta0, radius)
            b = _ball_point(rng, theta0, radius)
            gap = float(np.linalg.norm(a - b))
            if gap == 0.0:
                continue
            ratio = float(
                np.linalg.norm(problem.full_grad(a) - problem.full_grad(b)) / gap
            )
            best = max(best, ratio)
        if best <= 0.0:
            raise ConfigurationError("smoothness probing produced no usable pairs")
        lipschitz = best

    sigma_sq = max(
        gradient_variance(problem, point)
        for point in _probe_path(problem, theta0, lipschitz, probes)
    )

    min_loss = problem.analytic_min_loss
    if min_loss is None:
        min_loss = descend_to_min(problem, theta0, lipschitz)

    return TheoryConstants(
        lipschitz=lipschitz,
        grad_variance=sigma_sq,
        initial_loss=problem.loss(theta0),
        min_loss=min_loss,
        lr=lr,
    )
