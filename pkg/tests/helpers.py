"""Shared oracles for the test suite.

Everything here is deliberately naive (double loops, finite differences,
power iteration) so it stays independent of the code paths under test.
"""

from __future__ import annotations

import numpy as np

FD_STEP = 1e-6


def fd_gradient(func, theta, h: float = FD_STEP) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.zeros_like(theta)
    for j in range(theta.size):
        bump = np.zeros_like(theta)
        bump[j] = h
        grad[j] = (func(theta + bump) - func(theta - bump)) / (2.0 * h)
    return grad


def relative_gap(approx: np.ndarray, exact: np.ndarray) -> float:
    """||approx - exact|| / (1 + ||exact||)."""
    return float(
        np.linalg.norm(approx - exact) / (1.0 + np.linalg.norm(exact))
    )


def naive_loss(problem, theta) -> float:
    """Plain double-loop average of the per-sample losses."""
    total = 0.0
    for i in range(problem.n):
        total += problem.per_sample_loss(theta, i)
    return total / problem.n


def naive_variance(problem, theta) -> float:
    """(1/n) sum_i ||g_i - g_bar||^2 via an explicit double loop."""
    grads = [problem.per_sample_grad(theta, i) for i in range(problem.n)]
    mean = sum(grads) / problem.n
    return sum(float(np.sum((g - mean) ** 2)) for g in grads) / problem.n


def power_iteration_max_eig(matrix: np.ndarray, iters: int = 5000) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration."""
    rng = np.random.default_rng(0)
    v = rng.standard_normal(matrix.shape[0])
    v /= np.linalg.norm(v)
    value = 0.0
    for _ in range(iters):
        w = matrix @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        value = float(v @ matrix @ v)
    return value
