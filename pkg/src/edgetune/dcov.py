"""Distance covariance and distance correlation for paired scalar samples.

The statistics here use the absolute difference as the distance and the
biased (V-statistic) estimator. Each hardware dimension is correlated with a
metric independently, which is all the tuner needs.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

# dCov^2 values in (-NEG_CLAMP, 0) are round-off from double-centering.
NEG_CLAMP = 1e-12


def _as_vector(values: Sequence[float], name: str = "x") -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {v.shape}")
    if v.size < 2:
        raise ValueError(f"{name} needs at least 2 observations, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite values")
    return v


def _paired(x: Sequence[float], y: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    xv = _as_vector(x, "x")
    yv = _as_vector(y, "y")
    if xv.size != yv.size:
        raise ValueError(f"length mismatch: {xv.size} != {yv.size}")
    return xv, yv


def pairwise_distance_matrix(values: Sequence[float]) -> np.ndarray:
    """Return the n x n matrix of absolute differences |v[i] - v[j]|."""
    v = _as_vector(values, "values")
    return np.abs(v[:, None] - v[None, :])


def double_center(m: np.ndarray) -> np.ndarray:
    """Subtract row and column means from a distance matrix and add back the grand mean."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if m.shape[0] < 2:
        raise ValueError("need at least a 2x2 matrix")
    row = m.mean(axis=1, keepdims=True)
    col = m.mean(axis=0, keepdims=True)
    return m - row - col + m.mean()


def distance_covariance_sq(x: Sequence[float], y: Sequence[float]) -> float:
    """Squared sample distance covariance, clamped at zero."""
    xv, yv = _paired(x, y)
    a = double_center(pairwise_distance_matrix(xv))
    b = double_center(pairwise_distance_matrix(yv))
    value = float(np.mean(a * b))
    if value < 0.0:
        if value > -NEG_CLAMP:
            return 0.0
        # a genuinely negative V-statistic cannot happen for valid input
        raise ArithmeticError(f"negative distance covariance {value!r}")
    return value


def distance_correlation(x: Sequence[float], y: Sequence[float]) -> float:
    """Distance correlation in [0, 1].

    Returns 0 when either input is constant, since there is no variation to
    carry dependence. The computation is symmetric in ``x`` and ``y``.
    """
    xv, yv = _paired(x, y)
    a = double_center(pairwise_distance_matrix(xv))
    b = double_center(pairwise_distance_matrix(yv))
    var_x = float(np.mean(a * a))
    var_y = float(np.mean(b * b))
    if var_x <= NEG_CLAMP or var_y <= NEG_CLAMP:
        return 0.0
    cov = max(float(np.mean(a * b)), 0.0)
    # dCov / sqrt(dVar_x * dVar_y) with dCov = sqrt(dCov^2)
    value = np.sqrt(cov) / np.sqrt(np.sqrt(var_x) * np.sqrt(var_y))
    return float(min(max(value, 0.0), 1.0))


def correlation_weights(
    configs: Sequence[Sequence[float]],
    throughput: Sequence[float],
    power: Sequence[float],
) -> tuple[list[float], list[float]]:
    """Per-dimension dependence of throughput (alpha) and power (beta) on each setting.

    ``configs`` is a sequence of equal-length setting vectors, one per
    observation, aligned with ``throughput`` and ``power``. A dimension that
    never varies in the window, or a window of fewer than two samples, gets
    weight 1.0 so the search still moves along it.
    """
    n = len(configs)
    if n == 0:
        raise ValueError("empty sample window")
    if len(throughput) != n or len(power) != n:
        raise ValueError("configs, throughput and power must have equal length")
    settings = np.asarray(configs, dtype=float)
    dims = settings.shape[1]
    if n < 2:
        return [1.0] * dims, [1.0] * dims

    alpha: list[float] = []
    beta: list[float] = []
    for i in range(dims):
        column = settings[:, i]
        if np.all(column == column[0]):
            alpha.append(1.0)
            beta.append(1.0)
            continue
        alpha.append(distance_correlation(throughput, column))
        beta.append(distance_correlation(power, column))
    return alpha, beta
