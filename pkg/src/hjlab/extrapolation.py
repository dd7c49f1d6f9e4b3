"""Limits and rates from sampled sequences (geometric time grids, log-log fits)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    slope_stderr: float
    n: int


def linear_fit(x, y) -> LinearFit:
    """Ordinary least squares y ≈ intercept + slope·x with the slope's standard error."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two points")
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = x.size - 2
    sxx = float(np.sum((x - x.mean()) ** 2))
    se = math.sqrt(float(resid @ resid) / dof / sxx) if dof > 0 and sxx > 0 else 0.0
    return LinearFit(float(coef[0]), float(coef[1]), se, int(x.size))


def loglog_slope(t, v) -> LinearFit:
    return linear_fit(np.log(t), np.log(v))


def richardson(values, ratio: float, order: float) -> float:
    """Eliminate a c·h^order term from two values at steps h and h/ratio."""
    coarse, fine = values
    w = ratio**order
    return (w * fine - coarse) / (w - 1.0)


def richardson_table(values, h, orders) -> float:
    """Limit h → 0 of values sampled at steps h, removing the given power terms.

    Solves v_j = L + Σ_k c_k h_j^{p_k} exactly (len(orders) + 1 samples) or in
    the least-squares sense when more samples are supplied.
    """
    v = np.asarray(values, dtype=float)
    h = np.asarray(h, dtype=float)
    cols = [np.ones_like(h)] + [h**p for p in orders]
    A = np.column_stack(cols)
    if v.size < A.shape[1]:
        raise ValueError("not enough samples for the requested orders")
    # column scaling keeps the system well conditioned when h spans decades
    scale = np.max(np.abs(A), axis=0)
    coef, *_ = np.linalg.lstsq(A / scale, v, rcond=None)
    return float(coef[0] / scale[0])


def aitken_limit(values) -> float:
    """Δ² limit of the last three terms of a sequence (exact for geometric convergence).

    Falls back to the last term when the second difference vanishes or the
    implied contraction factor is not in (-1, 1).
    """
    x0, x1, x2 = (float(v) for v in np.asarray(values, dtype=float)[-3:])
    d1, d2 = x1 - x0, x2 - x1
    denom = d2 - d1
    if denom == 0.0 or d1 == 0.0:
        return x2
    rho = d2 / d1
    if not -1.0 < rho < 1.0:
        return x2
    return x2 - d2 * d2 / denom


def is_cauchy(values, rel_tol: float, floor: float = 0.0) -> bool:
    """Successive relative changes all within rel_tol (values at or below floor count as converged)."""
    v = np.asarray(values, dtype=float)
    if np.all(np.abs(v) <= floor):
        return True
    scale = np.maximum(np.abs(v[1:]), floor)
    scale = np.where(scale > 0, scale, 1.0)
    return bool(np.all(np.abs(np.diff(v)) <= rel_tol * scale))
