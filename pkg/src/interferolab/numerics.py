"""Shared numerical kernels: SVD pseudoinverse, BFGS and power-law fitting."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

DEFAULT_RCOND = 1e-12


def pseudoinverse(a: np.ndarray, rcond: float = DEFAULT_RCOND) -> np.ndarray:
    """Moore-Penrose pseudoinverse through the singular value decomposition.

    Singular values below ``rcond * sigma_max`` are treated as exact zeros.
    """
    if not 0.0 < rcond < 1.0:
        raise ValueError(f"rcond must lie in (0, 1), got {rcond}")
    a = np.asarray(a)
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    return _pinv_from_svd(u, s, vh, rcond)


def _pinv_from_svd(u, s, vh, rcond):
    if s.size == 0:
        return np.zeros((vh.shape[1], u.shape[0]), dtype=np.result_type(u, vh))
    cutoff = rcond * s[0]
    keep = s > cutoff
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return (vh.conj().T * s_inv) @ u.conj().T


def numerical_rank(s: np.ndarray, rcond: float = DEFAULT_RCOND) -> int:
    """Number of singular values above ``rcond * sigma_max``."""
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rcond * s[0]))


class BFGSResult(NamedTuple):
    x: np.ndarray
    fun: float
    iterations: int
    converged: bool


def bfgs_minimize(
    fun: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0: np.ndarray,
    max_iters: int = 500,
    grad_tol: float = 1e-10,
    c1: float = 1e-4,
    shrink: float = 0.5,
    max_backtracks: int = 60,
) -> BFGSResult:
    """Minimize ``fun`` with BFGS and a backtracking Armijo line search.

    ``fun(x)`` returns ``(f, grad)``. Every accepted step satisfies the Armijo
    sufficient-decrease condition, so the objective never increases. The
    iteration stops when the gradient max-norm drops below ``grad_tol``
    (``converged=True``), after ``max_iters`` quasi-Newton updates, or when the
    line search cannot make progress.

    A non-finite objective or gradient at an accepted point ends the run and
    returns the best point seen with ``converged=False``.
    """
    x = np.array(x0, dtype=float).ravel()
    f, g = fun(x)
    f = float(f)
    g = np.asarray(g, dtype=float)
    if not (math.isfinite(f) and np.all(np.isfinite(g))):
        return BFGSResult(x, f, 0, False)

    n = x.size
    h = np.eye(n)
    first_step = True
    for it in range(max_iters):
        if np.max(np.abs(g), initial=0.0) < grad_tol:
            return BFGSResult(x, f, it, True)

        p = -h @ g
        slope = g @ p
        if slope >= 0.0:
            # lost positive definiteness; fall back to steepest descent
            h = np.eye(n)
            p = -g
            slope = -(g @ g)

        alpha = 1.0
        if first_step:
            alpha = min(1.0, 1.0 / max(np.max(np.abs(g)), 1e-300))
        accepted = False
        for _ in range(max_backtracks):
            x_new = x + alpha * p
            f_new, g_new = fun(x_new)
            f_new = float(f_new)
            if math.isfinite(f_new) and f_new <= f + c1 * alpha * slope:
                accepted = True
                break
            alpha *= shrink
        if not accepted:
            return BFGSResult(x, f, it, False)

        g_new = np.asarray(g_new, dtype=float)
        if not np.all(np.isfinite(g_new)):
            return BFGSResult(x_new, f_new, it + 1, False)

        s = x_new - x
        y = g_new - g
        sy = s @ y
        if sy > 1e-14 * max(np.sqrt((s @ s) * (y @ y)), 1e-300):
            if first_step:
                h = np.eye(n) * (sy / (y @ y))
            rho = 1.0 / sy
            hy = h @ y
            h = (h - rho * (np.outer(s, hy) + np.outer(hy, s))
                 + (rho * rho * (y @ hy) + rho) * np.outer(s, s))
            first_step = False
        x, f, g = x_new, f_new, g_new

    converged = bool(np.max(np.abs(g), initial=0.0) < grad_tol)
    return BFGSResult(x, f, max_iters, converged)


@dataclass(frozen=True)
class PowerLawFit:
    """``y = amplitude * m ** (-exponent)`` fitted on log-log axes."""

    amplitude: float
    exponent: float
    stderr_exponent: float

    def __call__(self, m):
        return self.amplitude * np.asarray(m, dtype=float) ** (-self.exponent)


def fit_power_law(points: Sequence[tuple[float, float]]) -> PowerLawFit:
    """Ordinary least squares of ``log y`` on ``log m``.

    The exponent is minus the slope; its standard error is the usual OLS
    slope error ``sqrt(SSR / (n - 2) / Sxx)``.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be a sequence of (m, y) pairs")
    if len(pts) < 3:
        raise ValueError("power-law fit needs at least 3 points")
    if not np.all(np.isfinite(pts)) or np.any(pts <= 0):
        raise ValueError("power-law fit requires finite positive m and y")

    lx = np.log(pts[:, 0])
    ly = np.log(pts[:, 1])
    xm = lx.mean()
    ym = ly.mean()
    sxx = np.sum((lx - xm) ** 2)
    if sxx == 0.0:
        raise ValueError("power-law fit needs at least two distinct m values")
    slope = np.sum((lx - xm) * (ly - ym)) / sxx
    intercept = ym - slope * xm
    resid = ly - (intercept + slope * lx)
    dof = len(pts) - 2
    stderr = math.sqrt(max(np.sum(resid**2), 0.0) / dof / sxx)
    return PowerLawFit(float(math.exp(intercept)), float(-slope), float(stderr))
