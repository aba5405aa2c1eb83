"""Programming a trained model: find phases that realize a target matrix."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import TWO_PI, ShapeError, derive_rng
from .features import LinearModel, predict, predict_gradient
from .numerics import bfgs_minimize

log = logging.getLogger(__name__)


def frobenius_loss(a, b) -> float:
    """``(1/N) * sum |a_ij - b_ij|^2`` for ``N x N`` (or ``N x K``) matrices."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.sum(np.abs(a - b) ** 2) / a.shape[0])


@dataclass
class ProgramConfig:
    max_iters: int = 500
    restarts: int = 5
    tol: float = 1e-10
    seed: int = 0


@dataclass
class ProgrammingResult:
    phases: np.ndarray
    final_loss: float
    iterations_used: int
    restarts_used: int
    converged: bool

    @property
    def normalized_loss(self) -> float:
        return self.final_loss / self.phases.shape[1]

    def to_dict(self) -> dict:
        return {
            "phases": self.phases.tolist(),
            "final_loss": self.final_loss,
            "normalized_loss": self.normalized_loss,
            "converged": self.converged,
            "iterations_used": self.iterations_used,
            "restarts_used": self.restarts_used,
        }


def model_objective(model: LinearModel, target: np.ndarray):
    """``phi -> (||predict(phi) - target||_F^2, gradient)`` over flattened phases."""
    shape = (model.phase_layers, model.modes)

    def fun(x):
        phases = x.reshape(shape)
        resid = predict(model, phases) - target
        dU = predict_gradient(model, phases)
        grad = 2.0 * np.real(np.einsum("ij,lpij->lp", resid.conj(), dU))
        return float(np.sum(np.abs(resid) ** 2)), grad.ravel()

    return fun


def program_phases(model: LinearModel, target, config: ProgramConfig | None = None) -> ProgrammingResult:
    """Best of ``config.restarts`` BFGS runs from uniform-random phases.

    The minimized loss is the unnormalized ``||U_model - target||_F^2``.
    Restart ``r`` draws its starting point from the child stream
    ``(seed, r)``, so adding restarts never changes the earlier ones.
    """
    config = config or ProgramConfig()
    target = np.asarray(target, dtype=complex)
    if target.shape != (model.modes, model.modes):
        raise ShapeError(f"target has shape {target.shape}, expected {(model.modes, model.modes)}")
    if config.restarts < 1:
        raise ValueError("restarts must be at least 1")
    fun = model_objective(model, target)
    shape = (model.phase_layers, model.modes)

    best = None
    total_iters = 0
    for r in range(config.restarts):
        x0 = derive_rng(config.seed, r).uniform(0.0, TWO_PI, shape).ravel()
        res = bfgs_minimize(fun, x0, max_iters=config.max_iters, grad_tol=config.tol)
        total_iters += res.iterations
        if not np.isfinite(res.fun):
            log.warning("restart %d aborted with a non-finite loss", r)
            continue
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        raise FloatingPointError("every restart produced a non-finite loss")
    return ProgrammingResult(
        phases=best.x.reshape(shape),
        final_loss=float(best.fun),
        iterations_used=total_iters,
        restarts_used=config.restarts,
        converged=bool(best.converged),
    )
