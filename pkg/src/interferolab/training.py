"""Least-squares training of the linear model from tomography data."""

from __future__ import annotations

import time
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .core import ShapeError, TrainingSet
from .features import LinearModel, feature_vector, slice_mask
from .numerics import DEFAULT_RCOND, _pinv_from_svd, numerical_rank


class RankDeficiencyWarning(UserWarning):
    """Fewer independent training samples than features; min-norm solution returned."""


class DivergedError(RuntimeError):
    def __init__(self, message: str, report: "SolverReport"):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Object-feature matrix: row ``m`` is the feature vector of sample ``m``."""

    modes: int
    phase_layers: int
    rows: np.ndarray

    @property
    def m_samples(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]


@dataclass
class SolverReport:
    m_samples: int
    feature_dim: int
    rank_estimate: int
    residual_rms: float
    condition_estimate: float
    wall_time: float
    rank_deficient: bool = False
    solver: str = "pinv"
    epochs: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def build_design_matrix(training: TrainingSet) -> DesignMatrix:
    if len(training) == 0:
        raise ShapeError("training set is empty")
    rows = feature_vector(training.phases)
    return DesignMatrix(training.modes, training.phase_layers, rows)


def _targets(design: DesignMatrix, training: TrainingSet) -> np.ndarray:
    if len(training) != design.m_samples or training.modes != design.modes:
        raise ShapeError("design matrix and training set disagree")
    return training.matrices.reshape(len(training), -1)


def _residual_rms(design: DesignMatrix, w_flat: np.ndarray, targets: np.ndarray) -> float:
    r = design.rows @ w_flat - targets
    return float(np.sqrt(np.mean(np.abs(r) ** 2)))


def solve_pinv(
    design: DesignMatrix,
    training: TrainingSet,
    rcond: float = DEFAULT_RCOND,
    reduced: bool = False,
) -> tuple[LinearModel, SolverReport]:
    """Analytic least-squares weights for every matrix element at once.

    The pseudoinverse ``F`` of the design matrix is formed once from its SVD
    and applied to all ``N**2`` right-hand sides. Under-determined systems
    yield the minimum-norm solution and a :class:`RankDeficiencyWarning`.

    With ``reduced=True`` each element ``(i, j)`` is fitted only on the
    ``N**(L-2)`` paths that start at ``i`` and end at ``j``, one small
    pseudoinverse per element.
    """
    start = time.perf_counter()
    targets = _targets(design, training)
    n = design.modes
    theta = design.rows

    if not reduced:
        u, s, vh = np.linalg.svd(theta, full_matrices=False)
        f = _pinv_from_svd(u, s, vh, rcond)
        w_flat = f @ targets
        rank = numerical_rank(s, rcond)
        full = design.dim
    else:
        mask = slice_mask(n, design.phase_layers).reshape(n * n, -1)
        w_flat = np.zeros((design.dim, n * n), dtype=complex)
        s = np.linalg.svd(theta[:, mask[0]], compute_uv=False)
        rank = design.dim
        for e in range(n * n):
            cols = mask[e]
            sub = theta[:, cols]
            u_e, s_e, vh_e = np.linalg.svd(sub, full_matrices=False)
            w_flat[cols, e] = _pinv_from_svd(u_e, s_e, vh_e, rcond) @ targets[:, e]
            rank = min(rank, numerical_rank(s_e, rcond))
        full = int(mask[0].sum())

    kept = s[s > rcond * s[0]] if s.size and s[0] > 0 else s[:0]
    cond = float(kept[0] / kept[-1]) if kept.size else float("inf")
    report = SolverReport(
        m_samples=design.m_samples,
        feature_dim=full,
        rank_estimate=rank,
        residual_rms=_residual_rms(design, w_flat, targets),
        condition_estimate=cond,
        wall_time=time.perf_counter() - start,
        rank_deficient=rank < full,
        solver="pinv-reduced" if reduced else "pinv",
    )
    if report.rank_deficient:
        warnings.warn(
            f"design matrix has rank {rank} < {full} features "
            f"({design.m_samples} samples); returning the minimum-norm solution",
            RankDeficiencyWarning,
            stacklevel=2,
        )
    model = LinearModel(n, design.phase_layers, w_flat.T.reshape(n, n, -1), training.architecture_hash)
    return model, report


@dataclass
class IterativeConfig:
    """Mini-batch gradient descent settings; ``None`` picks the defaults.

    Defaults: ``learning_rate = 0.1 / M``, ``batch_size = min(M, 64)``.
    """

    learning_rate: float | None = None
    batch_size: int | None = None
    epochs: int = 200
    seed: int = 0
    initial_weights: np.ndarray | None = None


def solve_iterative(
    design: DesignMatrix, training: TrainingSet, config: IterativeConfig | None = None
) -> tuple[LinearModel, SolverReport]:
    """Minimize the mean squared training residual by (stochastic) gradient descent.

    Each step moves the weights along ``-Theta_b^H (Theta_b W - U_b)`` for a
    shuffled mini-batch ``b``; ``batch_size = M`` gives plain gradient descent.
    """
    config = config or IterativeConfig()
    start = time.perf_counter()
    targets = _targets(design, training)
    m = design.m_samples
    n = design.modes
    lr = config.learning_rate if config.learning_rate is not None else 0.1 / m
    batch = config.batch_size if config.batch_size is not None else min(m, 64)
    if config.epochs < 1:
        raise ValueError("epochs must be at least 1")
    if lr <= 0:
        raise ValueError("learning_rate must be positive")
    if not 1 <= batch <= m:
        raise ValueError(f"batch_size must lie in [1, {m}]")

    theta = design.rows
    if config.initial_weights is None:
        w = np.zeros((design.dim, n * n), dtype=complex)
    else:
        w = np.array(config.initial_weights, dtype=complex).reshape(n * n, -1).T.copy()

    def loss(w):
        return float(np.sum(np.abs(theta @ w - targets) ** 2) / m)

    initial = loss(w)
    rng = np.random.default_rng(config.seed)
    current = initial
    for epoch in range(config.epochs):
        order = rng.permutation(m) if batch < m else np.arange(m)
        for lo in range(0, m, batch):
            idx = order[lo : lo + batch]
            tb = theta[idx]
            w -= lr * (tb.conj().T @ (tb @ w - targets[idx]))
        current = loss(w)
        if not np.isfinite(current) or current > 1e6 * max(initial, 1e-300):
            report = _iterative_report(design, w, targets, start, epoch + 1)
            raise DivergedError(
                f"gradient descent diverged at epoch {epoch + 1} (loss {current:.3e}, initial {initial:.3e})",
                report,
            )

    report = _iterative_report(design, w, targets, start, config.epochs)
    model = LinearModel(n, design.phase_layers, w.T.reshape(n, n, -1), training.architecture_hash)
    return model, report


def _iterative_report(design, w, targets, start, epochs):
    return SolverReport(
        m_samples=design.m_samples,
        feature_dim=design.dim,
        rank_estimate=-1,
        residual_rms=_residual_rms(design, w, targets),
        condition_estimate=float("nan"),
        wall_time=time.perf_counter() - start,
        solver="iterative",
        epochs=epochs,
    )


def training_loss(model: LinearModel, training: TrainingSet) -> float:
    """Mean over samples of the squared Frobenius residual ``||W theta - U||^2``."""
    if (model.modes, model.phase_layers) != (training.modes, training.phase_layers):
        raise ShapeError("model and training set have different dimensions")
    theta = feature_vector(training.phases)
    pred = theta @ model.weights.reshape(model.modes**2, -1).T
    resid = pred - training.matrices.reshape(len(training), -1)
    return float(np.sum(np.abs(resid) ** 2) / len(training))
