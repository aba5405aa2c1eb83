"""Layer-by-layer (alternating least squares) tuning against a device.

With every layer but ``l`` frozen the device reduces to
``U = A diag(exp(i phi_l)) B``, so each matrix element is linear in the
``N`` phase exponentials of that layer:
``u_ij = sum_k c[i, k, j] exp(i phi_l[k])``. The tuner fits ``c`` from a few
tomography queries, minimizes the local model against the target with a
handful of BFGS updates, commits the new layer phases and moves on.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import (
    TWO_PI,
    Architecture,
    ShapeError,
    _as_rng,
    add_tomography_noise,
    check_phases,
    forward_unitary,
)
from .numerics import DEFAULT_RCOND, bfgs_minimize, pseudoinverse
from .programming import frobenius_loss


class UnderdeterminedError(ValueError):
    """Too few tomography samples to fit a single-layer model."""


@dataclass(eq=False)
class DeviceOracle:
    """Simulated physical interferometer with hidden basis matrices.

    ``queries`` counts tomography requests (noisy channel); ``evaluations``
    counts noiseless reads used only for bookkeeping.
    """

    arch: Architecture
    phases: np.ndarray
    noise_eps: float = 0.0
    queries: int = 0
    evaluations: int = 0

    def __post_init__(self):
        self.phases = check_phases(self.arch, self.phases).copy()
        if self.noise_eps < 0:
            raise ValueError("noise_eps must be nonnegative")

    @property
    def modes(self) -> int:
        return self.arch.modes

    @property
    def phase_layers(self) -> int:
        return self.arch.phase_layers

    def set_layer(self, layer: int, values) -> None:
        """Commit new phases for ``layer`` (1-based)."""
        values = np.asarray(values, dtype=float)
        if values.shape != (self.modes,):
            raise ShapeError(f"layer phases must have shape ({self.modes},)")
        self.phases[layer - 1] = values

    def evaluate(self, phases=None) -> np.ndarray:
        """Noiseless transformation at ``phases`` (default: committed phases)."""
        self.evaluations += 1
        return forward_unitary(self.arch, self.phases if phases is None else phases)

    def _tomography(self, phases: np.ndarray, rng) -> np.ndarray:
        exact = forward_unitary(self.arch, phases)
        self.queries += 1 if phases.ndim == 2 else phases.shape[0]
        return add_tomography_noise(exact, self.noise_eps, rng)


def tomography_query(device: DeviceOracle, phases, rng) -> np.ndarray:
    """One simulated tomography measurement of the device at ``phases``."""
    phases = check_phases(device.arch, phases)
    if phases.ndim != 2:
        raise ShapeError("tomography_query takes a single (L, N) configuration")
    return device._tomography(phases, _as_rng(rng))


@dataclass(frozen=True, eq=False)
class LocalLayerModel:
    """``u_ij(phi) = sum_k coefficients[i, k, j] * exp(i phi_k)`` for one layer."""

    layer: int
    coefficients: np.ndarray

    @property
    def modes(self) -> int:
        return self.coefficients.shape[0]

    def predict(self, layer_phases) -> np.ndarray:
        return np.einsum("ikj,...k->...ij", self.coefficients, np.exp(1j * np.asarray(layer_phases, dtype=float)))

    def loss_and_grad(self, layer_phases, target) -> tuple[float, np.ndarray]:
        """``||predict - target||_F^2`` and its gradient in the layer phases."""
        e = np.exp(1j * np.asarray(layer_phases, dtype=float))
        resid = np.einsum("ikj,k->ij", self.coefficients, e) - target
        grad = 2.0 * np.real(1j * e * np.einsum("ij,ikj->k", resid.conj(), self.coefficients))
        return float(np.sum(np.abs(resid) ** 2)), grad


def fit_local_model(device: DeviceOracle, current, layer: int, m_samples: int, rng,
                    rcond: float = DEFAULT_RCOND) -> LocalLayerModel:
    """Fit the single-layer model of ``layer`` (1-based) around ``current``.

    ``m_samples`` random settings of the layer are drawn uniformly on
    ``[0, 2 pi)`` with all other layers held at ``current``; the incumbent
    setting itself is not among them.
    """
    n = device.modes
    if not 1 <= layer <= device.phase_layers:
        raise ValueError(f"layer must lie in [1, {device.phase_layers}]")
    if m_samples < n:
        raise UnderdeterminedError(f"a {n}-mode layer needs at least {n} samples, got {m_samples}")
    rng = _as_rng(rng)
    current = check_phases(device.arch, current)
    layer_phases = rng.uniform(0.0, TWO_PI, (m_samples, n))
    batch = np.broadcast_to(current, (m_samples,) + current.shape).copy()
    batch[:, layer - 1] = layer_phases
    measured = device._tomography(batch, rng)
    f = pseudoinverse(np.exp(1j * layer_phases), rcond)  # (n, m)
    c = (f @ measured.reshape(m_samples, -1)).reshape(n, n, n)  # (k, i, j)
    return LocalLayerModel(layer, np.ascontiguousarray(c.transpose(1, 0, 2)))


def als_step(local: LocalLayerModel, current_layer_phases, target, bfgs_iters: int = 5,
             grad_tol: float = 1e-12) -> np.ndarray:
    """At most ``bfgs_iters`` BFGS updates of one layer, starting at its current phases."""
    x0 = np.asarray(current_layer_phases, dtype=float)
    target = np.asarray(target, dtype=complex)
    if x0.shape != (local.modes,) or target.shape != (local.modes, local.modes):
        raise ShapeError("layer phases or target do not match the local model")
    f0, g0 = local.loss_and_grad(x0, target)
    if not (np.isfinite(f0) and np.all(np.isfinite(g0))):
        warnings.warn("non-finite local gradient; keeping the current phases", RuntimeWarning, stacklevel=2)
        return x0.copy()
    res = bfgs_minimize(lambda x: local.loss_and_grad(x, target), x0, max_iters=bfgs_iters, grad_tol=grad_tol)
    if not res.fun <= f0:
        return x0.copy()
    return res.x


@dataclass
class TuneConfig:
    passes: int = 1000
    m_samples_per_layer: int | None = None
    bfgs_iters: int = 5
    seed: int = 0
    initial_phases: np.ndarray | None = None


@dataclass
class TuneRecord:
    pass_index: int
    layer: int
    iteration: int
    loss: float


@dataclass
class TuneTrace:
    records: list[TuneRecord] = field(default_factory=list)
    initial_loss: float = float("nan")
    final_phases: np.ndarray | None = None

    @property
    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.records])

    @property
    def final_loss(self) -> float:
        return self.records[-1].loss if self.records else self.initial_loss

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["pass", "layer", "iteration", "loss"])
            for r in self.records:
                w.writerow([r.pass_index, r.layer, r.iteration, repr(r.loss)])


def default_samples_per_layer(modes: int, noise_eps: float) -> int:
    return modes + 1 if noise_eps == 0 else 10 * modes


def tune(device: DeviceOracle, target, config: TuneConfig | None = None) -> TuneTrace:
    """Cycle ALS over layers ``1..L`` for ``config.passes`` passes.

    After every layer update the committed phases are scored with the
    noiseless normalized Frobenius loss against ``target``.
    """
    config = config or TuneConfig()
    target = np.asarray(target, dtype=complex)
    n, n_layers = device.modes, device.phase_layers
    if target.shape != (n, n):
        raise ShapeError(f"target has shape {target.shape}, expected {(n, n)}")
    m = config.m_samples_per_layer or default_samples_per_layer(n, device.noise_eps)
    rng = np.random.default_rng(config.seed)
    if config.initial_phases is None:
        device.phases = rng.uniform(0.0, TWO_PI, (n_layers, n))
    else:
        device.phases = check_phases(device.arch, config.initial_phases).copy()

    trace = TuneTrace(initial_loss=frobenius_loss(device.evaluate(), target))
    iteration = 0
    for p in range(config.passes):
        for layer in range(1, n_layers + 1):
            local = fit_local_model(device, device.phases, layer, m, rng)
            new = als_step(local, device.phases[layer - 1], target, config.bfgs_iters)
            device.set_layer(layer, new)
            trace.records.append(TuneRecord(p, layer, iteration, frobenius_loss(device.evaluate(), target)))
            iteration += 1
    trace.final_phases = device.phases.copy()
    return trace
