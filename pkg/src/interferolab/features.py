"""Path features and the linear interferometer model built on them.

Every matrix element is a sum over index paths ``(k0, ..., k_{L-1})`` through
the layers, where ``k0`` indexes layer ``L`` (the output side) and
``k_{L-1}`` indexes layer 1. Along a path the phase exponentials multiply
into a feature ``theta`` and the basis-matrix entries multiply into a
weight ``w``, so ``u_ij = sum_paths w_ij[path] * theta[path]``.

Features are enumerated over all ``N**L`` paths in lexicographic order with
``k0`` varying slowest ("lex-v1"); the same vector serves every ``(i, j)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Architecture, ShapeError, check_phases, complex_from_json, complex_to_json

FEATURE_ORDERING = "lex-v1"


class StaleModelError(ValueError):
    """The model was trained on a different architecture than the one requested."""


def feature_vector(phases) -> np.ndarray:
    """Path features for one ``(L, N)`` configuration or an ``(M, L, N)`` batch."""
    phases = np.asarray(phases, dtype=float)
    if phases.ndim not in (2, 3):
        raise ShapeError(f"phases must be (L, N) or (M, L, N), got shape {phases.shape}")
    if not np.all(np.isfinite(phases)):
        raise ValueError("phases must be finite")
    ph = np.exp(1j * phases)
    n_layers = ph.shape[-2]
    theta = ph[..., n_layers - 1, :]
    for layer in range(n_layers - 2, -1, -1):
        theta = (theta[..., :, None] * ph[..., layer, None, :]).reshape(*theta.shape[:-1], -1)
    return theta


def path_index_grids(modes: int, phase_layers: int) -> np.ndarray:
    """``(L, N**L)`` array: row ``t`` is the tuple position ``k_t`` of each feature."""
    idx = np.indices((modes,) * phase_layers).reshape(phase_layers, -1)
    return idx


@dataclass(frozen=True, eq=False)
class LinearModel:
    """Learned weights, one length-``N**L`` vector per matrix element ``(i, j)``."""

    modes: int
    phase_layers: int
    weights: np.ndarray
    architecture_hash: str = ""

    def __post_init__(self):
        w = np.array(self.weights, dtype=complex)
        dim = self.modes**self.phase_layers
        if w.shape != (self.modes, self.modes, dim):
            raise ShapeError(f"weights have shape {w.shape}, expected {(self.modes, self.modes, dim)}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def feature_dim(self) -> int:
        return self.modes**self.phase_layers

    @classmethod
    def zeros(cls, modes: int, phase_layers: int, architecture_hash: str = "") -> "LinearModel":
        return cls(modes, phase_layers, np.zeros((modes, modes, modes**phase_layers), complex), architecture_hash)

    def check(self, phases, architecture_hash: str | None = None) -> np.ndarray:
        if architecture_hash is not None and architecture_hash != self.architecture_hash:
            raise StaleModelError(
                f"model trained for architecture {self.architecture_hash[:12]}, "
                f"asked to predict for {architecture_hash[:12]}"
            )
        return check_phases((self.phase_layers, self.modes), phases)

    def to_dict(self) -> dict:
        return {
            "modes": self.modes,
            "phase_layers": self.phase_layers,
            "feature_ordering": FEATURE_ORDERING,
            "architecture_hash": self.architecture_hash,
            "weights": [complex_to_json(w) for w in self.weights.reshape(self.modes**2, -1)],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LinearModel":
        ordering = data.get("feature_ordering")
        if ordering != FEATURE_ORDERING:
            raise ValueError(f"unsupported feature ordering {ordering!r}; expected {FEATURE_ORDERING!r}")
        n = int(data["modes"])
        w = complex_from_json(data["weights"]).reshape(n, n, -1)
        return cls(n, int(data["phase_layers"]), w, data.get("architecture_hash", ""))


def predict(model: LinearModel, phases, architecture_hash: str | None = None) -> np.ndarray:
    """Model transformation matrix (or a stack of them for batched phases)."""
    phases = model.check(phases, architecture_hash)
    theta = feature_vector(phases)
    n = model.modes
    flat = theta @ model.weights.reshape(n * n, -1).T
    return flat.reshape(theta.shape[:-1] + (n, n))


def true_weights_from_arch(arch: Architecture) -> LinearModel:
    """Exact weight tensor of an architecture.

    Element ``(i, j)`` carries ``U_{L-1}[k0, k1] ... U_1[k_{L-2}, k_{L-1}]`` on
    paths with ``k0 = i`` and ``k_{L-1} = j`` and zero everywhere else.
    """
    n, n_layers = arch.modes, arch.phase_layers
    # chain[k0, ..., k_t] accumulates basis entries from the output side inwards
    chain = arch.basis[-1]
    for basis in reversed(arch.basis[:-1]):
        chain = chain[..., :, None] * basis
    chain = chain.reshape(n, -1, n)  # (k0, middle paths, k_{L-1})
    w = np.zeros((n, n, n, chain.shape[1], n), dtype=complex)
    for i in range(n):
        for j in range(n):
            w[i, j, i, :, j] = chain[i, :, j]
    return LinearModel(n, n_layers, w.reshape(n, n, -1), arch.hash())


def slice_mask(modes: int, phase_layers: int) -> np.ndarray:
    """Boolean ``(N, N, N**L)`` mask of the paths starting at ``i`` and ending at ``j``."""
    grids = path_index_grids(modes, phase_layers)
    i = np.arange(modes)[:, None, None]
    j = np.arange(modes)[None, :, None]
    return (grids[0][None, None, :] == i) & (grids[-1][None, None, :] == j)


def project_to_slice(model: LinearModel) -> LinearModel:
    """Zero every weight outside the structured ``k0 = i, k_{L-1} = j`` slice."""
    mask = slice_mask(model.modes, model.phase_layers)
    return LinearModel(model.modes, model.phase_layers, np.where(mask, model.weights, 0), model.architecture_hash)


def predict_gradient(model: LinearModel, phases, architecture_hash: str | None = None) -> np.ndarray:
    """Analytic phase derivatives of the prediction.

    Returns an ``(L, N, N, N)`` array ``g`` with ``g[l, p] = dU / dphi[l, p]``
    (layer index ``l`` zero-based, layer 1 first).
    """
    phases = model.check(phases, architecture_hash)
    if phases.ndim != 2:
        raise ShapeError("predict_gradient takes a single (L, N) configuration")
    n, n_layers = model.modes, model.phase_layers
    terms = (model.weights * feature_vector(phases)).reshape((n, n) + (n,) * n_layers)
    grad = np.empty((n_layers, n, n, n), dtype=complex)
    all_axes = tuple(range(2, 2 + n_layers))
    for layer in range(n_layers):
        # layer l (zero-based) sits at tuple position L-1-l
        pos = 2 + n_layers - 1 - layer
        summed = terms.sum(axis=tuple(a for a in all_axes if a != pos))
        grad[layer] = 1j * np.moveaxis(summed, -1, 0)
    return grad
