"""Interferometer data model, exact forward transformation and sampling.

An interferometer with ``N`` modes and ``L`` phase layers implements

    U = Phi_L U_{L-1} ... Phi_2 U_1 Phi_1,   Phi_l = diag(exp(i phi_l)),

where the ``U_l`` are fixed mode-mixing ("basis") unitaries. Phase
configurations are real ``(L, N)`` arrays with row 0 holding layer 1, the
layer that acts first on the input.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi
UNITARY_TOL = 1e-10


class ShapeError(ValueError):
    """Array dimensions disagree with the interferometer they are used with."""


def derive_rng(master_seed: int, *path: int) -> np.random.Generator:
    """Child generator for a sub-task identified by ``path``.

    The stream depends only on ``(master_seed, *path)``, never on execution
    order or worker count.
    """
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *map(int, path)]))


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def max_unitarity_error(u: np.ndarray) -> float:
    u = np.asarray(u)
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[1]))))


@dataclass(frozen=True, eq=False)
class Architecture:
    """Mode count, phase-layer count and the ``L - 1`` basis unitaries."""

    modes: int
    phase_layers: int
    basis: tuple[np.ndarray, ...]

    def __post_init__(self):
        if self.modes < 1:
            raise ValueError("modes must be positive")
        if self.phase_layers < 2:
            raise ValueError("an interferometer needs at least 2 phase layers")
        basis = tuple(np.array(b, dtype=complex) for b in self.basis)
        if len(basis) != self.phase_layers - 1:
            raise ShapeError(
                f"expected {self.phase_layers - 1} basis matrices, got {len(basis)}"
            )
        for k, b in enumerate(basis):
            if b.shape != (self.modes, self.modes):
                raise ShapeError(f"basis matrix {k} has shape {b.shape}")
            if not np.all(np.isfinite(b)):
                raise ValueError(f"basis matrix {k} has non-finite entries")
            err = max_unitarity_error(b)
            if err >= UNITARY_TOL:
                raise ValueError(f"basis matrix {k} is not unitary (error {err:.2e})")
            b.setflags(write=False)
        object.__setattr__(self, "basis", basis)

    @property
    def phase_shape(self) -> tuple[int, int]:
        return (self.phase_layers, self.modes)

    def to_dict(self) -> dict:
        return {
            "modes": self.modes,
            "phase_layers": self.phase_layers,
            "basis": [complex_to_json(b) for b in self.basis],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Architecture":
        return cls(
            modes=int(data["modes"]),
            phase_layers=int(data["phase_layers"]),
            basis=tuple(complex_from_json(b) for b in data["basis"]),
        )

    def hash(self) -> str:
        """SHA-256 of the canonical JSON serialization."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def __eq__(self, other):
        if not isinstance(other, Architecture):
            return NotImplemented
        return (
            self.modes == other.modes
            and self.phase_layers == other.phase_layers
            and all(np.array_equal(a, b) for a, b in zip(self.basis, other.basis))
        )

    __hash__ = None


def complex_to_json(a: np.ndarray) -> list:
    """Nested lists with each complex entry stored as ``[re, im]``."""
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def complex_from_json(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.shape[-1] != 2:
        raise ValueError("complex values must be serialized as [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def check_phases(arch_or_shape, phases) -> np.ndarray:
    """Return ``phases`` as a float array after shape and finiteness checks."""
    shape = arch_or_shape.phase_shape if isinstance(arch_or_shape, Architecture) else tuple(arch_or_shape)
    phases = np.asarray(phases, dtype=float)
    if phases.shape[-2:] != shape:
        raise ShapeError(f"phases have shape {phases.shape}, expected (..., {shape[0]}, {shape[1]})")
    if not np.all(np.isfinite(phases)):
        raise ValueError("phases must be finite")
    return phases


def forward_unitary(arch: Architecture, phases) -> np.ndarray:
    """Exact transformation matrix at the given phases.

    ``phases`` may carry leading batch dimensions, in which case a stack of
    matrices is returned.
    """
    phases = check_phases(arch, phases)
    ph = np.exp(1j * phases)
    # Phi_1 as a (batched) diagonal; every subsequent layer scales rows
    u = ph[..., 0, :, None] * np.eye(arch.modes)
    for layer, basis in enumerate(arch.basis, start=1):
        u = ph[..., layer, :, None] * (basis @ u)
    return u


def add_tomography_noise(u, eps: float, rng) -> np.ndarray:
    """Add i.i.d. complex Gaussian noise ``eps / sqrt(2) * (x + i y)`` entrywise."""
    if eps < 0 or not np.isfinite(eps):
        raise ValueError(f"noise level must be a finite nonnegative number, got {eps}")
    u = np.asarray(u, dtype=complex)
    if eps == 0:
        return u.copy()
    rng = _as_rng(rng)
    z = rng.standard_normal(u.shape + (2,))
    return u + (eps / np.sqrt(2.0)) * (z[..., 0] + 1j * z[..., 1])


def sample_haar_unitary(n: int, rng) -> np.ndarray:
    """Haar-random ``n x n`` unitary from the QR of a complex Ginibre matrix."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = _as_rng(rng)
    z = rng.standard_normal((n, n, 2))
    q, r = np.linalg.qr((z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0))
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def sample_random_arch(n: int, l: int, rng) -> Architecture:
    if l < 2:
        raise ValueError("an interferometer needs at least 2 phase layers")
    rng = _as_rng(rng)
    return Architecture(n, l, tuple(sample_haar_unitary(n, rng) for _ in range(l - 1)))


def sample_uniform_phases(n: int, l: int, rng, size: int | None = None) -> np.ndarray:
    """Phases i.i.d. uniform on ``[0, 2 pi)``; ``size`` prepends a batch axis."""
    rng = _as_rng(rng)
    shape = (l, n) if size is None else (size, l, n)
    return rng.uniform(0.0, TWO_PI, shape)


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """Phase configurations paired with measured (possibly noisy) matrices."""

    architecture_hash: str
    phases: np.ndarray
    matrices: np.ndarray
    noise_eps: float = 0.0

    def __post_init__(self):
        phases = np.array(self.phases, dtype=float)
        matrices = np.array(self.matrices, dtype=complex)
        if phases.ndim != 3 or phases.shape[0] == 0:
            raise ShapeError("phases must be a nonempty (M, L, N) array")
        m, _, n = phases.shape
        if matrices.shape != (m, n, n):
            raise ShapeError(f"matrices have shape {matrices.shape}, expected {(m, n, n)}")
        if not (np.all(np.isfinite(phases)) and np.all(np.isfinite(matrices))):
            raise ValueError("training data must be finite")
        if self.noise_eps < 0:
            raise ValueError("noise_eps must be nonnegative")
        phases.setflags(write=False)
        matrices.setflags(write=False)
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "matrices", matrices)

    def __len__(self) -> int:
        return self.phases.shape[0]

    @property
    def modes(self) -> int:
        return self.phases.shape[2]

    @property
    def phase_layers(self) -> int:
        return self.phases.shape[1]

    @property
    def samples(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return list(zip(self.phases, self.matrices))

    def subset(self, m: int) -> "TrainingSet":
        """The first ``m`` samples."""
        return TrainingSet(self.architecture_hash, self.phases[:m], self.matrices[:m], self.noise_eps)

    def to_dict(self) -> dict:
        return {
            "architecture_hash": self.architecture_hash,
            "noise_eps": self.noise_eps,
            "samples": [
                {"phases": p.tolist(), "matrix": complex_to_json(u)}
                for p, u in zip(self.phases, self.matrices)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainingSet":
        samples = data["samples"]
        if not samples:
            raise ShapeError("training set is empty")
        return cls(
            architecture_hash=data["architecture_hash"],
            phases=np.array([s["phases"] for s in samples], dtype=float),
            matrices=np.array([complex_from_json(s["matrix"]) for s in samples]),
            noise_eps=float(data["noise_eps"]),
        )


def generate_training_set(arch: Architecture, m: int, eps: float, rng) -> TrainingSet:
    """``m`` uniform-random phase configurations and their noisy transformations."""
    if m < 1:
        raise ValueError("training set size must be at least 1")
    rng = _as_rng(rng)
    phases = sample_uniform_phases(arch.modes, arch.phase_layers, rng, size=m)
    exact = forward_unitary(arch, phases)
    return TrainingSet(arch.hash(), phases, add_tomography_noise(exact, eps, rng), eps)


def load_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def save_json(data: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh)
        fh.write("\n")
