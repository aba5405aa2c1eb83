"""Scripted sweeps reproducing the learning and tuning experiments.

Every trial draws from its own child stream ``derive_rng(seed, trial)`` and
results are reduced by trial index, so outputs depend only on the config and
master seed, never on the number of workers.

Within a learning trial the architecture, the phase draws and the
standardized noise are shared across the whole ``(M, eps)`` grid: the
training set of size ``M`` is the first ``M`` draws and the noise at level
``eps`` is ``eps`` times one fixed standard complex Gaussian array.
"""

from __future__ import annotations

import csv
import json
import os
import subprocess
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .core import derive_rng, forward_unitary, sample_random_arch, sample_uniform_phases
from .features import feature_vector
from .layerwise import DeviceOracle, TuneConfig, tune
from .numerics import DEFAULT_RCOND, PowerLawFit, _pinv_from_svd, fit_power_law
from .training import RankDeficiencyWarning

EXPERIMENTS = ("fig4", "fig5", "fig6", "fig7", "fig8")
THREADS_ENV = "INTERFEROLAB_THREADS"


@dataclass
class ExperimentConfig:
    experiment: str
    modes: int = 3
    layers: int = 4
    sample_sizes: list[int] = field(default_factory=list)
    noise_levels: list[float] = field(default_factory=list)
    trials: int = 100
    seed: int = 0
    out: str = "results"
    test_size: int = 20
    # fig6: one curve per mode count, L = N + 1, M = 2 N^L
    modes_grid: list[int] = field(default_factory=list)
    trials_grid: list[int] = field(default_factory=list)
    # fig7 / fig8
    passes: int = 1000
    m_per_layer: int | None = None
    bfgs_iters: int = 5
    workers: int | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        counts = [self.modes, self.layers, self.trials, self.test_size, self.passes, self.bfgs_iters]
        counts += list(self.sample_sizes) + list(self.modes_grid) + list(self.trials_grid)
        if self.m_per_layer is not None:
            counts.append(self.m_per_layer)
        if any(int(c) < 1 for c in counts):
            raise ValueError("all counts must be positive")
        if any(e < 0 for e in self.noise_levels):
            raise ValueError("noise levels must be nonnegative")
        if self.experiment in ("fig4", "fig5") and not (self.sample_sizes and self.noise_levels):
            raise ValueError(f"{self.experiment} needs nonempty sample_sizes and noise_levels")
        if self.experiment == "fig6":
            if not (self.modes_grid and self.noise_levels):
                raise ValueError("fig6 needs nonempty modes_grid and noise_levels")
            if self.trials_grid and len(self.trials_grid) != len(self.modes_grid):
                raise ValueError("trials_grid must match modes_grid")
        if self.experiment == "fig5" and min(self.sample_sizes) < self.modes**self.layers:
            raise ValueError("fig5 sweeps must lie entirely above N^L")
        if self.experiment in ("fig7", "fig8") and not self.noise_levels:
            raise ValueError(f"{self.experiment} needs at least one noise level")
        if self.experiment == "fig7" and any(e != 0 for e in self.noise_levels):
            raise ValueError("fig7 is noiseless")
        if self.experiment == "fig8" and any(e <= 0 for e in self.noise_levels):
            raise ValueError("fig8 needs positive noise levels")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**data)


def default_config(experiment: str, paper_scale: bool = False, **overrides) -> ExperimentConfig:
    """Desk-scale defaults; ``paper_scale`` restores the published trial counts."""
    if experiment == "fig4":
        if paper_scale:
            base = dict(modes=4, layers=5, trials=1000,
                        sample_sizes=[256, 512, 768, 960, 1000, 1023, 1024, 1100, 1280, 1536, 2048])
        else:
            base = dict(modes=3, layers=4, trials=100,
                        sample_sizes=[20, 40, 60, 70, 75, 80, 81, 90, 100, 120, 162])
        base["noise_levels"] = [0.0, 0.01, 0.05, 0.1]
    elif experiment == "fig5":
        base = dict(modes=3, layers=4, trials=1000 if paper_scale else 100,
                    sample_sizes=[162, 324, 648, 1296, 2592], noise_levels=[0.01, 0.05, 0.1])
    elif experiment == "fig6":
        base = dict(modes_grid=[2, 3, 4], noise_levels=[0.0, 0.01, 0.02, 0.05, 0.1, 0.2],
                    trials_grid=[10000, 1000, 1000] if paper_scale else [1000, 100, 100])
    elif experiment == "fig7":
        base = dict(modes=4, layers=5, trials=50 if paper_scale else 10, noise_levels=[0.0])
    elif experiment == "fig8":
        base = dict(modes=5, layers=6, trials=50 if paper_scale else 10, noise_levels=[0.01, 0.05, 0.1])
    else:
        raise ValueError(f"unknown experiment {experiment!r}")
    base.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(experiment=experiment, **base)


def worker_count(requested: int | None = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def parallel_map(fn: Callable, tasks: Sequence, workers: int | None = None) -> list:
    """Ordered map over ``tasks``; results come back in task order."""
    n = min(worker_count(workers), len(tasks)) if tasks else 1
    if n <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * n))))


@dataclass
class CurveData:
    sweep: list[float]
    mean_loss: list[float]
    stderr_loss: list[float]
    trials: list[int]
    median_loss: list[float] = field(default_factory=list)
    label: str = ""

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sweep_value", "mean_loss", "stderr_loss", "trials"])
            for row in zip(self.sweep, self.mean_loss, self.stderr_loss, self.trials):
                w.writerow([repr(row[0]), repr(row[1]), repr(row[2]), row[3]])


def _curve(sweep, losses: np.ndarray, label: str) -> CurveData:
    """``losses`` has shape (trials, len(sweep))."""
    t = losses.shape[0]
    stderr = losses.std(axis=0, ddof=1) / np.sqrt(t) if t > 1 else np.zeros(losses.shape[1])
    return CurveData(
        sweep=list(sweep),
        mean_loss=losses.mean(axis=0).tolist(),
        stderr_loss=stderr.tolist(),
        trials=[t] * losses.shape[1],
        median_loss=np.median(losses, axis=0).tolist(),
        label=label,
    )


# --- all-layers learning ------------------------------------------------------


def learning_trial(task) -> np.ndarray:
    """Held-out losses for one random device over the ``(eps, M)`` grid.

    Returns an array of shape ``(len(noise_levels), len(sample_sizes))``.
    """
    seed, stream, trial, n, n_layers, sample_sizes, noise_levels, test_size = task
    rng = derive_rng(seed, *stream, trial)
    arch = sample_random_arch(n, n_layers, rng)
    m_max = max(sample_sizes)
    phases = sample_uniform_phases(n, n_layers, rng, size=m_max)
    exact = forward_unitary(arch, phases).reshape(m_max, -1)
    z = rng.standard_normal((m_max, n * n, 2))
    noise = (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)
    test_phases = sample_uniform_phases(n, n_layers, rng, size=test_size)
    test_theta = feature_vector(test_phases)
    test_exact = forward_unitary(arch, test_phases).reshape(test_size, -1)
    theta = feature_vector(phases)

    out = np.empty((len(noise_levels), len(sample_sizes)))
    for b, m in enumerate(sample_sizes):
        u, s, vh = np.linalg.svd(theta[:m], full_matrices=False)
        f = _pinv_from_svd(u, s, vh, DEFAULT_RCOND)
        w_exact = f @ exact[:m]
        w_noise = f @ noise[:m]
        pred_exact = test_theta @ w_exact - test_exact
        pred_noise = test_theta @ w_noise
        for a, eps in enumerate(noise_levels):
            resid = pred_exact + eps * pred_noise
            out[a, b] = np.mean(np.sum(np.abs(resid) ** 2, axis=1)) / n
    return out


def _learning_grid(seed, trials, n, n_layers, sample_sizes, noise_levels, test_size, workers, stream=()):
    tasks = [(seed, tuple(stream), t, n, n_layers, tuple(sample_sizes), tuple(noise_levels), test_size)
             for t in range(trials)]
    return np.stack(parallel_map(learning_trial, tasks, workers))  # (trials, eps, M)


def run_fig4(config: ExperimentConfig) -> dict[float, CurveData]:
    """Held-out loss vs training size ``M`` for each noise level."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankDeficiencyWarning)
        losses = _learning_grid(config.seed, config.trials, config.modes, config.layers,
                                config.sample_sizes, config.noise_levels, config.test_size, config.workers)
    return {eps: _curve(config.sample_sizes, losses[:, a, :], f"eps={eps:g}")
            for a, eps in enumerate(config.noise_levels)}


def run_fig5(config: ExperimentConfig) -> tuple[dict[float, CurveData], dict[float, PowerLawFit]]:
    """Loss decay well above threshold and its power-law fit per noise level."""
    curves = run_fig4(config)
    fits = {eps: fit_power_law(list(zip(c.sweep, c.mean_loss))) for eps, c in curves.items()}
    return curves, fits


def fig6_sample_size(modes: int) -> int:
    return 2 * modes ** (modes + 1)


def run_fig6(config: ExperimentConfig) -> dict[int, CurveData]:
    """Loss vs noise level for full-depth devices (``L = N + 1``, ``M = 2 N^L``).

    Curves store the mean loss; take the square root for the linear plot.
    """
    trials_grid = config.trials_grid or [config.trials] * len(config.modes_grid)
    curves = {}
    for n, trials in zip(config.modes_grid, trials_grid):
        losses = _learning_grid(config.seed, trials, n, n + 1, [fig6_sample_size(n)],
                                config.noise_levels, config.test_size, config.workers,
                                stream=(n,))
        curves[n] = _curve(config.noise_levels, losses[:, :, 0], f"N={n}")
    return curves


def noise_linearity_ratio(curve: CurveData, eps: float) -> float:
    """``sqrt(L(2 eps)) / sqrt(L(eps))`` read off a fig6 curve."""
    lookup = dict(zip(curve.sweep, curve.mean_loss))
    return float(np.sqrt(lookup[2 * eps] / lookup[eps]))


# --- layer-wise tuning --------------------------------------------------------


@dataclass
class TuneSummary:
    """Mean tuning curve over independent runs."""

    eps: float
    passes: int
    layers: int
    mean_initial: float
    mean_curve: np.ndarray
    final_losses: np.ndarray
    initial_losses: np.ndarray
    curves: np.ndarray  # (trials, passes * layers)

    @property
    def final_mean(self) -> float:
        return float(self.final_losses.mean())

    @property
    def final_median(self) -> float:
        return float(np.median(self.final_losses))

    def plateau(self, window: int | None = None) -> float:
        """Mean loss over the last ``window`` iterations (default: last 10%)."""
        window = window or max(1, len(self.mean_curve) // 10)
        return float(self.mean_curve[-window:].mean())

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["pass", "layer", "iteration", "mean_loss"])
            for it, loss in enumerate(self.mean_curve):
                w.writerow([it // self.layers, it % self.layers + 1, it, repr(float(loss))])


def tuning_trial(task) -> tuple[float, np.ndarray]:
    seed, trial, n, n_layers, eps, passes, m, bfgs_iters = task
    rng = derive_rng(seed, trial)
    arch = sample_random_arch(n, n_layers, rng)
    target = forward_unitary(arch, sample_uniform_phases(n, n_layers, rng))
    device = DeviceOracle(arch, np.zeros((n_layers, n)), eps)
    run_seed = int(rng.integers(2**63))
    trace = tune(device, target, TuneConfig(passes=passes, m_samples_per_layer=m,
                                            bfgs_iters=bfgs_iters, seed=run_seed))
    return trace.initial_loss, trace.losses


def _run_tuning(config: ExperimentConfig, eps: float, m_default: int) -> TuneSummary:
    n, n_layers = config.modes, config.layers
    m = config.m_per_layer or m_default
    tasks = [(config.seed, t, n, n_layers, eps, config.passes, m, config.bfgs_iters)
             for t in range(config.trials)]
    results = parallel_map(tuning_trial, tasks, config.workers)
    initial = np.array([r[0] for r in results])
    curves = np.stack([r[1] for r in results])
    return TuneSummary(eps, config.passes, n_layers, float(initial.mean()), curves.mean(axis=0),
                       curves[:, -1].copy(), initial, curves)


def run_fig7(config: ExperimentConfig) -> TuneSummary:
    """Noiseless ALS tuning with ``N + 1`` tomography samples per layer."""
    return _run_tuning(config, 0.0, config.modes + 1)


def run_fig8(config: ExperimentConfig) -> dict[float, TuneSummary]:
    """Noisy ALS tuning with ``10 N`` tomography samples per layer."""
    return {eps: _run_tuning(config, eps, 10 * config.modes) for eps in config.noise_levels}


# --- output -------------------------------------------------------------------


def git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).parent, capture_output=True, text=True, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() or "unknown"


def _series_name(experiment: str, key) -> str:
    if experiment == "fig6":
        return f"{experiment}_N{key}"
    return f"{experiment}_eps{key:g}"


def run_experiment(config: ExperimentConfig) -> dict:
    """Run one experiment, write its CSVs plus a metadata sidecar, return a summary."""
    out = Path(config.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc

    summary: dict = {}
    written: list[str] = []
    exp = config.experiment
    if exp in ("fig4", "fig5"):
        if exp == "fig4":
            curves, fits = run_fig4(config), {}
        else:
            curves, fits = run_fig5(config)
        for eps, curve in curves.items():
            path = out / f"{_series_name(exp, eps)}.csv"
            curve.write_csv(path)
            written.append(path.name)
        summary["fits"] = {f"{eps:g}": asdict(fit) for eps, fit in fits.items()}
    elif exp == "fig6":
        curves = run_fig6(config)
        for n, curve in curves.items():
            path = out / f"{_series_name(exp, n)}.csv"
            curve.write_csv(path)
            written.append(path.name)
        summary["sqrt_mean_loss"] = {f"N={n}": np.sqrt(c.mean_loss).tolist() for n, c in curves.items()}
        summary["sample_sizes"] = {f"N={n}": fig6_sample_size(n) for n in curves}
    else:
        results = {0.0: run_fig7(config)} if exp == "fig7" else run_fig8(config)
        for eps, res in results.items():
            path = out / (f"{exp}.csv" if exp == "fig7" else f"{_series_name(exp, eps)}.csv")
            res.write_csv(path)
            written.append(path.name)
        summary["runs"] = {
            f"{eps:g}": {
                "mean_initial": res.mean_initial,
                "final_mean": res.final_mean,
                "final_median": res.final_median,
                "plateau": res.plateau(),
            }
            for eps, res in results.items()
        }

    meta = {"config": asdict(config), "seed": config.seed, "git": git_describe(),
            "outputs": written, "summary": summary}
    meta["config"].pop("workers")
    with open(out / f"{exp}.meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return meta
