"""Command-line entry point: ``interferolab <subcommand> ...``.

Exit codes: 0 on success, 1 on usage errors, 2 on runtime errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings

import numpy as np

from . import __version__
from .core import (
    Architecture,
    TrainingSet,
    complex_from_json,
    complex_to_json,
    derive_rng,
    forward_unitary,
    generate_training_set,
    load_json,
    sample_random_arch,
    sample_uniform_phases,
    save_json,
)
from .experiments import EXPERIMENTS, default_config, run_experiment
from .features import LinearModel, predict
from .layerwise import DeviceOracle, TuneConfig, tune
from .numerics import fit_power_law
from .programming import ProgramConfig, frobenius_loss, program_phases
from .training import IterativeConfig, RankDeficiencyWarning, build_design_matrix, solve_iterative, solve_pinv

log = logging.getLogger("interferolab")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _common(p: argparse.ArgumentParser, out_help: str) -> None:
    p.add_argument("--seed", type=int, default=0, help="master seed (default: 0)")
    p.add_argument("--out", default=None, help=out_help)
    p.add_argument("--config", default=None, help="JSON file whose keys provide option defaults")


def build_parser() -> _Parser:
    parser = _Parser(prog="interferolab", description="Learn, program and tune layered interferometers.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="<command>")

    p = sub.add_parser("gen-arch", help="sample a random architecture with Haar basis matrices")
    p.add_argument("--modes", type=int, default=3)
    p.add_argument("--layers", type=int, default=4, help="number of phase layers L (>= 2)")
    _common(p, "architecture file (default: stdout)")

    p = sub.add_parser("gen-dataset", help="simulate noisy tomography at random phases")
    p.add_argument("--arch", required=True)
    p.add_argument("--samples", type=int, default=None, help="training set size M (default: 2 N^L)")
    p.add_argument("--eps", type=float, default=0.0, help="tomography noise level")
    _common(p, "training-set file (default: stdout)")

    p = sub.add_parser("train", help="fit the linear model to a training set")
    p.add_argument("--data", required=True)
    p.add_argument("--solver", choices=["pinv", "iterative"], default="pinv")
    p.add_argument("--reduced", action="store_true", help="fit each element on its own N^(L-2) paths")
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--epochs", type=int, default=200)
    _common(p, "model file (default: stdout); the solver report goes to <out>.report.json")

    p = sub.add_parser("evaluate", help="held-out Frobenius loss of a model against its architecture")
    p.add_argument("--model", required=True)
    p.add_argument("--arch", required=True)
    p.add_argument("--test-size", type=int, default=20)
    _common(p, "result file (default: stdout)")

    p = sub.add_parser("program", help="find phases realizing a target matrix on a model")
    p.add_argument("--model", required=True)
    p.add_argument("--target", required=True, help="target matrix file")
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-10)
    _common(p, "result file (default: stdout)")

    p = sub.add_parser("tune-als", help="layer-wise ALS tuning of a simulated device")
    p.add_argument("--arch", required=True, help="hidden device architecture")
    p.add_argument("--target", default=None, help="target matrix file (default: realizable random target)")
    p.add_argument("--passes", type=int, default=1000)
    p.add_argument("--m-samples", type=int, default=None, help="tomography samples per layer (default N+1, or 10N if noisy)")
    p.add_argument("--bfgs-iters", type=int, default=5)
    p.add_argument("--eps", type=float, default=0.0)
    _common(p, "trace CSV (default: stdout); final phases go to <out>.phases.json")

    p = sub.add_parser("experiment", help="run one of the scripted sweeps")
    p.add_argument("id", choices=EXPERIMENTS)
    p.add_argument("--paper-scale", action="store_true", help="use the published trial counts")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--passes", type=int, default=None)
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: $INTERFEROLAB_THREADS or CPU count)")
    _common(p, "output directory (default: results)")

    p = sub.add_parser("fit-powerlaw", help="fit y = C m^-k to a CSV of (m, y) points")
    p.add_argument("input", help="CSV with sweep_value,mean_loss columns (or two unnamed columns)")
    _common(p, "result file (default: stdout)")
    return parser


def _emit_json(data: dict, out) -> None:
    if out:
        save_json(data, out)
    else:
        json.dump(data, sys.stdout)
        sys.stdout.write("\n")


def _load_matrix(path) -> np.ndarray:
    data = load_json(path)
    if isinstance(data, dict):
        data = data["matrix"]
    return complex_from_json(data)


def cmd_gen_arch(args) -> None:
    arch = sample_random_arch(args.modes, args.layers, derive_rng(args.seed))
    _emit_json(arch.to_dict(), args.out)


def cmd_gen_dataset(args) -> None:
    arch = Architecture.from_dict(load_json(args.arch))
    m = args.samples or 2 * arch.modes**arch.phase_layers
    training = generate_training_set(arch, m, args.eps, derive_rng(args.seed))
    _emit_json(training.to_dict(), args.out)


def cmd_train(args) -> None:
    training = TrainingSet.from_dict(load_json(args.data))
    design = build_design_matrix(training)
    if args.solver == "pinv":
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", RankDeficiencyWarning)
            model, report = solve_pinv(design, training, reduced=args.reduced)
        for w in caught:
            print(f"interferolab train: {w.category.__name__}: {w.message}", file=sys.stderr)
    else:
        config = IterativeConfig(args.learning_rate, args.batch_size, args.epochs, args.seed)
        model, report = solve_iterative(design, training, config)
    _emit_json(model.to_dict(), args.out)
    if args.out:
        save_json(report.to_dict(), f"{args.out}.report.json")
    log.info("trained %s: rank %d of %d, residual rms %.3e",
             report.solver, report.rank_estimate, report.feature_dim, report.residual_rms)


def cmd_evaluate(args) -> None:
    model = LinearModel.from_dict(load_json(args.model))
    arch = Architecture.from_dict(load_json(args.arch))
    phases = sample_uniform_phases(arch.modes, arch.phase_layers, derive_rng(args.seed), size=args.test_size)
    pred = predict(model, phases, architecture_hash=arch.hash())
    truth = forward_unitary(arch, phases)
    losses = [frobenius_loss(p, t) for p, t in zip(pred, truth)]
    _emit_json({"mean_loss": float(np.mean(losses)), "losses": losses, "test_size": args.test_size}, args.out)


def cmd_program(args) -> None:
    model = LinearModel.from_dict(load_json(args.model))
    target = _load_matrix(args.target)
    result = program_phases(model, target, ProgramConfig(args.max_iters, args.restarts, args.tol, args.seed))
    _emit_json(result.to_dict(), args.out)


def cmd_tune_als(args) -> None:
    arch = Architecture.from_dict(load_json(args.arch))
    rng = derive_rng(args.seed)
    if args.target:
        target = _load_matrix(args.target)
    else:
        target = forward_unitary(arch, sample_uniform_phases(arch.modes, arch.phase_layers, rng))
    device = DeviceOracle(arch, np.zeros(arch.phase_shape), args.eps)
    config = TuneConfig(args.passes, args.m_samples, args.bfgs_iters, int(rng.integers(2**63)))
    trace = tune(device, target, config)
    if args.out:
        trace.write_csv(args.out)
        save_json({"phases": trace.final_phases.tolist(), "final_loss": trace.final_loss,
                   "initial_loss": trace.initial_loss, "target": complex_to_json(target)},
                  f"{args.out}.phases.json")
    else:
        w = csv.writer(sys.stdout)
        w.writerow(["pass", "layer", "iteration", "loss"])
        for r in trace.records:
            w.writerow([r.pass_index, r.layer, r.iteration, repr(r.loss)])
    log.info("tuning finished: loss %.3e -> %.3e", trace.initial_loss, trace.final_loss)


def cmd_experiment(args) -> None:
    overrides = dict(args.file_config)
    overrides.update(seed=args.seed, out=args.out or overrides.get("out", "results"))
    for key in ("trials", "passes", "workers"):
        if getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    config = default_config(args.id, paper_scale=args.paper_scale, **overrides)
    meta = run_experiment(config)
    json.dump(meta["summary"], sys.stdout, indent=2)
    sys.stdout.write("\n")


def cmd_fit_powerlaw(args) -> None:
    with open(args.input, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows and not _is_number(rows[0][0]):
        header = rows.pop(0)
        xi = header.index("sweep_value") if "sweep_value" in header else 0
        yi = header.index("mean_loss") if "mean_loss" in header else 1
    else:
        xi, yi = 0, 1
    fit = fit_power_law([(float(r[xi]), float(r[yi])) for r in rows if r])
    _emit_json({"amplitude": fit.amplitude, "exponent": fit.exponent, "stderr_exponent": fit.stderr_exponent},
               args.out)


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


COMMANDS = {
    "gen-arch": cmd_gen_arch,
    "gen-dataset": cmd_gen_dataset,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "program": cmd_program,
    "tune-als": cmd_tune_als,
    "experiment": cmd_experiment,
    "fit-powerlaw": cmd_fit_powerlaw,
}


def _apply_config_file(parser: _Parser, argv: list[str]):
    """Parse twice so that keys from ``--config`` act as option defaults."""
    args = parser.parse_args(argv)
    file_config = {}
    if getattr(args, "config", None):
        file_config = load_json(args.config)
        if not isinstance(file_config, dict):
            raise UsageError(f"config file {args.config} must hold a JSON object")
        if args.command == "experiment":
            args.file_config = file_config
            return args
        sub = parser._subparsers._group_actions[0].choices[args.command]
        dests = {a.dest for a in sub._actions}
        unknown = set(k.replace("-", "_") for k in file_config) - dests
        if unknown:
            raise UsageError(f"unknown keys in {args.config}: {', '.join(sorted(unknown))}")
        sub.set_defaults(**{k.replace("-", "_"): v for k, v in file_config.items()})
        args = parser.parse_args(argv)
    args.file_config = file_config
    return args


def cli_main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config_file(parser, argv)
        if args.command is None:
            raise UsageError(parser.format_usage() + "interferolab: error: a subcommand is required")
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (OSError, ValueError) as exc:
        print(f"interferolab: error: {exc}", file=sys.stderr)
        return 2

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    warnings.simplefilter("default")
    try:
        COMMANDS[args.command](args)
    except Exception as exc:  # noqa: BLE001 - surfaced as exit code 2
        print(f"interferolab {args.command}: error: {exc}", file=sys.stderr)
        log.debug("traceback", exc_info=True)
        return 2
    return 0


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
