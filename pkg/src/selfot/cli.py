"""Command line interface: ``selfot {sample,fit,score,experiment,constants}``.

Exit codes: 0 success, 1 a checked threshold failed under ``--assert``,
2 invalid input, 3 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .errors import ConvergenceError, ValidationError

EXIT_OK = 0
EXIT_ASSERT = 1
EXIT_VALIDATION = 2
EXIT_CONVERGENCE = 3


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not np.isfinite(value) or value <= 0:
        raise argparse.ArgumentTypeError(f"must be a positive number, got {text}")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _default_threads() -> int | None:
    env = os.environ.get("SELFOT_THREADS")
    return int(env) if env and env.isdigit() and int(env) > 0 else None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="selfot", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--seed", type=int, default=None, help="master seed (sample, experiment)")
    parser.add_argument("--threads", type=_positive_int, default=_default_threads(),
                        help="BLAS threads; defaults to $SELFOT_THREADS")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw Gaussian samples to CSV")
    p.add_argument("--dim", type=_positive_int, default=1)
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--variance", type=_positive_float, default=1.0, help="isotropic variance")
    p.add_argument("--out", required=True)

    p = sub.add_parser("fit", help="fit a self-potential to CSV samples")
    p.add_argument("--input", required=True)
    p.add_argument("--epsilon", type=_positive_float, required=True)
    p.add_argument("--tol", type=_positive_float, default=1e-10)
    p.add_argument("--max-iter", type=_positive_int, default=1000)
    p.add_argument("--method", choices=("absorbed", "lse"), default="absorbed")
    p.add_argument("--out", required=True)

    p = sub.add_parser("score", help="evaluate a score estimate at CSV points")
    p.add_argument("--potential", required=True)
    p.add_argument("--points", required=True)
    p.add_argument("--mode", choices=("self", "kde"), default="self")
    p.add_argument("--out", required=True)

    p = sub.add_parser("experiment", help="run a TOML/JSON configured study")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=_positive_int, default=None, help="override the config's worker count")
    p.add_argument("--assert", dest="check", action="store_true", help="exit 1 if any check fails")

    p = sub.add_parser("constants", help="print limit-theory constants as JSON")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--truncation", type=int, default=60)
    return parser


def _cmd_sample(args) -> int:
    from .core import GaussianModel, sample, write_samples_csv

    model = GaussianModel.centered(args.variance * np.eye(args.dim))
    seed = 0 if args.seed is None else args.seed
    write_samples_csv(sample(model, args.n, seed), args.out)
    return EXIT_OK


def _cmd_fit(args) -> int:
    from .core import read_samples_csv
    from .self_sinkhorn import fit_self_potential, save_potential

    samples = read_samples_csv(_existing(args.input))
    pot = fit_self_potential(samples, args.epsilon, tol=args.tol, max_iter=args.max_iter, method=args.method)
    out = Path(args.out)
    try:
        sample_file = os.path.relpath(Path(args.input).resolve(), out.resolve().parent)
    except ValueError:
        sample_file = str(Path(args.input).resolve())
    save_potential(pot, out, sample_file=sample_file)
    print(json.dumps({"residual": pot.residual, "iterations": pot.iterations, "n": pot.n, "d": pot.d}))
    return EXIT_OK


def _cmd_score(args) -> int:
    from .core import read_points_csv
    from .score import kde_score, self_ot_score
    from .self_sinkhorn import load_potential

    pot = load_potential(_existing(args.potential))
    pts = read_points_csv(_existing(args.points), allow_empty=True)
    d = pot.d
    if pts.size and pts.shape[1] != d:
        raise ValidationError(f"points have dimension {pts.shape[1]}, potential has {d}")
    pts = pts.reshape(-1, d)
    if args.mode == "self":
        scores = self_ot_score(pot, pts) if len(pts) else np.empty((0, d))
    else:
        scores = kde_score(pot.samples, pot.epsilon, pts) if len(pts) else np.empty((0, d))
    header = [f"x{i}" for i in range(1, d + 1)] + [f"s{i}" for i in range(1, d + 1)]
    with open(args.out, "w") as fh:
        fh.write(",".join(header) + "\n")
        for x, s in zip(pts, np.atleast_2d(scores)):
            fh.write(",".join(format(float(v), ".17g") for v in np.concatenate([x, s])) + "\n")
    return EXIT_OK


def _cmd_experiment(args) -> int:
    from .experiments import load_config, run_experiment, write_outputs

    config = load_config(_existing(args.config))
    if args.seed is not None:
        config.seed = args.seed
    if args.workers is not None:
        config.workers = args.workers
    result = run_experiment(config)
    csv_path, json_path = write_outputs(result, args.out)
    failed = [c.name for c in result.checks if not c.passed]
    print(json.dumps({"results": str(csv_path), "summary": str(json_path), "passed": result.passed, "failed": failed}))
    if args.check and failed:
        return EXIT_ASSERT
    return EXIT_OK


def _cmd_constants(args) -> int:
    from .asymptotics import bandwidth_rule, c3_quadrature, c3_series, clt_epsilon_rule, kernel_second_moment

    if args.dim < 1:
        raise ValidationError(f"--dim must be at least 1, got {args.dim}")
    if args.truncation < 0:
        raise ValidationError(f"--truncation must be nonnegative, got {args.truncation}")
    d = args.dim
    payload = {
        "schema": 1,
        "dim": d,
        "c3_series": c3_series(d, args.truncation).to_dict(),
        "c3_quadrature": c3_quadrature(d).to_dict(),
        "kernel_second_moment": kernel_second_moment(d, 1),
        "bandwidth_examples": {str(n): bandwidth_rule(n, d) for n in (500, 1000, 2000, 4000, 8000)},
        "clt_epsilon_examples": {str(n): clt_epsilon_rule(n, d) for n in (1000, 4000)},
    }
    print(json.dumps(payload, indent=1))
    return EXIT_OK


def _existing(path: str) -> str:
    if not Path(path).is_file():
        raise ValidationError(f"no such file: {path}")
    return path


COMMANDS = {
    "sample": _cmd_sample,
    "fit": _cmd_fit,
    "score": _cmd_score,
    "experiment": _cmd_experiment,
    "constants": _cmd_constants,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with threadpool_limits(args.threads):
            return COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"selfot: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConvergenceError as exc:
        print(f"selfot: not converged: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
