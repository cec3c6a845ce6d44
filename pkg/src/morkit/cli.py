"""Command-line entry point.

    morkit <subcommand> --config <path> [--set key=value]... [--out dir] [--seed n]

Subcommands: snapshots, basis pod|greedy|gss, compare-bases, ncrba-train,
ncrba-solve, quadratic qsvdm|qgm, toy-quadratic, taylor-convergence,
quad-law, report.  Exit codes: 0 success, 2 configuration error, 3 solver
failure, 4 numerical diagnostic.
"""

import argparse
import os
import sys

from . import experiments, report
from .config import apply_overrides, load_config, validate
from .errors import ConfigError, MorkitError, NumericalDiagnostic, SolveFailure
from .storage import ArtifactStore


def _add_common(parser):
    parser.add_argument("--config", required=False, help="TOML experiment config")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config entry")
    parser.add_argument("--out", default=None, help="artifact directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override [sampling].seed")


def build_parser():
    parser = argparse.ArgumentParser(prog="morkit",
                                     description="model-order-reduction experiments")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    for name in ("snapshots", "compare-bases", "ncrba-train", "ncrba-solve",
                 "toy-quadratic", "taylor-convergence", "quad-law", "report"):
        _add_common(sub.add_parser(name))

    basis = sub.add_parser("basis")
    basis.add_argument("method", choices=("pod", "greedy", "gss"))
    _add_common(basis)

    quad = sub.add_parser("quadratic")
    quad.add_argument("method", choices=("qsvdm", "qgm"))
    _add_common(quad)
    return parser


def _threads_cap():
    cap = os.environ.get("MORKIT_THREADS")
    if cap:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, cap)


DRIVERS = {
    "snapshots": experiments.run_snapshots,
    "basis": experiments.run_basis,
    "compare-bases": experiments.run_compare_bases,
    "ncrba-train": experiments.run_ncrba_train,
    "ncrba-solve": experiments.run_ncrba_solve,
    "quadratic": experiments.run_quadratic,
    "toy-quadratic": experiments.run_toy_quadratic,
    "taylor-convergence": experiments.run_taylor_convergence,
    "quad-law": experiments.run_quad_law,
}


def run(subcommand, config_path=None, overrides=(), out_dir=None, seed=None,
        method=None):
    """Programmatic equivalent of the CLI; returns the artifact store."""
    config = load_config(config_path) if config_path else {}
    config = apply_overrides(config, overrides)
    if seed is not None:
        config.setdefault("sampling", {})["seed"] = int(seed)
    config = validate(config, subcommand)
    out_dir = out_dir or os.path.join("artifacts", subcommand)

    if subcommand == "report":
        written = report.render_all(out_dir)
        store = ArtifactStore(out_dir, config=config)
        store.write_manifest_as("report_manifest.json")
        return store, written
    driver = DRIVERS[subcommand]
    if method is not None:
        return driver(config, out_dir, method=method)
    return driver(config, out_dir)


def main(argv=None):
    _threads_cap()
    args = build_parser().parse_args(argv)
    try:
        result = run(args.subcommand, config_path=args.config,
                     overrides=args.overrides, out_dir=args.out, seed=args.seed,
                     method=getattr(args, "method", None))
    except ConfigError as exc:
        print(f"morkit: configuration error: {exc}", file=sys.stderr)
        return 2
    except SolveFailure as exc:
        print(f"morkit: solver failure: {exc}", file=sys.stderr)
        return 3
    except NumericalDiagnostic as exc:
        print(f"morkit: numerical diagnostic: {exc}", file=sys.stderr)
        return 4
    except MorkitError as exc:
        print(f"morkit: error: {exc}", file=sys.stderr)
        return 2
    if args.subcommand == "report":
        store, written = result
        for path in written:
            print(f"wrote {path}")
    else:
        store = result
        print(f"artifacts in {store.root}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
