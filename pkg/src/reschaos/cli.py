"""Command-line entry point.

Exit codes: 0 success, 2 config error, 3 numerical failure above threshold,
4 I/O error.  The master seed comes from --seed, else the RESCHAOS_SEED
environment variable, else the config file.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import __version__
from .ensembles import save_ensemble
from .errors import ConfigError, NumericalFailureError, ReschaosError
from .experiments import (
    load_config,
    run_a_scan,
    run_brody_sweep,
    run_number_variance,
    run_phase_grid,
    run_spacing_hist,
    run_validation,
    with_master_seed,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

_COMMAND_KIND = {
    "scan-a": "a_scan",
    "spacings": "spacing_hist",
    "brody-sweep": "brody_sweep",
    "number-variance": "number_variance",
    "phase-grid": "phase_grid",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reschaos",
        description=(
            "Dense overlapping Feshbach resonances: seeded ensembles, "
            "scattering-length scans and spacing statistics."
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "gen-ensemble": "generate and persist the configured ensemble",
        "scan-a": "scattering length a(B) on a field grid, with dressed table",
        "spacings": "per-realization Brody fits and a pooled spacing histogram",
        "brody-sweep": "mean Brody parameter versus resonance width",
        "number-variance": "Sigma^2(L) curves per width, with reference curves",
        "phase-grid": "sin^2(delta) on an (E, B) grid",
        "validate": "run the invariant suite on the configured ensemble",
    }
    for name, help_text in commands.items():
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="path to the JSON experiment config")
        cmd.add_argument("--seed", type=int, default=None, help="master seed override")
        cmd.add_argument("--out", default=None, help="output directory override")
        cmd.add_argument("--workers", type=int, default=1, help="realization-level workers")
        cmd.add_argument(
            "--format", choices=("csv", "binary"), default="csv",
            help="phase-grid matrix format (other commands always write CSV)",
        )
    return parser


def _resolve_seed(args) -> int | None:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("RESCHAOS_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"RESCHAOS_SEED must be an integer, got {env!r}") from exc
    return None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        seed = _resolve_seed(args)
        if seed is not None:
            config = with_master_seed(config, seed)
        expected_kind = _COMMAND_KIND.get(args.command)
        if expected_kind is not None and config.kind != expected_kind:
            raise ConfigError(
                f"command {args.command!r} needs a config of kind {expected_kind!r}, "
                f"got {config.kind!r}"
            )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO

    out_dir = Path(args.out if args.out is not None else (config.out_dir or "out"))
    try:
        if args.command == "validate":
            report = run_validation(config)
            for check in report.checks:
                status = "ok " if check.passed else "FAIL"
                detail = f" ({check.detail})" if check.detail else ""
                print(f"[{status}] {check.name}{detail}")
            if not report.passed:
                return EXIT_NUMERIC
            return EXIT_OK

        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "gen-ensemble":
            manifest = save_ensemble(out_dir, config.ensemble)
            print(f"wrote {config.ensemble.realization_count} realizations; manifest: {manifest}")
        elif args.command == "scan-a":
            result = run_a_scan(config, out_dir=out_dir)
            print(
                f"scanned {result.b_values.size} points; {result.dressed.n} poles; "
                f"median |a| = {result.median_abs_a:.6g}"
            )
        elif args.command == "spacings":
            result = run_spacing_hist(config, out_dir=out_dir, workers=args.workers)
            print(f"mean eta = {result.mean_eta:.4f} +- {result.std_eta:.4f}")
        elif args.command == "brody-sweep":
            result = run_brody_sweep(config, out_dir=out_dir, workers=args.workers)
            for row in result.rows:
                print(
                    f"width {row.width:g}d: eta = {row.mean_eta:.4f} +- {row.std_eta:.4f} "
                    f"({row.n_ok} realizations, {row.n_failed} failed)"
                )
        elif args.command == "number-variance":
            result = run_number_variance(config, out_dir=out_dir, workers=args.workers)
            for width, sigma2 in result.curves.items():
                print(f"width {width:g}d: Sigma^2 at L_max = {sigma2[-1]:.4f}")
        elif args.command == "phase-grid":
            result = run_phase_grid(config, out_dir=out_dir, workers=args.workers, fmt=args.format)
            print(
                f"grid {result.grid.values.shape[0]}x{result.grid.values.shape[1]}; "
                f"{result.ridge_positions_e0.size} ridges at threshold"
            )
        print(f"outputs in {out_dir}")
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailureError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ReschaosError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
