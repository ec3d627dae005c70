"""Command line: ``validate``, ``run --config``, ``fit --in`` and ``plot --in``.

Exit codes are 0 on success, 1 when a validation or acceptance check fails
and 2 on usage errors (bad flags, missing or invalid config, missing data).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, load_config
from .experiments import fit_directory, run_experiment, run_validate
from .io import RunManifest, discover_trajectories
from .plotting import emit_plots

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="confined-qdyn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", help="run the oracle checks")
    run = sub.add_parser("run", help="run the experiment described by a config file")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--output-dir", type=Path, help="override output_dir from the config")
    fit = sub.add_parser("fit", help="re-fit rates from stored trajectory CSVs")
    fit.add_argument("--in", dest="indir", required=True, type=Path)
    fit.add_argument("--noise-floor", type=float, help="default: the manifest value, else 1e-12")
    plot = sub.add_parser("plot", help="write SVG figures from stored trajectory CSVs")
    plot.add_argument("--in", dest="indir", required=True, type=Path)
    plot.add_argument("--out", type=Path, help="figure directory (default: the input directory)")
    return parser


def _print_verdicts(manifest: RunManifest) -> None:
    for name, verdict in sorted(manifest.verdicts.items()):
        print(f"{name}: {'PASS' if verdict['passed'] else 'FAIL'}")


def _print_reports(reports: list[dict]) -> None:
    print(f"{'oracle':<24}{'measured':>14}{'reference':>14}{'abs_err':>11}{'tol':>9}  result")
    for r in reports:
        print(
            f"{r['name']:<24}{r['measured']:>14.6g}{r['reference']:>14.6g}{r['abs_err']:>11.2e}"
            f"{r['tolerance']:>9.1e}  {'PASS' if r['pass_flag'] else 'FAIL'}"
        )


def _manifest_path(indir: Path) -> Path:
    return indir / "manifest.json"


def _cmd_validate(args) -> int:
    manifest = run_validate()
    _print_reports(manifest.oracle_reports)
    _print_verdicts(manifest)
    return EXIT_OK if manifest.passed else EXIT_FAIL


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.output_dir is not None:
        cfg = replace(cfg, output_dir=str(args.output_dir))
    manifest = run_experiment(cfg)
    if manifest.oracle_reports:
        _print_reports(manifest.oracle_reports)
    for name, rate in sorted(manifest.rates.items()):
        print(f"rate {name}: slope {rate['slope']:.6g} (r^2 {rate['r_squared']:.4f})")
    _print_verdicts(manifest)
    return EXIT_OK if manifest.passed else EXIT_FAIL


def _noise_floor(indir: Path, override):
    if override is not None:
        return override
    path = _manifest_path(indir)
    if path.is_file():
        return RunManifest.load(path).config.get("noise_floor", 1e-12)
    return 1e-12


def _cmd_fit(args) -> int:
    try:
        experiment, rates, _ = fit_directory(args.indir, _noise_floor(args.indir, args.noise_floor))
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(json.dumps({"experiment": experiment, "rates": rates}, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_plot(args) -> int:
    path = _manifest_path(args.indir)
    try:
        if path.is_file():
            manifest = RunManifest.load(path)
            # files may have been moved together with the manifest
            manifest.files = {k: str(args.indir / Path(p).name) for k, p in manifest.files.items()}
        else:
            experiment, files = discover_trajectories(args.indir)
            _, rates, sups = fit_directory(args.indir, _noise_floor(args.indir, None))
            manifest = RunManifest(experiment, {})
            manifest.files = {f"{lam:g}": str(p) for lam, p in files.items()}
            manifest.rates = rates
            manifest.sup_values = {n: {f"{lam:g}": v for lam, v in t.items()} for n, t in sups.items()}
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    written = emit_plots(manifest, args.out or args.indir)
    for w in manifest.warnings:
        print(f"warning: {w}", file=sys.stderr)
    for p in written:
        print(p)
    return EXIT_OK


_COMMANDS = {"validate": _cmd_validate, "run": _cmd_run, "fit": _cmd_fit, "plot": _cmd_plot}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
