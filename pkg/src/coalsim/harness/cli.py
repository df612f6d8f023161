"""``coalsim run | sweep | plot``.

Exit codes: 0 success, 2 config error, 3 runtime or numeric error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from coalsim.harness.config import ConfigError, load_config, load_grid
from coalsim.harness.runner import ScalingReport, emit_plot_data, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 0, 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coalsim", description="Spatial Lambda-coalescent experiments")
    sub = p.add_subparsers(dest="cmd", required=True)
    run = sub.add_parser("run", help="run one experiment config")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--replicas", type=int)
    run.add_argument("--threads", type=int, help="worker threads (default $COALSIM_THREADS or 1)")
    run.add_argument("--out")
    sw = sub.add_parser("sweep", help="run a config over a parameter grid")
    sw.add_argument("--config", required=True)
    sw.add_argument("--grid", required=True)
    sw.add_argument("--seed", type=int)
    sw.add_argument("--replicas", type=int)
    sw.add_argument("--threads", type=int)
    sw.add_argument("--out")
    pl = sub.add_parser("plot", help="write plot tables from an aggregated report")
    pl.add_argument("--report", required=True, help="aggregated.csv written by run or sweep")
    pl.add_argument("--style", choices=("loglog", "semilog", "linear"), default="linear")
    pl.add_argument("--out", help="output directory (default: next to the report)")
    return p


def _run(args) -> int:
    spec = load_config(args.config)
    grid = load_grid(args.grid) if getattr(args, "grid", None) else None
    rep = run_experiment(spec, args.out, threads=args.threads, seed=args.seed,
                         replicas=args.replicas, grid=grid)
    print(f"{spec.name}: {len(rep.raw)} rows, {len(rep.table)} aggregated points -> "
          f"{rep.files['aggregated'].parent}")
    for name, fit in rep.fits.items():
        if "exponent" in fit:
            print(f"  fit {name}: exponent {fit['exponent']:.4f} (r2 {fit['r2']:.4f})")
        else:
            print(f"  fit {name}: {fit['error']}")
    return EXIT_OK


def _plot(args) -> int:
    rep = ScalingReport.from_aggregated_csv(args.report)
    if not rep.table:
        print(f"{args.report}: empty report", file=sys.stderr)
        return EXIT_RUNTIME
    out = args.out or Path(args.report).parent
    for path in emit_plot_data(rep, args.style, out):
        print(path)
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _plot(args) if args.cmd == "plot" else _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
