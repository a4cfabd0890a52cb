"""Command-line entry point: ``sppdm run|verify|sweep|plot|bench``."""
from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

from ..errors import MissingData, ParseError, SPPDMError, ValidationError

log = logging.getLogger("sppdm")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sppdm", description="Decentralized primal-dual momentum simulator.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment described by an INI config")
    run.add_argument("config")
    run.add_argument("--out", help="output directory (overrides [output] directory)")

    ver = sub.add_parser("verify", help="run the bundled property checks")
    ver.add_argument("--full", action="store_true", help="include variance and rate checks")
    ver.add_argument("--seed", type=int, default=0)

    sw = sub.add_parser("sweep", help="rerun an experiment over values of one parameter")
    sw.add_argument("config")
    sw.add_argument("--param", required=True, help="parameter name, e.g. batch or solver.eta")
    sw.add_argument("--values", required=True, help="comma-separated values")
    sw.add_argument("--out")

    pl = sub.add_parser("plot", help="write plotting scripts for a results directory")
    pl.add_argument("directory")

    bn = sub.add_parser("bench", help="time the compiled and fallback kernels")
    bn.add_argument("--repeat", type=int, default=5)
    bn.add_argument("--end-to-end", action="store_true", help="also time a full desk run per backend")
    return ap


def _cmd_run(args) -> int:
    from .config import parse_config
    from .experiment import mean_curves, run_experiment

    cfg = parse_config(args.config)
    out = args.out or cfg.output_dir()
    results = run_experiment(cfg, out)
    for alg, tr in mean_curves(results).items():
        print(f"{alg}: final stationarity {tr.stationarity[-1]:.4e}, consensus {tr.consensus[-1]:.4e}")
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    from .verify import verify_suite

    results = verify_suite("full" if args.full else "fast", seed=args.seed)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_FAILED if failed else EXIT_OK


def _cmd_sweep(args) -> int:
    from .config import parse_config
    from .experiment import sweep

    cfg = parse_config(args.config)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ValidationError(args.param, "no sweep values given")
    rows = sweep(cfg, args.param, values, args.out)
    for r in rows:
        print(f"{r['param']}={r['value']} {r['algorithm']}: plateau {r['plateau']:.4e}")
    return EXIT_OK


def _cmd_plot(args) -> int:
    from .plots import emit_plots

    for path in emit_plots(args.directory):
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_bench(args) -> int:
    from ..bench import end_to_end, format_table, kernel_timings

    print(format_table(kernel_timings(repeat=args.repeat)))
    if args.end_to_end:
        for name, secs in end_to_end().items():
            print(f"end-to-end {name}: {secs:.2f} s")
    return EXIT_OK


_COMMANDS = {"run": _cmd_run, "verify": _cmd_verify, "sweep": _cmd_sweep, "plot": _cmd_plot, "bench": _cmd_bench}


def main(argv: Optional[List[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (ParseError, ValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingData as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except SPPDMError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
