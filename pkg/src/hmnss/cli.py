"""Command-line entry point: ``hmnss run|sweep|certify|compare``."""
from __future__ import annotations

import argparse
import json
import sys

from .engine import closeness
from .errors import ConfigError, HmnssError
from .experiment import certify_config, load_config, read_csv_arc, run_experiment, run_sweep

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hmnss", description="Hybrid momentum Nash seeking experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "simulate one configuration"),
                           ("sweep", "simulate every point of the sweep grid"),
                           ("certify", "evaluate certificates without simulating")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config", help="TOML file or shipped preset name")
        if name != "certify":
            p.add_argument("--out", default=None, help="output root (default: config output_dir)")
    p = sub.add_parser("compare", help="closeness of two trajectory CSV files")
    p.add_argument("arc_a")
    p.add_argument("arc_b")
    p.add_argument("--T", type=float, required=True, help="flow-time window")
    p.add_argument("--J", type=int, required=True, help="jump-count window")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "compare":
            a, cols_a = read_csv_arc(args.arc_a)
            b, cols_b = read_csv_arc(args.arc_b)
            if cols_a != cols_b:
                raise ConfigError("trajectory files have different state columns")
            print(json.dumps({"closeness": closeness(a, b, args.T, args.J)}))
            return EXIT_OK
        cfg = load_config(args.config)
        if args.command == "run":
            summ, _ = run_experiment(cfg, args.out)
            print(json.dumps(summ.to_json_dict() | {"outdir": summ.outdir}, indent=2, sort_keys=True))
        elif args.command == "sweep":
            table = run_sweep(cfg, args.out)
            print(json.dumps(table, indent=2, sort_keys=True))
        else:
            print(json.dumps(certify_config(cfg), indent=2, sort_keys=True))
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (HmnssError, ArithmeticError, FloatingPointError) as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
