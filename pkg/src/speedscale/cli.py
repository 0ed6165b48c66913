"""Command-line entry point: ``speedscale <experiment> --seed N --out DIR``."""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, NumericError, ParameterError, SpeedscaleError
from .harness import EXPERIMENTS, load_config, run_experiment


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="speedscale", description="Speed-scaling queue experiments.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", help="JSON object or key=value file overriding the defaults")
    p.add_argument("--seed", type=_u64, default=0, help="master seed (default 0)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--full", action="store_true", help="full-scale stage and replication counts")
    p.add_argument("--threads", type=int, default=1, help="worker processes for replications")
    p.add_argument("--svg", action="store_true", help="also render an SVG plot")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        manifest = run_experiment(args.experiment, cfg, args.seed, args.out,
                                  threads=args.threads, full=args.full, svg=args.svg)
    except (ConfigError, ParameterError) as exc:
        print(f"speedscale: configuration error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, SpeedscaleError, ArithmeticError) as exc:
        print(f"speedscale: numeric failure: {exc}", file=sys.stderr)
        return 1
    print(f"{manifest.experiment}: wrote {', '.join(manifest.outputs)} to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
