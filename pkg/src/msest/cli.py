"""Command-line entry point: ``msest run | list-models | truth``."""

from __future__ import annotations

import argparse
import sys

from .core import IntegrationDivergedError, InvalidInputError, MsestError
from .harness import ConfigError, load_config, run_experiment
from .models import effective_truth, list_models


def _kv(s: str):
    if "=" not in s:
        raise argparse.ArgumentTypeError(f"expected key=value, got {s!r}")
    k, v = s.split("=", 1)
    try:
        return k.strip(), float(v)
    except ValueError:
        raise argparse.ArgumentTypeError(f"value for {k!r} is not a number: {v!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="msest", description="Ensemble estimation of effective SDE "
                                "coefficients from multiscale simulations.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from a config file")
    r.add_argument("--config", required=True, help="flat key = value config file")
    r.add_argument("--fast", action="store_true", help="reduced ensemble (N=500, m=50)")
    r.add_argument("--out", help="output directory (overrides out_dir)")
    r.add_argument("--threads", type=int, help="worker threads (default: $MSEST_THREADS or 1)")

    sub.add_parser("list-models", help="list registered models")

    t = sub.add_parser("truth", help="print closed-form effective coefficients")
    t.add_argument("--model", required=True)
    t.add_argument("--param", type=_kv, action="append", default=[], metavar="K=V")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "list-models":
            for m in list_models():
                params = ", ".join(f"{k}={v:g}" for k, v in m["params"].items())
                kind = "matrix" if m["matrix"] else "scalar"
                truth = "truth" if m["has_truth"] else "no-truth"
                print(f"{m['name']}\t{kind}\t{truth}\t{params}\t{m['description']}")
        elif args.command == "truth":
            for k, v in effective_truth(args.model, dict(args.param)).items():
                print(f"{k}\t{v:.17g}")
        else:
            res = run_experiment(load_config(args.config), fast=args.fast, out_dir=args.out,
                                 threads=args.threads)
            print(f"wrote {res.series_path}")
            if res.subsampling_path is not None:
                print(f"wrote {res.subsampling_path}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except IntegrationDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (MsestError, InvalidInputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
