"""Command line entry point: ``hypbbm run`` and ``hypbbm verify``."""

from __future__ import annotations

import argparse
import sys

from hypbbm import __version__
from hypbbm.errors import HypBBMError, PopulationCapExceeded


def _run(args) -> int:
    from hypbbm.experiments import emit_report, execute, load_spec

    try:
        spec = load_spec(args.spec, args.out)
        if args.seed is not None:
            spec = spec.with_seed(args.seed)
        record = execute(spec, workers=args.workers, dump_particles=args.dump_particles)
    except PopulationCapExceeded as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (HypBBMError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    for path in emit_report(record, spec.output_dir, figures=not args.no_figures):
        print(path)
    for r in record.reports:
        tag = "pass" if r.passed else "FAIL"
        print(f"{tag}: {r.description}: {r.statistic:.6g} (threshold {r.threshold:.6g}, n={r.sample_size})")
    return 0


def _verify(args) -> int:
    from hypbbm.acceptance import run_all, verdict

    numbers = set(args.only) if args.only else None
    results = run_all(numbers, echo=lambda line: print(line, flush=True))
    ok = verdict(results)
    failed = [r.number for r in results if not r.passed and not r.exploratory]
    print("all non-exploratory criteria passed" if ok else f"failed criteria: {failed}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hypbbm", description="Branching Brownian motion on the hyperbolic plane.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment spec and write its report files")
    r.add_argument("spec", help="key = value spec file")
    r.add_argument("--out", help="output directory (default: <spec>_out)")
    r.add_argument("--seed", type=int, help="override the spec seed")
    r.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    r.add_argument("--dump-particles", action="store_true", help="also write particles.jsonl")
    r.add_argument("--no-figures", action="store_true", help="skip the PNG figure")
    r.set_defaults(func=_run)

    v = sub.add_parser("verify", help="run the acceptance suite")
    v.add_argument("--only", type=int, nargs="+", metavar="N", help="run only these criteria")
    v.set_defaults(func=_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
