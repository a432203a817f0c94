"""Command-line entry point for the SpMM benchmark harness.

Examples::

    batchspmm-bench --batch-size 100 --dim 50 --nnz-per-row 3 --nb 8,64,512
    batchspmm-bench --dim 32:256 --nnz-per-row 1:5 --algo swa-csr --format json --out r.json
    batchspmm-bench --dim 50 --nb 256 --explain
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .bench import BenchConfig, explain_plan, run_benchmark
from .errors import SpmmError

log = logging.getLogger("batchspmm")

_ALGO_NAMES = {"baseline": "baseline", "swa-st": "swa_st", "swa-csr": "swa_csr"}


def _count_or_range(text):
    try:
        if ":" in text:
            lo, hi = text.split(":", 1)
            return (int(lo), int(hi))
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N or MIN:MAX, got {text!r}") from None


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="batchspmm-bench",
        description="Time sequential and batched SpMM on synthetic or MatrixMarket batches.",
    )
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--dim", type=_count_or_range, default=50, help="N or MIN:MAX (mixed batch)")
    p.add_argument("--nnz-per-row", type=_count_or_range, default=3, help="N or MIN:MAX")
    p.add_argument("--nb", type=_int_list, default=[8, 16, 32, 64, 128, 256, 512],
                   help="comma-separated dense column counts")
    p.add_argument("--algo", action="append", choices=sorted(_ALGO_NAMES),
                   help="kernel to run; repeatable (default: all)")
    p.add_argument("--mode", choices=("sequential", "batched", "both"), default="both")
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--precision", choices=("f32", "f64"), default="f32")
    p.add_argument("--budget-bytes", type=int, default=32768)
    p.add_argument("--threads-per-block", type=int, default=128)
    p.add_argument("--workers", type=int, default=1, help="threads executing work units")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--explain", action="store_true", help="print launch plans and exit")
    p.add_argument("--input", action="append", default=[],
                   help="MatrixMarket file; repeatable, replaces generated matrices")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args) -> BenchConfig:
    algos = [_ALGO_NAMES[a] for a in (args.algo or ["baseline", "swa-st", "swa-csr"])]
    modes = ("sequential", "batched") if args.mode == "both" else (args.mode,)
    return BenchConfig(
        batch_size=args.batch_size,
        dim=args.dim,
        nnz_per_row=args.nnz_per_row,
        n_b_values=tuple(args.nb),
        algorithms=tuple(dict.fromkeys(algos)),
        modes=modes,
        repeats=args.repeats,
        seed=args.seed,
        precision=args.precision,
        budget_bytes=args.budget_bytes,
        threads_per_block=args.threads_per_block,
        workers=args.workers,
        inputs=tuple(args.input),
    )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    config = config_from_args(args)
    try:
        config.validate()
    except SpmmError as exc:
        parser.error(str(exc))

    try:
        if args.explain:
            plans = [explain_plan(config, n_b, a) for a in config.algorithms for n_b in config.n_b_values]
            text = json.dumps(plans if len(plans) > 1 else plans[0], indent=2) + "\n"
        else:
            report = run_benchmark(config)
            text = report.to_csv() if args.format == "csv" else report.to_json() + "\n"
            for r in report.rows:
                log.info("%s %s n_B=%d %.3e s %.3e FLOPS", r.algorithm, r.mode, r.n_b,
                         r.mean_seconds, r.flops)
    except FileNotFoundError as exc:
        parser.error(str(exc))
    except SpmmError as exc:
        print(f"batchspmm-bench: error: {exc}", file=sys.stderr)
        return 1

    if args.out:
        try:
            with open(args.out, "w") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"batchspmm-bench: cannot write {args.out}: {exc}", file=sys.stderr)
            return 1
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
