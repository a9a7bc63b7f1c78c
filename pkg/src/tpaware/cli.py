"""``tpaware-bench``: run the naive and TP-aware pipelines over an experiment matrix.

Exit status is 0 iff every output matched the dense oracle within tolerance.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import bench, costmodel
from .errors import InvalidArgument

log = logging.getLogger("tpaware")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _shape(text: str) -> tuple[int, int, int]:
    values = _int_list(text)
    if len(values) != 3:
        raise argparse.ArgumentTypeError("shape is K1,N1,N2")
    return values


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tpaware-bench", description=__doc__.splitlines()[0])
    p.add_argument("--preset", default="llama70b", choices=["llama70b", "granite20b", "custom"])
    p.add_argument("--shape", type=_shape, help="K1,N1,N2 for --preset custom")
    p.add_argument("--m", type=_int_list, default=(1, 2, 4, 8, 16), help="batch sizes (default 1,2,4,8,16)")
    p.add_argument("--tp", type=_int_list, default=(1, 2, 4, 8), help="TP degrees (default 1,2,4,8)")
    p.add_argument("--group-size", type=int, default=128)
    p.add_argument("--bits", type=int, default=4, choices=[2, 3, 4, 8])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pipeline", default="both", choices=sorted(bench.PIPELINE_SETS))
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--tolerance", type=float, default=1e-4,
                   help="max |Y - oracle| allowed, relative to max |oracle| (default 1e-4)")
    p.add_argument("--mode", default="simulate", choices=bench.MODES,
                   help="simulate: run the pipelines; project: closed-form bytes and latencies only")
    p.add_argument("--scale", type=int,
                   help=f"divide preset dims by this (default {bench.DEFAULT_SIM_SCALE} when simulating, 1 when projecting)")
    p.add_argument("--comm-dtype", default="float32", choices=["float32", "float16"],
                   help="element width used for byte accounting")
    p.add_argument("--executor", default="threads", choices=["threads", "sequential"])
    p.add_argument("--format", default="csv", choices=sorted(bench.ENCODERS))
    p.add_argument("--out", help="output file (default stdout)")
    p.add_argument("--emit-events", metavar="PATH", help="write collective events as JSON lines")
    p.add_argument("--cost-params", metavar="FILE", help="JSON cost parameters (default: fitted A100 values)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        spec = bench.RunSpec(
            preset=args.preset,
            shape=args.shape,
            m_list=args.m,
            tp_list=args.tp,
            group_size=args.group_size,
            bits=args.bits,
            seed=args.seed,
            pipeline=args.pipeline,
            repeat=args.repeat,
            tolerance=args.tolerance,
            mode=args.mode,
            scale=args.scale,
            elem_bytes=2 if args.comm_dtype == "float16" else 4,
            executor=args.executor,
            cost_params=costmodel.load_params(args.cost_params) if args.cost_params else None,
        )
        log.info("running %s shape=%s", spec.preset, spec.resolved_shape())
        report = bench.run_benchmark(spec)
    except (InvalidArgument, OSError) as exc:
        print(f"tpaware-bench: error: {exc}", file=sys.stderr)
        return 2

    text = bench.emit_report(report, args.format, args.out)
    if args.out is None:
        sys.stdout.write(text)
    if args.emit_events:
        import json

        with open(args.emit_events, "w", encoding="utf-8") as fh:
            for event in report.events:
                fh.write(json.dumps(event) + "\n")
    for f in report.failures:
        print(f"tpaware-bench: equivalence check failed: {f}", file=sys.stderr)
    return 0 if report.ok else 1
