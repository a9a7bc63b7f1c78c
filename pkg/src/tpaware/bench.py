"""Experiment-matrix harness: run both pipelines over (m, tp) cells and report."""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from . import costmodel, pipeline
from .errors import InvalidArgument
from .reference_data import SHAPES
from .runtime import CommStats
from .synthetic import normal_problem

COLUMNS = (
    "m", "k1", "n1", "n2", "tp", "pipeline", "max_abs_diff", "allgather_bytes",
    "allreduce_bytes", "metadata_loads", "wall_ms_median", "projected_ms", "speedup_projected",
)
TIMING_COLUMNS = ("wall_ms_median",)
PIPELINE_SETS = {
    "naive": ("naive",),
    "tp_aware": ("tp_aware",),
    "both": ("naive", "tp_aware"),
    "actorder": ("actorder",),
    "all": ("naive", "tp_aware", "actorder"),
}
MODES = ("simulate", "project")
DEFAULT_SIM_SCALE = 16


@dataclass
class RunSpec:
    preset: str = "llama70b"
    shape: tuple[int, int, int] | None = None
    m_list: tuple[int, ...] = (1, 2, 4, 8, 16)
    tp_list: tuple[int, ...] = (1, 2, 4, 8)
    group_size: int = 128
    bits: int = 4
    seed: int = 0
    pipeline: str = "both"
    repeat: int = 3
    tolerance: float = 1e-4
    mode: str = "simulate"
    scale: int | None = None
    elem_bytes: int = 4
    executor: str = "threads"
    cost_params: costmodel.CostParams | None = None

    def resolved_shape(self) -> tuple[int, int, int]:
        """(K1, N1, N2) actually run, after preset lookup and down-scaling."""
        if self.preset == "custom":
            if self.shape is None:
                raise InvalidArgument("custom preset needs an explicit shape")
            base = tuple(self.shape)
        elif self.preset in SHAPES:
            base = SHAPES[self.preset]
        else:
            raise InvalidArgument(f"unknown preset {self.preset!r}")
        scale = self.effective_scale()
        if any(v % scale for v in base):
            raise InvalidArgument(f"scale {scale} does not divide shape {base}")
        return tuple(v // scale for v in base)

    def effective_scale(self) -> int:
        if self.scale is not None:
            if self.scale < 1:
                raise InvalidArgument("scale must be >= 1")
            return self.scale
        if self.preset == "custom" or self.mode == "project":
            return 1
        return DEFAULT_SIM_SCALE

    def validate(self) -> None:
        K1, N1, N2 = self.resolved_shape()
        if self.mode not in MODES:
            raise InvalidArgument(f"mode must be one of {MODES}")
        if self.pipeline not in PIPELINE_SETS:
            raise InvalidArgument(f"pipeline must be one of {sorted(PIPELINE_SETS)}")
        for tp in self.tp_list:
            if tp < 1 or N1 % tp or N2 % tp:
                raise InvalidArgument(f"N1={N1}, N2={N2} not divisible by tp={tp}")
        if any(m < 1 for m in self.m_list):
            raise InvalidArgument("batch sizes must be >= 1")
        if not 1 <= self.group_size <= min(K1, N1):
            raise InvalidArgument(f"group size {self.group_size} must be in [1, min(K1, N1)]")
        if self.repeat < 1:
            raise InvalidArgument("repeat must be >= 1")


@dataclass
class Report:
    spec: RunSpec
    rows: list[dict] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def _row(m, shape, tp, name, **values) -> dict:
    row = dict.fromkeys(COLUMNS)
    row.update(m=m, k1=shape[0], n1=shape[1], n2=shape[2], tp=tp, pipeline=name)
    row.update(values)
    return row


def run_benchmark(spec: RunSpec) -> Report:
    spec.validate()
    params = spec.cost_params or costmodel.default_params()
    model_params = dataclasses.replace(params, elem_bytes=spec.elem_bytes)
    shape = spec.resolved_shape()
    names = PIPELINE_SETS[spec.pipeline]
    report = Report(spec)
    if spec.mode == "project":
        _project_cells(report, shape, names, model_params)
        return report

    K1, N1, N2 = shape
    _, W1, W2 = normal_problem(1, K1, N1, N2, spec.seed)
    prepared = {
        name: pipeline.prepare_weights(W1, W2, spec.group_size, spec.bits, spec.seed, variant=name)
        for name in names
    }
    w1_dense, w2_dense = next(iter(prepared.values())).dense()
    for m in spec.m_list:
        X = np.random.default_rng([spec.seed, m]).standard_normal((m, K1)).astype(np.float32)
        oracle = pipeline.run_dense_oracle(X, w1_dense, w2_dense)
        scale = max(float(np.abs(oracle).max()), np.finfo(np.float64).tiny)
        cell = (m, K1, N1, N2)
        for tp in spec.tp_list:
            sp = None if tp == 1 else costmodel.speedup(cell, tp, model_params)
            for name in names:
                y, stats, wall = _timed_runs(X, prepared[name], tp, spec)
                diff = float(np.abs(y.astype(np.float64) - oracle).max())
                if not diff <= spec.tolerance * scale:
                    report.failures.append({"m": m, "tp": tp, "pipeline": name, "max_abs_diff": diff})
                report.rows.append(_row(
                    m, shape, tp, name,
                    max_abs_diff=diff,
                    allgather_bytes=stats.allgather_bytes_total,
                    allreduce_bytes=stats.allreduce_bytes_total,
                    metadata_loads=stats.metadata_loads_total,
                    wall_ms_median=wall,
                    projected_ms=costmodel.project_from_stats(cell, tp, stats, model_params) * 1e3,
                    speedup_projected=sp if name == "tp_aware" else None,
                ))
                report.events.extend(
                    {"m": m, "tp": tp, "pipeline": name, **e.to_dict()} for e in stats.events
                )
    return report


def _timed_runs(X, pw, tp, spec) -> tuple[np.ndarray, CommStats, float]:
    walls = []
    first = None
    for _ in range(spec.repeat):
        t0 = time.perf_counter()
        y, stats = pipeline.run(X, pw, tp, elem_bytes=spec.elem_bytes, executor=spec.executor)
        walls.append((time.perf_counter() - t0) * 1e3)
        if first is None:
            first = (y, stats)
    return first[0], first[1], statistics.median(walls)


def _project_cells(report: Report, shape, names, params) -> None:
    spec = report.spec
    K1, N1, N2 = shape
    for m in spec.m_list:
        cell = (m, K1, N1, N2)
        for tp in spec.tp_list:
            b = costmodel.predicted_bytes(cell, tp, spec.elem_bytes)
            for name in names:
                kind = "naive" if name == "naive" else "tp_aware"
                ordered = name != "actorder"
                report.rows.append(_row(
                    m, shape, tp, name,
                    allgather_bytes=b["naive_allgather"] if name == "naive" else 0,
                    allreduce_bytes=b["allreduce"],
                    metadata_loads=pipeline.ordered_metadata_loads(K1, N1, spec.group_size, tp) if ordered else None,
                    projected_ms=costmodel.project_latency(cell, tp, kind, params) * 1e3,
                    speedup_projected=None if tp == 1 or name != "tp_aware" else costmodel.speedup(cell, tp, params),
                ))


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def encode_csv(rows, columns=COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r[c]) for c in columns])
    return buf.getvalue()


def encode_json(rows, columns=COLUMNS) -> str:
    return json.dumps([{c: r[c] for c in columns} for r in rows], indent=1) + "\n"


def encode_text(rows, columns=COLUMNS) -> str:
    def show(v):
        if isinstance(v, float):
            return f"{v:.6g}"
        return "" if v is None else str(v)

    cells = [list(columns)] + [[show(r[c]) for c in columns] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(columns))]
    return "".join("  ".join(c.rjust(w) for c, w in zip(row, widths)).rstrip() + "\n" for row in cells)


ENCODERS = {"csv": encode_csv, "json": encode_json, "text": encode_text}


def emit_report(report_or_rows, fmt: str = "csv", out=None) -> str:
    """Encode rows in a fixed column order; write to ``out`` (path) if given."""
    rows = report_or_rows.rows if isinstance(report_or_rows, Report) else list(report_or_rows)
    if fmt not in ENCODERS:
        raise InvalidArgument(f"format must be one of {sorted(ENCODERS)}")
    text = ENCODERS[fmt](rows)
    if out is not None:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text
