"""Alpha-beta-gamma latency model for the two MLP pipelines.

latency = 2*M*(K1*N1 + N1*N2) / (tp * gamma)
          + sum over collectives with tp > 1 of (alpha + beta * bytes)

Collective byte counts follow :mod:`tpaware.runtime`'s accounting, so
projections can be fed either closed-form bytes or a measured ``CommStats``.
"""
from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import lsq_linear

from . import reference_data
from .errors import InvalidArgument
from .runtime import CommStats, allgather_bytes, allreduce_bytes

PIPELINES = ("naive", "tp_aware")


@dataclass(frozen=True)
class CostParams:
    alpha: float  # seconds per collective call
    beta: float  # seconds per byte
    gamma: float  # flop per second
    elem_bytes: int = 2

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "elem_bytes"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise InvalidArgument(f"{name} must be strictly positive, got {v}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "CostParams":
        return cls(float(d["alpha"]), float(d["beta"]), float(d["gamma"]), int(d.get("elem_bytes", 2)))


def load_params(path: str | os.PathLike) -> CostParams:
    """Read ``{"alpha": ..., "beta": ..., "gamma": ..., "elem_bytes": ...}`` from JSON."""
    return CostParams.from_dict(json.loads(Path(path).read_text()))


def _check_shape(shape, tp):
    if len(shape) != 4 or any(int(v) < 1 for v in shape):
        raise InvalidArgument(f"shape must be positive (M, K1, N1, N2), got {shape}")
    if tp < 1:
        raise InvalidArgument(f"tp must be >= 1, got {tp}")


def gemm_flops(shape) -> int:
    M, K1, N1, N2 = shape
    return 2 * M * (K1 * N1 + N1 * N2)


def predicted_bytes(shape, tp: int, elem_bytes: int) -> dict[str, int]:
    """Closed-form collective traffic of one run of each pipeline."""
    M, _, N1, N2 = shape
    ag = allgather_bytes(M * (N1 // tp) * elem_bytes, tp)
    ar = allreduce_bytes(M * N2 * elem_bytes, tp)
    return {
        "naive_allgather": ag,
        "allreduce": ar,
    }


def _comm_seconds(bytes_list, tp, params):
    if tp == 1:
        return 0.0
    return sum(params.alpha + params.beta * b for b in bytes_list)


def project_latency(shape, tp: int, pipeline: str, params: CostParams) -> float:
    """Projected seconds for one MLP block; ``shape`` is ``(M, K1, N1, N2)``."""
    _check_shape(shape, tp)
    if pipeline not in PIPELINES:
        raise InvalidArgument(f"pipeline must be one of {PIPELINES}")
    b = predicted_bytes(shape, tp, params.elem_bytes)
    collectives = [b["allreduce"]]
    if pipeline == "naive":
        collectives.insert(0, b["naive_allgather"])
    return gemm_flops(shape) / (tp * params.gamma) + _comm_seconds(collectives, tp, params)


def project_from_stats(shape, tp: int, stats: CommStats, params: CostParams) -> float:
    """Projected seconds using measured collective traffic instead of the closed form."""
    _check_shape(shape, tp)
    compute = gemm_flops(shape) / (tp * params.gamma)
    return compute + _comm_seconds([e.nbytes for e in stats.events], tp, params)


def speedup(shape, tp: int, params: CostParams) -> float:
    return project_latency(shape, tp, "naive", params) / project_latency(shape, tp, "tp_aware", params)


def speedup_table(shapes, tp_list, m_list, params: CostParams) -> list[dict]:
    """Rows of projected latencies; tp=1 rows carry ``speedup=None``.

    ``shapes`` is a mapping of name -> (K1, N1, N2) or a list of such triples.
    """
    if not isinstance(shapes, dict):
        shapes = {f"{k1}x{n1}x{n2}": (k1, n1, n2) for k1, n1, n2 in shapes}
    rows = []
    for name, (k1, n1, n2) in shapes.items():
        for tp in tp_list:
            for m in m_list:
                shape = (m, k1, n1, n2)
                naive = project_latency(shape, tp, "naive", params)
                aware = project_latency(shape, tp, "tp_aware", params)
                rows.append({
                    "shape": name, "m": m, "k1": k1, "n1": n1, "n2": n2, "tp": tp,
                    "naive_ms": naive * 1e3,
                    "tp_aware_ms": aware * 1e3,
                    "speedup": None if tp == 1 else naive / aware,
                })
    return rows


TABLE_COLUMNS = ("shape", "m", "k1", "n1", "n2", "tp", "naive_ms", "tp_aware_ms", "speedup")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def format_table(rows, fmt: str = "text") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in TABLE_COLUMNS])
        return buf.getvalue()
    if fmt != "text":
        raise InvalidArgument(f"unknown table format {fmt!r}")
    cells = [list(TABLE_COLUMNS)] + [[_fmt(r[c]) for c in TABLE_COLUMNS] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(TABLE_COLUMNS))]
    return "".join("  ".join(c.rjust(w) for c, w in zip(row, widths)) + "\n" for row in cells)


def fit_cost_params(
    model: str = "llama70b",
    gpu: str = "A100",
    m: int = 8,
    tp_list=(2, 4, 8),
    elem_bytes: int = reference_data.ELEM_BYTES,
) -> CostParams:
    """Calibrate ``CostParams`` against the published latencies at batch size ``m``.

    ``gamma`` comes from the tp=1 rows (no communication, so latency is all
    compute). ``alpha`` and ``beta`` are then a bounded linear least-squares
    fit over both pipelines' latencies at each tp in ``tp_list``.
    """
    K1, N1, N2 = reference_data.SHAPES[model]
    shape = (m, K1, N1, N2)
    flops = gemm_flops(shape)
    base = reference_data.LATENCIES[(model, gpu, 1)][m]
    gamma = flops / (np.mean(base) * 1e-3)

    A, y = [], []
    for tp in tp_list:
        naive_ms, aware_ms = reference_data.LATENCIES[(model, gpu, tp)][m]
        compute = flops / (tp * gamma)
        b = predicted_bytes(shape, tp, elem_bytes)
        A.append([2.0, b["naive_allgather"] + b["allreduce"]])
        y.append(naive_ms * 1e-3 - compute)
        A.append([1.0, b["allreduce"]])
        y.append(aware_ms * 1e-3 - compute)
    A = np.asarray(A, dtype=np.float64)
    y = np.asarray(y)
    # column scaling keeps the solver well conditioned (bytes ~1e6, seconds ~1e-4)
    col = np.abs(A).max(axis=0)
    fit = lsq_linear(A / col, y, bounds=(np.full(2, 1e-15), np.full(2, np.inf)))
    alpha, beta = fit.x / col
    return CostParams(alpha=float(alpha), beta=float(beta), gamma=float(gamma), elem_bytes=elem_bytes)


def default_params() -> CostParams:
    """Llama-70B A100 fit at M=8; recomputed on every call, never cached on disk."""
    return fit_cost_params()
