"""Two-layer tensor-parallel MLP with activation-order quantized weights.

``W1`` (K1 x N1) is column-sharded and ``W2`` (N1 x N2) row-sharded across
``tp`` ranks, Megatron style. Both are stored row-permuted so each group's
rows are contiguous (``W1[P1]``, ``W2[P2]``).

* ``run_naive``: each rank computes its slice of ``Y1``, all ranks AllGather
  ``Y1``, permute its columns by ``P2`` and re-chunk before the second GEMM.
* ``run_tp_aware``: ``W1``'s columns are pre-permuted offline by ``P2``
  (``W1[P1, P2]``), so the local ``Y1`` slice already lines up with the local
  rows of ``W2[P2]`` and the AllGather disappears.

Both finish with one AllReduce-sum.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import runtime
from .errors import InvalidArgument
from .perm import invert, permute_cols, permute_rows, reorder
from .quant import (
    QuantizedMatrix,
    dequantize,
    group_index_actorder,
    metadata_loads,
    n_groups,
    quantize_grouped,
    random_permutation,
)

VARIANTS = ("naive", "tp_aware", "actorder")


def layer_seeds(seed: int) -> tuple[int, int]:
    """Independent permutation seeds for the two layers, derived from one run seed."""
    a, b = np.random.SeedSequence(seed).generate_state(2)
    return int(a), int(b)


def layer_permutations(K1: int, N1: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """The activation-order permutations (phi1, phi2) used by :func:`prepare_weights`."""
    s1, s2 = layer_seeds(seed)
    return random_permutation(K1, s1), random_permutation(N1, s2)


@dataclass(frozen=True)
class PreparedWeights:
    """Quantized, offline-reordered weights for one MLP block.

    ``w1_q`` holds ``W1[P1]`` (naive) or ``W1[P1, P2]`` (tp_aware); ``w2_q``
    holds ``W2[P2]``. The ``actorder`` variant keeps both matrices in original
    row order with unordered group indices and identity ``p1``/``p2``.
    """

    w1_q: QuantizedMatrix
    w2_q: QuantizedMatrix
    p1: np.ndarray
    p2: np.ndarray
    variant: str
    g1_actorder: np.ndarray
    g2_actorder: np.ndarray

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.w1_q.K, self.w1_q.N, self.w2_q.N

    def dense(self, dtype=np.float64) -> tuple[np.ndarray, np.ndarray]:
        """Dequantized weights mapped back to the original row/column order."""
        w1, _ = dequantize(self.w1_q, dtype=dtype)
        w2, _ = dequantize(self.w2_q, dtype=dtype)
        w1 = permute_rows(w1, invert(self.p1))
        if self.variant == "tp_aware":
            w1 = permute_cols(w1, invert(self.p2))
        w2 = permute_rows(w2, invert(self.p2))
        return w1, w2


def prepare_weights(
    W1,
    W2,
    group_size: int = 128,
    bits: int = 4,
    seed: int = 0,
    variant: str = "naive",
    phi1=None,
    phi2=None,
) -> PreparedWeights:
    """Quantize and lay out both weight matrices for one pipeline variant.

    ``phi1``/``phi2`` override the seeded activation-order permutations.
    """
    W1 = np.asarray(W1)
    W2 = np.asarray(W2)
    if variant not in VARIANTS:
        raise InvalidArgument(f"variant must be one of {VARIANTS}, got {variant!r}")
    if W1.ndim != 2 or W2.ndim != 2 or W1.shape[1] != W2.shape[0]:
        raise InvalidArgument(f"non-conformable weights {W1.shape} and {W2.shape}")
    K1, N1 = W1.shape
    if phi1 is None or phi2 is None:
        d1, d2 = layer_permutations(K1, N1, seed)
        phi1 = d1 if phi1 is None else phi1
        phi2 = d2 if phi2 is None else phi2
    g1 = group_index_actorder(K1, group_size, phi1)
    g2 = group_index_actorder(N1, group_size, phi2)

    if variant == "actorder":
        ident1, ident2 = np.arange(K1), np.arange(N1)
        return PreparedWeights(
            quantize_grouped(W1, group_size, bits, g1),
            quantize_grouped(W2, group_size, bits, g2),
            ident1, ident2, variant, g1, g2,
        )

    p1, g1_opt = reorder(g1)
    p2, g2_opt = reorder(g2)
    w1_q = quantize_grouped(permute_rows(W1, p1), group_size, bits, g1_opt)
    w2_q = quantize_grouped(permute_rows(W2, p2), group_size, bits, g2_opt)
    if variant == "tp_aware":
        w1_q = w1_q.take_columns(p2)
    return PreparedWeights(w1_q, w2_q, p1, p2, variant, g1, g2)


def _check_run(X, pw: PreparedWeights, tp: int, allowed: tuple[str, ...]):
    if pw.variant not in allowed:
        raise InvalidArgument(f"expected weights prepared for {allowed}, got {pw.variant!r}")
    X = np.asarray(X)
    K1, N1, N2 = pw.shape
    if X.ndim != 2 or X.shape[1] != K1:
        raise InvalidArgument(f"X must be M x {K1}, got {X.shape}")
    if tp < 1 or N1 % tp or N2 % tp:
        raise InvalidArgument(f"N1={N1} and N2={N2} must be divisible by tp={tp}")
    return X


def _compute_dtype(X, dtype):
    if dtype is not None:
        return np.dtype(dtype)
    return X.dtype if np.issubdtype(X.dtype, np.floating) else np.dtype(np.float64)


def run_naive(X, pw: PreparedWeights, tp: int, *, dtype=None, elem_bytes=None, executor="threads"):
    """Ordered-g_idx pipeline with the mid-block AllGather. Returns ``(Y2, CommStats)``."""
    X = _check_run(X, pw, tp, ("naive",))
    dt = _compute_dtype(X, dtype)
    X = X.astype(dt, copy=False)

    def program(ctx):
        w1, loads1 = dequantize(pw.w1_q.column_block(ctx.rank, ctx.size), dtype=dt)
        y1_local = permute_cols(X, pw.p1) @ w1
        y1 = runtime.all_gather(ctx, y1_local, dim=1)
        y1 = permute_cols(y1, pw.p2)
        y1_local = runtime.chunk(ctx, y1, dim=1)
        w2, loads2 = dequantize(pw.w2_q.row_block(ctx.rank, ctx.size), dtype=dt)
        ctx.record_metadata_loads(loads1 + loads2)
        return runtime.all_reduce_sum(ctx, y1_local @ w2)

    results, stats = runtime.spmd_run(tp, program, elem_bytes=elem_bytes, executor=executor)
    return runtime.gather_results(results), stats


def run_tp_aware(X, pw: PreparedWeights, tp: int, *, dtype=None, elem_bytes=None, executor="threads"):
    """Pipeline without the intermediate collective. Returns ``(Y2, CommStats)``.

    Also accepts ``actorder`` weights: with identity permutations the same
    program is the plain Megatron MLP over unordered group indices.
    """
    X = _check_run(X, pw, tp, ("tp_aware", "actorder"))
    dt = _compute_dtype(X, dtype)
    X = X.astype(dt, copy=False)

    def program(ctx):
        w1, loads1 = dequantize(pw.w1_q.column_block(ctx.rank, ctx.size), dtype=dt)
        y1_local = permute_cols(X, pw.p1) @ w1
        w2, loads2 = dequantize(pw.w2_q.row_block(ctx.rank, ctx.size), dtype=dt)
        ctx.record_metadata_loads(loads1 + loads2)
        return runtime.all_reduce_sum(ctx, y1_local @ w2)

    results, stats = runtime.spmd_run(tp, program, elem_bytes=elem_bytes, executor=executor)
    return runtime.gather_results(results), stats


def run(X, pw: PreparedWeights, tp: int, **kw):
    if pw.variant == "naive":
        return run_naive(X, pw, tp, **kw)
    return run_tp_aware(X, pw, tp, **kw)


def fixed_order_matmul(A, B) -> np.ndarray:
    """float64 ``A @ B`` summing the inner dimension strictly in index order."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[0]:
        raise InvalidArgument(f"non-conformable shapes {A.shape} and {B.shape}")
    out = np.zeros((A.shape[0], B.shape[1]))
    for k in range(A.shape[1]):
        out += A[:, k:k + 1] * B[k]
    return out


def run_dense_oracle(X, W1, W2) -> np.ndarray:
    return fixed_order_matmul(fixed_order_matmul(X, W1), W2)


def expected_metadata_loads(pw: PreparedWeights, tp: int) -> int:
    """Closed-form total of the per-rank metadata-load counters for one run."""
    K1, N1, _ = pw.shape
    total = 0
    h = N1 // tp
    for r in range(tp):
        total += metadata_loads(pw.w1_q.g_idx)
        total += metadata_loads(pw.w2_q.g_idx[r * h:(r + 1) * h])
    return total


def ordered_metadata_loads(K1: int, N1: int, group_size: int, tp: int) -> int:
    """Closed-form load total for reordered weights, needing no weights at all.

    A reordered group index is exactly the contiguous one, so rank ``r``'s row
    block of ``W2`` touches every group between its first and last row.
    """
    h = N1 // tp
    w2 = sum((r * h + h - 1) // group_size - (r * h) // group_size + 1 for r in range(tp))
    return tp * n_groups(K1, group_size) + w2
