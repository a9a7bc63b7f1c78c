"""Seeded synthetic problems for the pipelines."""
from __future__ import annotations

import numpy as np

from .errors import InvalidArgument
from .pipeline import layer_permutations
from .quant import group_index_actorder


def normal_problem(M: int, K1: int, N1: int, N2: int, seed: int, dtype=np.float32):
    """Standard-normal activations and weights ``(X, W1, W2)``."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((M, K1)).astype(dtype)
    W1 = rng.standard_normal((K1, N1)).astype(dtype)
    W2 = rng.standard_normal((N1, N2)).astype(dtype)
    return X, W1, W2


def lossless_matrix(g_idx, N: int, bits: int, rng: np.random.Generator) -> np.ndarray:
    """Integer matrix that grouped quantization reproduces exactly.

    Every (group, column) spans exactly ``2**bits - 1``, which forces
    ``scale == 1`` and an integer zero point, so quantize/dequantize is the
    identity. Each group needs at least two rows.
    """
    g_idx = np.asarray(g_idx)
    maxq = (1 << bits) - 1
    K = g_idx.shape[0]
    q = rng.integers(0, maxq + 1, size=(K, N))
    offset = rng.integers(0, maxq + 1, size=(int(g_idx.max()) + 1, N))
    for g in range(int(g_idx.max()) + 1):
        rows = np.flatnonzero(g_idx == g)
        if rows.size < 2:
            raise InvalidArgument(f"group {g} has {rows.size} row(s); lossless weights need >= 2")
        lo, hi = rng.choice(rows, size=2, replace=False)
        q[lo] = 0
        q[hi] = maxq
    return (q - offset[g_idx]).astype(np.float64)


def lossless_problem(M: int, K1: int, N1: int, N2: int, group_size: int, bits: int, seed: int, x_range: int = 3):
    """Integer ``(X, W1, W2)`` that survive :func:`~tpaware.pipeline.prepare_weights` exactly.

    The weights are built against the activation-order groups that
    ``prepare_weights(..., seed=seed)`` will derive, so every float64 product
    in the pipelines is an exact integer.
    """
    phi1, phi2 = layer_permutations(K1, N1, seed)
    rng = np.random.default_rng([seed, 1])
    W1 = lossless_matrix(group_index_actorder(K1, group_size, phi1), N1, bits, rng)
    W2 = lossless_matrix(group_index_actorder(N1, group_size, phi2), N2, bits, rng)
    X = rng.integers(-x_range, x_range + 1, size=(M, K1)).astype(np.float64)
    return X, W1, W2
