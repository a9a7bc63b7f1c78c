"""Permutation utilities and the group-index reorder step.

``M[P]`` notation throughout: ``permute_rows(M, P)[i] == M[P[i]]``.
"""
from __future__ import annotations

import numpy as np

from .errors import InvalidArgument
from .quant import is_permutation


def reorder(g_actorder: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sort an activation-order group index so each group's rows are adjacent.

    Returns ``(P, g_optimized)`` with ``g_optimized = g_actorder[P]``. The sort
    is stable, so rows sharing a group keep their original relative order and
    an already ordered input yields the identity.
    """
    g = np.asarray(g_actorder)
    if g.ndim != 1:
        raise InvalidArgument(f"group index must be 1-D, got shape {g.shape}")
    P = np.argsort(g, kind="stable").astype(np.int64)
    return P, g[P].astype(np.int64)


def invert(P: np.ndarray) -> np.ndarray:
    P = np.asarray(P)
    if not is_permutation(P):
        raise InvalidArgument("not a permutation")
    Q = np.empty_like(P, dtype=np.int64)
    Q[P] = np.arange(P.shape[0], dtype=np.int64)
    return Q


def compose(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Permutation equivalent to applying ``P`` then ``Q``: ``M[P][Q] == M[compose(P, Q)]``."""
    return np.asarray(P)[np.asarray(Q)]


def _check(P: np.ndarray, n: int, what: str) -> np.ndarray:
    P = np.asarray(P)
    if P.ndim != 1 or P.shape[0] != n:
        raise InvalidArgument(f"permutation length {P.shape} does not match {n} {what}")
    if not is_permutation(P):
        raise InvalidArgument("not a permutation")
    return P


def permute_rows(M: np.ndarray, P: np.ndarray) -> np.ndarray:
    M = np.asarray(M)
    return M[_check(P, M.shape[0], "rows")]


def permute_cols(M: np.ndarray, P: np.ndarray) -> np.ndarray:
    M = np.asarray(M)
    return M[:, _check(P, M.shape[1], "columns")]
