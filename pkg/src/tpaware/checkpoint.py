"""Binary container for one quantized matrix (``.tpq``).

All integers little-endian. Layout::

    offset size  field
    0      4     magic  b"TPQ1"
    4      2     version (u16) = 1
    6      1     bits (u8)
    7      1     flags (u8): bit0 row permutation present,
                             bit1 column permutation present
    8      4     K (u32)
    12     4     N (u32)
    16     4     group size G (u32)
    20     4     n_groups (u32) = ceil(K / G)
    24     8     packed qweight byte count (u64) = ceil(K * N * bits / 8)
    32     ...   packed qweight: little-endian bitstream, row-major codes
           4*n_groups*N   scales  float32, row-major
           4*n_groups*N   zeros   int32, row-major
           4*K            g_idx   int32
           4*K            row permutation int32   (if bit0)
           4*N            column permutation int32 (if bit1)
    end-4  4     CRC-32 (zlib) of every preceding byte

A pair of files ``w1.tpq``/``w2.tpq`` stores a :class:`PreparedWeights`;
``w1.tpq`` carries ``P1`` as its row permutation (plus ``P2`` as column
permutation in the TP-aware layout) and ``w2.tpq`` carries ``P2``.
"""
from __future__ import annotations

import io
import os
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidArgument
from .perm import invert
from .quant import QuantizedMatrix, is_permutation, n_groups, pack_bits, unpack_bits

MAGIC = b"TPQ1"
VERSION = 1
_HEADER = struct.Struct("<4sHBBIIIIQ")
FLAG_ROW_PERM = 1
FLAG_COL_PERM = 2


@dataclass(frozen=True)
class Checkpoint:
    q: QuantizedMatrix
    row_perm: np.ndarray | None = None
    col_perm: np.ndarray | None = None


def to_bytes(q: QuantizedMatrix, row_perm=None, col_perm=None) -> bytes:
    q.validate()
    K, N = q.shape
    ng = q.scales.shape[0]
    if ng != n_groups(K, q.group_size):
        raise InvalidArgument("scales row count does not match ceil(K / G)")
    flags = 0
    if row_perm is not None:
        if not is_permutation(row_perm, K):
            raise InvalidArgument("row_perm must be a permutation of length K")
        flags |= FLAG_ROW_PERM
    if col_perm is not None:
        if not is_permutation(col_perm, N):
            raise InvalidArgument("col_perm must be a permutation of length N")
        flags |= FLAG_COL_PERM
    packed = pack_bits(q.qweight, q.bits)
    out = io.BytesIO()
    out.write(_HEADER.pack(MAGIC, VERSION, q.bits, flags, K, N, q.group_size, ng, len(packed)))
    out.write(packed)
    out.write(np.ascontiguousarray(q.scales, dtype="<f4").tobytes())
    out.write(np.ascontiguousarray(q.zeros, dtype="<i4").tobytes())
    out.write(np.ascontiguousarray(q.g_idx, dtype="<i4").tobytes())
    if row_perm is not None:
        out.write(np.asarray(row_perm, dtype="<i4").tobytes())
    if col_perm is not None:
        out.write(np.asarray(col_perm, dtype="<i4").tobytes())
    body = out.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


def from_bytes(data: bytes) -> Checkpoint:
    if len(data) < _HEADER.size + 4:
        raise InvalidArgument("truncated checkpoint")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise InvalidArgument("checkpoint CRC mismatch")
    magic, version, bits, flags, K, N, G, ng, nq = _HEADER.unpack_from(body)
    if magic != MAGIC:
        raise InvalidArgument(f"bad magic {magic!r}")
    if version != VERSION:
        raise InvalidArgument(f"unsupported checkpoint version {version}")
    pos = _HEADER.size

    def take(nbytes: int) -> bytes:
        nonlocal pos
        if pos + nbytes > len(body):
            raise InvalidArgument("truncated checkpoint")
        chunk = body[pos:pos + nbytes]
        pos += nbytes
        return chunk

    qweight = unpack_bits(take(nq), bits, K * N).reshape(K, N)
    scales = np.frombuffer(take(4 * ng * N), dtype="<f4").reshape(ng, N).astype(np.float32)
    zeros = np.frombuffer(take(4 * ng * N), dtype="<i4").reshape(ng, N).astype(np.int32)
    g_idx = np.frombuffer(take(4 * K), dtype="<i4").astype(np.int64)
    row_perm = np.frombuffer(take(4 * K), dtype="<i4").astype(np.int64) if flags & FLAG_ROW_PERM else None
    col_perm = np.frombuffer(take(4 * N), dtype="<i4").astype(np.int64) if flags & FLAG_COL_PERM else None
    if pos != len(body):
        raise InvalidArgument(f"{len(body) - pos} trailing bytes in checkpoint")
    q = QuantizedMatrix(qweight, scales, zeros, g_idx, G, bits)
    q.validate()
    return Checkpoint(q, row_perm, col_perm)


def save(path: str | os.PathLike, q: QuantizedMatrix, row_perm=None, col_perm=None) -> None:
    Path(path).write_bytes(to_bytes(q, row_perm, col_perm))


def load(path: str | os.PathLike) -> Checkpoint:
    return from_bytes(Path(path).read_bytes())


def save_prepared(directory: str | os.PathLike, pw) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    if pw.variant == "actorder":
        save(d / "w1.tpq", pw.w1_q)
        save(d / "w2.tpq", pw.w2_q)
        return
    save(d / "w1.tpq", pw.w1_q, pw.p1, pw.p2 if pw.variant == "tp_aware" else None)
    save(d / "w2.tpq", pw.w2_q, pw.p2)


def load_prepared(directory: str | os.PathLike):
    from .pipeline import PreparedWeights

    d = Path(directory)
    c1, c2 = load(d / "w1.tpq"), load(d / "w2.tpq")
    K1, N1 = c1.q.shape
    if c1.row_perm is None:
        ident1, ident2 = np.arange(K1), np.arange(N1)
        return PreparedWeights(c1.q, c2.q, ident1, ident2, "actorder", c1.q.g_idx, c2.q.g_idx)
    if c2.row_perm is None:
        raise InvalidArgument("w2.tpq lacks the P2 row permutation")
    p1, p2 = c1.row_perm, c2.row_perm
    variant = "tp_aware" if c1.col_perm is not None else "naive"
    if variant == "tp_aware" and not np.array_equal(c1.col_perm, p2):
        raise InvalidArgument("w1.tpq column permutation disagrees with w2.tpq row permutation")
    # act-order group index: g_act[P[i]] == g_opt[i]
    g1 = c1.q.g_idx[invert(p1)]
    g2 = c2.q.g_idx[invert(p2)]
    return PreparedWeights(c1.q, c2.q, p1, p2, variant, g1, g2)
