"""Grouped low-bit quantization with GPTQ-style metadata.

Group index arrays and permutations are plain 1-D ``int64`` numpy arrays.
A group index array maps every weight row to the row of ``scales``/``zeros``
holding its quantization metadata.

Random permutations are drawn with numpy's ``Generator(PCG64(seed))`` and
``Generator.permutation``; golden values in the tests pin that stream.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

SUPPORTED_BITS = (2, 3, 4, 8)
# scale floor 2**(floor(log2 max|w|) - SCALE_FLOOR_BITS) bounds |zero| below 2**30
SCALE_FLOOR_BITS = 29


def n_groups(K: int, G: int) -> int:
    return -(-K // G)


def group_index_naive(K: int, G: int) -> np.ndarray:
    """Contiguous grouping: row ``i`` belongs to group ``i // G``."""
    if K <= 0 or G <= 0:
        raise InvalidArgument(f"K and G must be positive, got K={K}, G={G}")
    if G > K:
        raise InvalidArgument(f"group size {G} exceeds row count {K}")
    return np.arange(K, dtype=np.int64) // G


def random_permutation(K: int, seed: int) -> np.ndarray:
    if K <= 0:
        raise InvalidArgument(f"K must be positive, got {K}")
    rng = np.random.Generator(np.random.PCG64(seed))
    return rng.permutation(K).astype(np.int64)


def is_permutation(p: np.ndarray, K: int | None = None) -> bool:
    p = np.asarray(p)
    if p.ndim != 1 or (K is not None and p.shape[0] != K):
        return False
    if not np.issubdtype(p.dtype, np.integer):
        return False
    return bool(np.array_equal(np.sort(p), np.arange(p.shape[0])))


def group_index_actorder(K: int, G: int, phi: np.ndarray) -> np.ndarray:
    """Activation-order grouping: row ``i`` belongs to group ``phi[i] // G``.

    ``phi`` stands in for the significance ordering a real quantizer would
    pick; the result is generally unordered.
    """
    phi = np.asarray(phi)
    if phi.ndim != 1 or phi.shape[0] != K:
        raise InvalidArgument(f"phi must have length {K}, got shape {phi.shape}")
    if G <= 0 or G > K:
        raise InvalidArgument(f"invalid group size {G} for K={K}")
    if not is_permutation(phi, K):
        raise InvalidArgument("phi is not a permutation of 0..K-1")
    return phi.astype(np.int64) // G


def is_ordered(g_idx: np.ndarray) -> bool:
    g_idx = np.asarray(g_idx)
    return bool(np.all(g_idx[1:] >= g_idx[:-1]))


def check_group_index(g_idx: np.ndarray, K: int, G: int) -> None:
    """Raise unless ``g_idx`` has the group-count multiset of contiguous grouping."""
    g_idx = np.asarray(g_idx)
    if g_idx.shape != (K,):
        raise InvalidArgument(f"g_idx must have shape ({K},), got {g_idx.shape}")
    if not np.issubdtype(g_idx.dtype, np.integer):
        raise InvalidArgument("g_idx must be integer")
    ng = n_groups(K, G)
    if K and (g_idx.min() < 0 or g_idx.max() >= ng):
        raise InvalidArgument(f"g_idx entries must lie in [0, {ng})")
    expected = np.bincount(group_index_naive(K, G), minlength=ng)
    if not np.array_equal(np.bincount(g_idx, minlength=ng), expected):
        raise InvalidArgument("g_idx group sizes do not match group size G")


def metadata_loads(g_idx_traversal: np.ndarray) -> int:
    """Metadata fetches needed to walk rows in the given order.

    Consecutive rows in the same group reuse the loaded scales/zeros; every
    group switch, plus the first row, costs one load.
    """
    g = np.asarray(g_idx_traversal)
    if g.size == 0:
        return 0
    return 1 + int(np.count_nonzero(g[1:] != g[:-1]))


@dataclass(frozen=True)
class QuantizedMatrix:
    """A K x N weight matrix in grouped low-bit form.

    ``qweight`` is kept unpacked (one ``uint8`` per weight) so shards can be cut
    on any row or column; :func:`pack_bits` produces the packed storage form
    used on disk. ``zeros`` are ``int32`` because the zero point is not clamped
    to the b-bit range (see :func:`quantize_grouped`).
    """

    qweight: np.ndarray
    scales: np.ndarray
    zeros: np.ndarray
    g_idx: np.ndarray
    group_size: int
    bits: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.qweight.shape

    @property
    def K(self) -> int:
        return self.qweight.shape[0]

    @property
    def N(self) -> int:
        return self.qweight.shape[1]

    @property
    def maxq(self) -> int:
        return (1 << self.bits) - 1

    def validate(self) -> None:
        K, N = self.shape
        if self.bits not in SUPPORTED_BITS:
            raise InvalidArgument(f"unsupported bit width {self.bits}")
        ng = self.scales.shape[0]
        if self.scales.shape != (ng, N) or self.zeros.shape != (ng, N):
            raise InvalidArgument("scales/zeros must be (n_groups, N)")
        if self.g_idx.shape != (K,):
            raise InvalidArgument("g_idx length must equal K")
        if K and (self.g_idx.min() < 0 or self.g_idx.max() >= ng):
            raise InvalidArgument("g_idx refers to a missing group")
        if self.qweight.size and (self.qweight.max() > self.maxq):
            raise InvalidArgument("qweight exceeds bit width")
        if not np.all(self.scales > 0):
            raise InvalidArgument("scales must be strictly positive")

    def equals(self, other: "QuantizedMatrix") -> bool:
        """Exact equality of every stored array and attribute."""
        return (
            self.bits == other.bits
            and self.group_size == other.group_size
            and np.array_equal(self.qweight, other.qweight)
            and np.array_equal(self.scales, other.scales)
            and np.array_equal(self.zeros, other.zeros)
            and np.array_equal(self.g_idx, other.g_idx)
        )

    def take_columns(self, cols) -> "QuantizedMatrix":
        """Select output columns; per-column metadata moves with them."""
        return QuantizedMatrix(
            qweight=np.ascontiguousarray(self.qweight[:, cols]),
            scales=np.ascontiguousarray(self.scales[:, cols]),
            zeros=np.ascontiguousarray(self.zeros[:, cols]),
            g_idx=self.g_idx,
            group_size=self.group_size,
            bits=self.bits,
        )

    def take_rows(self, rows) -> "QuantizedMatrix":
        # scales/zeros stay whole: g_idx still addresses global group ids
        return QuantizedMatrix(
            qweight=np.ascontiguousarray(self.qweight[rows]),
            scales=self.scales,
            zeros=self.zeros,
            g_idx=np.ascontiguousarray(self.g_idx[rows]),
            group_size=self.group_size,
            bits=self.bits,
        )

    def column_block(self, rank: int, size: int) -> "QuantizedMatrix":
        w = _block_width(self.N, size)
        return self.take_columns(slice(rank * w, (rank + 1) * w))

    def row_block(self, rank: int, size: int) -> "QuantizedMatrix":
        h = _block_width(self.K, size)
        return self.take_rows(slice(rank * h, (rank + 1) * h))


def _block_width(n: int, size: int) -> int:
    if size < 1 or n % size:
        raise InvalidArgument(f"dimension {n} is not divisible by {size} ranks")
    return n // size


def quantize_grouped(W, group_size: int, bits: int, g_idx=None) -> QuantizedMatrix:
    """Round-to-nearest min/max quantization per (group, column).

    Rows are grouped by ``g_idx`` (contiguous grouping when omitted). Scales are
    rounded to float32 before the integer codes are computed, so a matrix
    written to disk and read back dequantizes to identical values.

    The zero point is ``round(-min / scale)`` without clamping to the b-bit
    range. Clamping it would break the half-step error bound for any group
    whose values do not straddle zero.

    Scales are floored at the power of two ``2**(floor(log2 max|w|) - 29)``,
    which keeps ``|zero| < 2**30``. A constant group ``c`` then lands on that
    floor, the zero point carries ``c`` and it comes back exactly for any
    float32-representable ``c`` (within ``|c| * 2**-30`` otherwise).
    """
    W = np.asarray(W)
    if W.ndim != 2:
        raise InvalidArgument(f"W must be 2-D, got shape {W.shape}")
    if not np.all(np.isfinite(W)):
        raise InvalidArgument("W contains non-finite values")
    if bits not in SUPPORTED_BITS:
        raise InvalidArgument(f"bits must be one of {SUPPORTED_BITS}, got {bits}")
    K, N = W.shape
    if g_idx is None:
        g_idx = group_index_naive(K, group_size)
    g_idx = np.asarray(g_idx, dtype=np.int64)
    if group_size <= 0 or group_size > K:
        raise InvalidArgument(f"invalid group size {group_size} for K={K}")
    check_group_index(g_idx, K, group_size)

    W = W.astype(np.float64)
    maxq = (1 << bits) - 1
    ng = n_groups(K, group_size)
    mins = np.empty((ng, N))
    maxs = np.empty((ng, N))
    order = np.argsort(g_idx, kind="stable")
    starts = np.searchsorted(g_idx[order], np.arange(ng))
    mins[:] = np.minimum.reduceat(W[order], starts, axis=0)
    maxs[:] = np.maximum.reduceat(W[order], starts, axis=0)

    absmax = np.maximum(np.abs(mins), np.abs(maxs))
    with np.errstate(divide="ignore"):
        floor = np.exp2(np.floor(np.log2(absmax)) - SCALE_FLOOR_BITS).astype(np.float32)
    scales = np.maximum((maxs - mins) / maxq, floor).astype(np.float32)
    scales = np.maximum(np.maximum(scales, floor), np.finfo(np.float32).tiny)
    s = scales.astype(np.float64)

    i32 = np.iinfo(np.int32)
    zeros = np.clip(np.round(-mins / s), i32.min, i32.max).astype(np.int32)
    q = np.round(W / s[g_idx]) + zeros[g_idx]
    qweight = np.clip(q, 0, maxq).astype(np.uint8)
    return QuantizedMatrix(
        qweight=qweight,
        scales=scales,
        zeros=zeros,
        g_idx=g_idx.copy(),
        group_size=group_size,
        bits=bits,
    )


def dequantize(q: QuantizedMatrix, rows=None, dtype=np.float64) -> tuple[np.ndarray, int]:
    """Reconstruct real weights and count metadata loads.

    ``rows`` optionally selects (and orders) the rows to traverse. The load
    count is for a single column pass; see :func:`metadata_loads`.
    """
    if rows is None:
        rows = np.arange(q.K)
    else:
        rows = np.asarray(rows, dtype=np.int64).reshape(-1)
        if rows.size and (rows.min() < 0 or rows.max() >= q.K):
            raise InvalidArgument(f"row subset out of bounds for K={q.K}")
    g = q.g_idx[rows]
    s = q.scales.astype(np.float64)[g]
    w = s * (q.qweight[rows].astype(np.float64) - q.zeros[g].astype(np.float64))
    return w.astype(dtype, copy=False), metadata_loads(g)


def pack_bits(values: np.ndarray, bits: int) -> bytes:
    """Pack unsigned codes into a little-endian bitstream, row-major.

    Code ``i`` occupies stream bits ``[i*bits, (i+1)*bits)``, least significant
    bit first; stream bit ``k`` is bit ``k % 8`` of byte ``k // 8``. The tail of
    the last byte is zero-filled.
    """
    v = np.asarray(values).reshape(-1).astype(np.uint64)
    if v.size and int(v.max()) >> bits:
        raise InvalidArgument(f"value does not fit in {bits} bits")
    shifts = np.arange(bits, dtype=np.uint64)
    stream = ((v[:, None] >> shifts) & np.uint64(1)).astype(np.uint8).reshape(-1)
    return np.packbits(stream, bitorder="little").tobytes()


def unpack_bits(buf: bytes, bits: int, count: int) -> np.ndarray:
    nbytes = math.ceil(count * bits / 8)
    if len(buf) < nbytes:
        raise InvalidArgument(f"need {nbytes} bytes for {count} {bits}-bit codes, got {len(buf)}")
    raw = np.frombuffer(buf, dtype=np.uint8, count=nbytes)
    stream = np.unpackbits(raw, bitorder="little", count=count * bits)
    weights = (1 << np.arange(bits)).astype(np.uint16)
    return (stream.reshape(count, bits).astype(np.uint16) @ weights).astype(np.uint8)
