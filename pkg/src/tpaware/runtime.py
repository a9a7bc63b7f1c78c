"""Deterministic simulated SPMD execution with instrumented collectives.

Every rank runs the same program in its own thread. Collectives are full
barriers: the last rank to arrive validates the participation, computes all
results and updates :class:`CommStats`, then releases everyone. Results never
depend on thread scheduling because gathers concatenate in rank order and
reductions sum in rank order ``((r0 + r1) + r2) + ...``.

The ``"sequential"`` executor runs the same threads one at a time by passing a
turn token, so no two ranks ever execute concurrently. It exists to check that
the threaded executor gives identical bits.

Byte accounting (a cost-model convention, not a transport measurement):

* AllGather: ``block_bytes * size * (size - 1)``; each block reaches every peer.
* AllReduce: ``payload_bytes * 2 * (size - 1)``; ring reduce-scatter + gather.
"""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .errors import InvalidArgument, ProtocolViolation

EXECUTORS = ("threads", "sequential")


def allgather_bytes(block_bytes: int, size: int) -> int:
    return block_bytes * size * (size - 1)


def allreduce_bytes(payload_bytes: int, size: int) -> int:
    return payload_bytes * 2 * (size - 1)


@dataclass(frozen=True)
class CollectiveEvent:
    op: str
    nbytes: int
    ranks: tuple[int, ...]
    shape: tuple[int, ...]

    def to_dict(self) -> dict:
        return {"op": self.op, "bytes": self.nbytes, "ranks": list(self.ranks), "shape": list(self.shape)}


@dataclass
class CommStats:
    size: int = 1
    allgather_calls: int = 0
    allgather_bytes_total: int = 0
    allreduce_calls: int = 0
    allreduce_bytes_total: int = 0
    metadata_loads: list[int] = field(default_factory=list)
    events: list[CollectiveEvent] = field(default_factory=list)

    def __post_init__(self):
        if not self.metadata_loads:
            self.metadata_loads = [0] * self.size

    @property
    def metadata_loads_total(self) -> int:
        return sum(self.metadata_loads)

    def record(self, event: CollectiveEvent) -> None:
        if event.op == "all_gather":
            self.allgather_calls += 1
            self.allgather_bytes_total += event.nbytes
        elif event.op == "all_reduce_sum":
            self.allreduce_calls += 1
            self.allreduce_bytes_total += event.nbytes
        self.events.append(event)

    def to_dict(self) -> dict:
        return {
            "size": self.size,
            "allgather_calls": self.allgather_calls,
            "allgather_bytes_total": self.allgather_bytes_total,
            "allreduce_calls": self.allreduce_calls,
            "allreduce_bytes_total": self.allreduce_bytes_total,
            "metadata_loads": list(self.metadata_loads),
            "metadata_loads_total": self.metadata_loads_total,
        }

    def events_jsonl(self) -> str:
        return "".join(json.dumps(e.to_dict()) + "\n" for e in self.events)


class _Aborted(Exception):
    """Another rank failed; unwinds ranks blocked in a collective."""


class _World:
    def __init__(self, size: int, stats: CommStats, sequential: bool):
        self.size = size
        self.stats = stats
        self.sequential = sequential
        self.cond = threading.Condition()
        self.slots: list[tuple | None] = [None] * size
        self.arrived = 0
        self.generation = 0
        self.results: list[Any] = [None] * size
        self.done = [False] * size
        self.failure: BaseException | None = None
        self.turn = 0

    # caller holds self.cond for every helper below

    def _check_failure(self):
        if self.failure is not None:
            raise self.failure if isinstance(self.failure, ProtocolViolation) else _Aborted()

    def _fail(self, exc: BaseException):
        if self.failure is None:
            self.failure = exc
        self.cond.notify_all()

    def _runnable(self, r: int) -> bool:
        return not self.done[r] and self.slots[r] is None

    def _pass_turn(self, rank: int):
        if not self.sequential:
            return
        for step in range(1, self.size + 1):
            nxt = (rank + step) % self.size
            if self._runnable(nxt):
                self.turn = nxt
                break
        self.cond.notify_all()

    def _pending_stall(self) -> bool:
        return self.arrived > 0 and self.arrived + sum(self.done) == self.size

    def wait_start(self, rank: int):
        with self.cond:
            self.cond.wait_for(lambda: self.failure is not None or not self.sequential or self.turn == rank)
            self._check_failure()

    def finish(self, rank: int):
        with self.cond:
            self.done[rank] = True
            if self._pending_stall():
                waiting = [r for r in range(self.size) if self.slots[r] is not None]
                self._fail(ProtocolViolation(f"rank {rank} exited while ranks {waiting} wait in a collective"))
                return
            self._pass_turn(rank)

    def abort(self):
        with self.cond:
            self._fail(_Aborted())

    def exchange(self, rank: int, op: str, payload: np.ndarray, arg: Any, elem_bytes: int):
        with self.cond:
            self._check_failure()
            self.slots[rank] = (op, payload, arg, elem_bytes)
            self.arrived += 1
            gen = self.generation
            if self.arrived == self.size:
                try:
                    results, event = _complete(self.slots)
                except ProtocolViolation as exc:
                    self._fail(exc)
                    raise
                self.stats.record(event)
                self.results = results
                self.slots = [None] * self.size
                self.arrived = 0
                self.generation += 1
                self.cond.notify_all()
            elif self._pending_stall():
                self._fail(ProtocolViolation(f"{op} on rank {rank} can never complete: peers have exited"))
                raise self.failure
            self._pass_turn(rank)
            self.cond.wait_for(
                lambda: self.failure is not None
                or (self.generation != gen and (not self.sequential or self.turn == rank))
            )
            if self.generation == gen:
                self._check_failure()
            return self.results[rank]

    def add_loads(self, rank: int, n: int):
        with self.cond:
            self.stats.metadata_loads[rank] += n


def _complete(slots: list[tuple]) -> tuple[list[Any], CollectiveEvent]:
    ops = {s[0] for s in slots}
    if len(ops) != 1:
        detail = ", ".join(f"rank {r}: {s[0]}" for r, s in enumerate(slots))
        raise ProtocolViolation(f"mismatched collectives ({detail})")
    op = ops.pop()
    payloads = [s[1] for s in slots]
    args = {s[2] for s in slots}
    shapes = {p.shape for p in payloads}
    dtypes = {p.dtype for p in payloads}
    if len(args) != 1:
        raise ProtocolViolation(f"{op}: ranks disagree on dimension {sorted(args)}")
    if len(shapes) != 1 or len(dtypes) != 1:
        raise ProtocolViolation(f"{op}: ranks supplied different shapes/dtypes {sorted(map(str, shapes))}")
    size = len(slots)
    eb = slots[0][3]
    ranks = tuple(range(size))
    block_bytes = payloads[0].size * eb
    if op == "all_gather":
        out = np.concatenate(payloads, axis=args.pop())
        out.flags.writeable = False
        event = CollectiveEvent(op, allgather_bytes(block_bytes, size), ranks, payloads[0].shape)
        return [out] * size, event
    if op == "all_reduce_sum":
        acc = payloads[0].copy()
        for p in payloads[1:]:
            acc = acc + p
        acc.flags.writeable = False
        event = CollectiveEvent(op, allreduce_bytes(block_bytes, size), ranks, payloads[0].shape)
        return [acc] * size, event
    raise ProtocolViolation(f"unknown collective {op!r}")


@dataclass(frozen=True)
class RankContext:
    rank: int
    size: int
    comm: _World = field(repr=False)
    elem_bytes: int | None = None

    def record_metadata_loads(self, n: int) -> None:
        self.comm.add_loads(self.rank, int(n))


def spmd_run(
    size: int,
    program: Callable[[RankContext], Any],
    *,
    elem_bytes: int | None = None,
    executor: str = "threads",
) -> tuple[list[Any], CommStats]:
    """Run ``program(ctx)`` once per rank and return per-rank results and stats.

    ``elem_bytes`` overrides the element width used for byte accounting
    (default: the payload dtype's itemsize). If any rank raises, the run
    raises the lowest failing rank's exception.
    """
    if size < 1:
        raise InvalidArgument(f"size must be >= 1, got {size}")
    if executor not in EXECUTORS:
        raise InvalidArgument(f"executor must be one of {EXECUTORS}")
    stats = CommStats(size=size)
    world = _World(size, stats, sequential=executor == "sequential")
    results: list[Any] = [None] * size
    errors: list[BaseException | None] = [None] * size

    def worker(rank: int):
        ctx = RankContext(rank, size, world, elem_bytes)
        try:
            world.wait_start(rank)
            results[rank] = program(ctx)
        except _Aborted:
            return
        except BaseException as exc:  # noqa: BLE001 - re-raised by spmd_run
            errors[rank] = exc
            if not isinstance(exc, ProtocolViolation):
                world.abort()
            else:
                with world.cond:
                    world._fail(exc)
            return
        world.finish(rank)

    threads = [threading.Thread(target=worker, args=(r,), name=f"rank-{r}", daemon=True) for r in range(size)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    if world.failure is not None and not isinstance(world.failure, _Aborted):
        # protocol violations may surface on ranks that did nothing wrong
        firsts = [e for e in errors if e is not None and not isinstance(e, ProtocolViolation)]
        raise firsts[0] if firsts else world.failure
    for exc in errors:
        if exc is not None:
            raise exc
    return results, stats


def _eb(ctx: RankContext, a: np.ndarray) -> int:
    return ctx.elem_bytes if ctx.elem_bytes is not None else a.dtype.itemsize


def all_gather(ctx: RankContext, local: np.ndarray, dim: int = 1) -> np.ndarray:
    """Concatenate every rank's block along ``dim`` in rank order."""
    local = np.ascontiguousarray(local)
    if not -local.ndim <= dim < local.ndim:
        raise InvalidArgument(f"dim {dim} out of range for {local.ndim}-D block")
    return ctx.comm.exchange(ctx.rank, "all_gather", local, dim % local.ndim, _eb(ctx, local))


def all_reduce_sum(ctx: RankContext, local: np.ndarray) -> np.ndarray:
    local = np.ascontiguousarray(local)
    return ctx.comm.exchange(ctx.rank, "all_reduce_sum", local, None, _eb(ctx, local))


def _block(n: int, size: int) -> int:
    if n % size:
        raise InvalidArgument(f"dimension {n} is not divisible by {size} ranks")
    return n // size


def chunk(ctx: RankContext, global_: np.ndarray, dim: int = 1) -> np.ndarray:
    """This rank's contiguous block of a replicated tensor; no communication."""
    global_ = np.asarray(global_)
    w = _block(global_.shape[dim], ctx.size)
    index = [slice(None)] * global_.ndim
    index[dim] = slice(ctx.rank * w, (ctx.rank + 1) * w)
    return global_[tuple(index)]


@dataclass(frozen=True)
class ShardedTensor:
    global_shape: tuple[int, int]
    axis: str  # "column", "row" or "replicated"
    locals: tuple[np.ndarray, ...]
    elem_bytes: int

    @property
    def size(self) -> int:
        return len(self.locals)

    def local(self, rank: int) -> np.ndarray:
        return self.locals[rank]

    def assemble(self) -> np.ndarray:
        if self.axis == "replicated":
            return self.locals[0]
        return np.concatenate(self.locals, axis=1 if self.axis == "column" else 0)


def _shard(W: np.ndarray, size: int, dim: int) -> tuple[np.ndarray, ...]:
    if size < 1:
        raise InvalidArgument(f"size must be >= 1, got {size}")
    W = np.asarray(W)
    w = _block(W.shape[dim], size)
    if dim == 1:
        return tuple(W[:, r * w:(r + 1) * w] for r in range(size))
    return tuple(W[r * w:(r + 1) * w] for r in range(size))


def shard_columns(W: np.ndarray, size: int) -> ShardedTensor:
    W = np.asarray(W)
    return ShardedTensor(W.shape, "column", _shard(W, size, 1), W.dtype.itemsize)


def shard_rows(W: np.ndarray, size: int) -> ShardedTensor:
    W = np.asarray(W)
    return ShardedTensor(W.shape, "row", _shard(W, size, 0), W.dtype.itemsize)


def replicate(W: np.ndarray, size: int) -> ShardedTensor:
    W = np.asarray(W)
    return ShardedTensor(W.shape, "replicated", tuple(W for _ in range(size)), W.dtype.itemsize)


def gather_results(results: Sequence[np.ndarray]) -> np.ndarray:
    """Return rank 0's result after checking every rank holds the same bits."""
    first = results[0]
    for r, other in enumerate(results[1:], start=1):
        if not np.array_equal(first, other):
            raise ProtocolViolation(f"rank {r} result differs from rank 0")
    return first
