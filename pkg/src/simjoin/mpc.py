"""Round-synchronous simulator of the MPC model.

``p`` virtual processors each hold a local numpy array of items. A round
delivers all addressed messages at a single synchronisation point and
records, per processor, how many items it sent and received; the load ``L``
of a run is the maximum of those counts over all rounds. One item (a tuple,
a point, a hash spec, a splitter) is one unit of load.

Items kept locally across a round are free; every addressed message is
charged, including one addressed to the sender itself.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

log = logging.getLogger(__name__)

KeySpec = Sequence[str] | Callable[[np.ndarray], Sequence[np.ndarray]]


class ConservationError(AssertionError):
    pass


@dataclass
class LoadReport:
    p: int
    sent: list[np.ndarray] = field(default_factory=list)
    received: list[np.ndarray] = field(default_factory=list)
    labels: list[str] = field(default_factory=list)

    @property
    def rounds(self) -> int:
        return len(self.sent)

    @property
    def L(self) -> int:
        if not self.sent:
            return 0
        return int(max(max(s.max(), r.max()) for s, r in zip(self.sent, self.received)))

    def round_load(self, i: int) -> int:
        return int(max(self.sent[i].max(), self.received[i].max()))

    def busiest(self) -> tuple[int, str]:
        loads = [self.round_load(i) for i in range(self.rounds)]
        i = int(np.argmax(loads))
        return i, self.labels[i]

    def to_dict(self, per_round: bool = True) -> dict:
        out = {"rounds": self.rounds, "L": self.L, "p": self.p}
        if per_round:
            out["labels"] = list(self.labels)
            out["per_round"] = [
                [s.astype(int).tolist(), r.astype(int).tolist()] for s, r in zip(self.sent, self.received)
            ]
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def extend(self, other: LoadReport) -> None:
        self.sent.extend(other.sent)
        self.received.extend(other.received)
        self.labels.extend(other.labels)


class Cluster:
    """``p`` processors plus the orchestrator that drives them."""

    def __init__(self, p: int, dtype: np.dtype | type = np.int64):
        if p < 1:
            raise ValueError("p must be >= 1")
        self.p = int(p)
        self.stores: list[np.ndarray] = [np.empty(0, dtype=dtype) for _ in range(self.p)]
        self.round_counter = 0
        self.load_log = LoadReport(self.p)

    # -- placement (free: this is input distribution, not communication) --

    def load(self, items: np.ndarray, owner: np.ndarray | None = None) -> None:
        """Place ``items`` on processors; by default in balanced contiguous blocks."""
        if owner is None:
            owner = block_owner(len(items), self.p)
        owner = np.asarray(owner)
        if len(owner) and (owner.min() < 0 or owner.max() >= self.p):
            raise IndexError("owner outside processor range")
        order = np.argsort(owner, kind="stable")
        counts = np.bincount(owner, minlength=self.p)
        self.stores = np.split(items[order], np.cumsum(counts)[:-1])

    def gather(self) -> tuple[np.ndarray, np.ndarray]:
        """All items in global order ``(processor, local index)`` with their owners."""
        sizes = np.array([len(s) for s in self.stores])
        return np.concatenate(self.stores), np.repeat(np.arange(self.p), sizes)

    def check_job(self, n: int) -> None:
        if self.p > n:
            raise ValueError(f"p = {self.p} exceeds the input size n = {n}")
        if self.p > math.sqrt(n):
            warnings.warn(f"p = {self.p} > sqrt(n) = {math.sqrt(n):.1f}; primitive overheads may dominate", stacklevel=2)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(s) for s in self.stores], dtype=np.int64)

    # -- rounds --

    def charge(self, sent: np.ndarray, received: np.ndarray, label: str = "") -> None:
        sent = np.asarray(sent, dtype=np.int64)
        received = np.asarray(received, dtype=np.int64)
        if sent.shape != (self.p,) or received.shape != (self.p,):
            raise ValueError("load vectors must have one entry per processor")
        if sent.sum() != received.sum():
            raise ConservationError(f"round {self.round_counter} ({label}): sent {sent.sum()} != received {received.sum()}")
        self.load_log.sent.append(sent)
        self.load_log.received.append(received)
        self.load_log.labels.append(label)
        self.round_counter += 1
        log.debug("round %d %s: L=%d", self.round_counter, label, max(sent.max(), received.max()))

    def exchange(
        self,
        kept: Sequence[np.ndarray],
        messages: Sequence[tuple[np.ndarray, np.ndarray]],
        label: str = "",
    ) -> None:
        """One round: processor ``i`` keeps ``kept[i]`` and sends ``messages[i] = (items, dest)``.

        Received items are appended after the kept ones, ordered by source
        processor and then by position in the source's message array.
        """
        if len(kept) != self.p or len(messages) != self.p:
            raise ValueError("need one entry per processor")
        sent = np.zeros(self.p, np.int64)
        received = np.zeros(self.p, np.int64)
        inbox: list[list[np.ndarray]] = [[k] for k in kept]
        for src, (items, dest) in enumerate(messages):
            dest = np.asarray(dest, dtype=np.int64)
            if len(dest) != len(items):
                raise ValueError("one destination per message required")
            if len(dest) == 0:
                continue
            if dest.min() < 0 or dest.max() >= self.p:
                raise IndexError(f"processor {src} addressed a message outside [0, {self.p})")
            sent[src] = len(dest)
            counts = np.bincount(dest, minlength=self.p)
            received += counts
            order = np.argsort(dest, kind="stable")
            for dst, chunk in enumerate(np.split(items[order], np.cumsum(counts)[:-1])):
                if len(chunk):
                    inbox[dst].append(chunk)
        self.stores = [np.concatenate(parts) for parts in inbox]
        self.charge(sent, received, label)

    def run_round(
        self,
        compute: Callable[[int, np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]],
        label: str = "",
    ) -> None:
        """``compute(rank, local) -> (kept, outgoing, dest)`` on every processor, then deliver."""
        kept, messages = [], []
        for rank, local in enumerate(self.stores):
            k, out, dest = compute(rank, local)
            kept.append(k)
            messages.append((out, dest))
        self.exchange(kept, messages, label)

    def replace(self, stores: Sequence[np.ndarray]) -> None:
        """Local computation: replace each processor's store (no messages)."""
        if len(stores) != self.p:
            raise ValueError("need one store per processor")
        self.stores = list(stores)

    def map_local(self, fn: Callable[[int, np.ndarray], np.ndarray]) -> None:
        self.replace([fn(rank, local) for rank, local in enumerate(self.stores)])


def block_owner(n: int, p: int) -> np.ndarray:
    """Owner of each of ``n`` positions under a balanced contiguous split."""
    sizes = block_sizes(n, p)
    return np.repeat(np.arange(p), sizes)


def block_sizes(n: int, p: int) -> np.ndarray:
    return np.full(p, n // p, dtype=np.int64) + (np.arange(p) < n % p)


def _key_arrays(items: np.ndarray, key: KeySpec) -> list[np.ndarray]:
    if callable(key):
        return [np.asarray(k) for k in key(items)]
    return [items[name] for name in key]


def broadcast(cluster: Cluster, payload, label: str = "broadcast"):
    """Make ``payload`` (``len()`` units) known to every processor in one round.

    The payload is held in equal shares by the processors (e.g. generated
    from a shared seed) and all-gathered, so every processor receives the
    full size ``s`` and sends its share to all ``p`` processors.
    """
    s = len(payload) if not isinstance(payload, int) else payload
    shares = block_sizes(s, cluster.p)
    cluster.charge(shares * cluster.p, np.full(cluster.p, s, np.int64), label)
    return payload


def mpc_sort(cluster: Cluster, key: KeySpec, label: str = "sort") -> None:
    """Globally sort all items; processor ``i`` ends with the ``i``-th balanced block.

    Two rounds: splitter broadcast (``p-1`` units) and routing. Splitters
    are exact quantiles chosen by the orchestrator; ties keep origin order.
    """
    items, owner = cluster.gather()
    keys = _key_arrays(items, key)
    order = np.lexsort(keys[::-1]) if keys and len(items) else np.arange(len(items))
    broadcast(cluster, cluster.p - 1, label=f"{label}:splitters")
    dest = block_owner(len(items), cluster.p)
    src = owner[order]
    moved = src != dest
    sent = np.bincount(src[moved], minlength=cluster.p)
    received = np.bincount(dest[moved], minlength=cluster.p)
    sorted_items = items[order]
    cluster.stores = np.split(sorted_items, np.cumsum(block_sizes(len(items), cluster.p))[:-1])
    cluster.charge(sent, received, f"{label}:route")


def _values(items: np.ndarray, values) -> np.ndarray:
    if callable(values):
        return np.asarray(values(items))
    if isinstance(values, str):
        return items[values]
    return np.asarray(values)


def mpc_prefix_sum(cluster: Cluster, values, label: str = "prefix") -> list[np.ndarray]:
    """Inclusive prefix sums in global order, one array per processor.

    ``values`` is a field name, ``items -> array``, or one array per
    processor. Round 1 all-gathers
    the ``p`` local subtotals; round 2 is the local fix-up.
    """
    if isinstance(values, (list, tuple)):
        local = [np.asarray(v) for v in values]
    else:
        local = [_values(s, values) for s in cluster.stores]
    subtotals = np.array([v.sum() if len(v) else 0 for v in local])
    broadcast(cluster, cluster.p, label=f"{label}:subtotals")
    offsets = np.concatenate([[0], np.cumsum(subtotals)[:-1]])
    out = [off + np.cumsum(v) for off, v in zip(offsets, local)]
    cluster.charge(np.zeros(cluster.p), np.zeros(cluster.p), f"{label}:fixup")
    return out


@dataclass
class Segments:
    """Per-item group statistics from :func:`mpc_segmented_sum`."""

    totals: list[np.ndarray]  # group total of each value column
    before: list[np.ndarray]  # exclusive prefix of the values within the group
    first: list[np.ndarray]  # item starts its group


def mpc_segmented_sum(cluster: Cluster, key: KeySpec, values, label: str = "segsum") -> Segments:
    """Group totals over items that are already globally sorted by ``key``.

    Same cost as a prefix sum: one all-gather of per-processor boundary
    summaries (first and last run) and a local fix-up round. ``values`` maps
    items to an ``(n, m)`` integer array.
    """
    items, owner = cluster.gather()
    vals = _values(items, values)
    if vals.ndim == 1:
        vals = vals[:, None]
    vals = vals.astype(np.int64)
    n = len(items)
    first = np.ones(n, dtype=bool)
    if n > 1:
        same = np.ones(n - 1, dtype=bool)
        for k in _key_arrays(items, key):
            same &= k[1:] == k[:-1]
        first[1:] = ~same
    gid = np.cumsum(first) - 1
    csum = np.cumsum(vals, axis=0)
    excl = csum - vals
    if n:
        starts = np.flatnonzero(first)
        group_base = excl[starts]
        ends = np.append(starts[1:], n) - 1
        group_tot = csum[ends] - group_base
        totals = group_tot[gid]
        before = excl - group_base[gid]
    else:
        totals = before = np.zeros((0, vals.shape[1]), np.int64)
    broadcast(cluster, cluster.p, label=f"{label}:boundaries")
    cluster.charge(np.zeros(cluster.p), np.zeros(cluster.p), f"{label}:fixup")
    cuts = np.cumsum(cluster.sizes)[:-1]
    return Segments(np.split(totals, cuts), np.split(before, cuts), np.split(first, cuts))


def mpc_allreduce_sum(cluster: Cluster, local: Sequence[np.ndarray], label: str = "allreduce") -> np.ndarray:
    """Sum an ``m``-vector over processors; every processor learns the result."""
    local = [np.atleast_1d(np.asarray(v)) for v in local]
    m = local[0].size
    cluster.charge(np.full(cluster.p, m * cluster.p), np.full(cluster.p, m * cluster.p), label)
    return np.sum(local, axis=0)


def load_summary(cluster: Cluster) -> LoadReport:
    return cluster.load_log
