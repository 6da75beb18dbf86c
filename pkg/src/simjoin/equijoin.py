"""Output-sensitive equi-join on the MPC simulator.

Tuples are sorted by key, per-key counts ``|R_g|`` and ``|S_g|`` come from a
segmented sum, and every key with a nonempty product gets a number of cells
proportional to its share of the output (or of the input, if that is
larger). A key with ``c`` cells has its ``R_g x S_g`` rectangle cut into a
near-square ``a x b`` grid (``a*b <= c``); an R tuple is replicated to the
``b`` cells of its row, an S tuple to the ``a`` cells of its column. Cells
are then packed onto processors in key order by a prefix sum over the
replicated sizes. Every pair of a key lands in exactly one cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from simjoin.mpc import Cluster, broadcast, mpc_allreduce_sum, mpc_prefix_sum, mpc_segmented_sum, mpc_sort
from simjoin.points import Relation

REL_FIELD = "rel"


def join_load_bound(n: float, out: float, p: int) -> float:
    """``sqrt(out/p) + n/p``: the load of an optimal equi-join with constant 1."""
    if p < 1:
        raise ValueError("p must be >= 1")
    return math.sqrt(out / p) + n / p


def largest_remainder(quotas: np.ndarray, total: int) -> np.ndarray:
    """Integers summing to ``total``, each ``>= max(1, floor(quota))``.

    Leftover units go to the largest fractional parts; ties go to the
    earlier entry.
    """
    base = np.maximum(1, np.floor(quotas).astype(np.int64))
    extra = total - int(base.sum())
    if extra > 0:
        frac = quotas - np.floor(quotas)
        order = np.lexsort((np.arange(len(quotas)), -frac))
        base[order[:extra]] += 1
    return base


def grid_shape(cells: int, nr: int, ns: int) -> tuple[int, int]:
    """Rows/columns ``(a, b)`` with ``a*b <= cells`` minimising the cell side sum."""
    best = (math.inf, 1, 1)
    for a in range(1, cells + 1):
        b = cells // a
        cost = -(-nr // a) + -(-ns // b)
        if cost < best[0]:
            best = (cost, a, b)
    return best[1], best[2]


@dataclass
class EquiJoinOutput:
    """Tuples as delivered to their cells, plus the cell layout.

    ``copies`` is sorted by cell with R copies ahead of S copies in each
    cell; the materialised pairs are the per-cell cross products.
    """

    copies: np.ndarray
    proc: np.ndarray
    cell_start: np.ndarray
    cell_r: np.ndarray
    cell_s: np.ndarray
    stats: dict

    @property
    def count(self) -> int:
        return int((self.cell_r * self.cell_s).sum())

    def iter_pairs(self, chunk: int = 1 << 21) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """Yield ``(left, right)`` index arrays into ``copies``, ``chunk``-ish pairs at a time."""
        work = self.cell_r * self.cell_s
        live = np.flatnonzero(work)
        i = 0
        while i < len(live):
            acc = np.cumsum(work[live[i:]])
            j = i + max(1, int(np.searchsorted(acc, chunk, side="right")))
            yield _cross(self.cell_start[live[i:j]], self.cell_r[live[i:j]], self.cell_s[live[i:j]])
            i = j

    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        parts = list(self.iter_pairs(chunk=1 << 62))
        if not parts:
            return np.zeros(0, np.int64), np.zeros(0, np.int64)
        return parts[0]


def _cross(start: np.ndarray, nr: np.ndarray, ns: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Left side: each R copy repeated ns times; right side: the cell's S run.
    r_cell = np.repeat(np.arange(len(start)), nr)
    r_pos = np.repeat(start, nr) + _ramp(nr)
    reps = ns[r_cell]
    left = np.repeat(r_pos, reps)
    right = np.repeat(start[r_cell] + nr[r_cell], reps) + _ramp(reps)
    return left, right


def _ramp(counts: np.ndarray) -> np.ndarray:
    """``concatenate([arange(c) for c in counts])`` without the loop."""
    total = int(counts.sum())
    if total == 0:
        return np.zeros(0, np.int64)
    starts = np.cumsum(counts) - counts
    return np.arange(total, dtype=np.int64) - np.repeat(starts, counts)


def equi_join(cluster: Cluster, key: Sequence[str]) -> EquiJoinOutput:
    """Join the tuples held by ``cluster`` on the fields ``key``.

    Every tuple needs a ``rel`` field (``Relation.R`` or ``Relation.S``).
    The input should be evenly spread over the processors.
    """
    key = list(key)
    p = cluster.p
    mpc_sort(cluster, key + [REL_FIELD], label="join:sort")
    seg = mpc_segmented_sum(
        cluster,
        key,
        lambda t: np.stack([t[REL_FIELD] == Relation.R, t[REL_FIELD] == Relation.S], axis=1),
        label="join:counts",
    )

    n_in = int(cluster.sizes.sum())
    local_out = [
        (tot[:, 0] * tot[:, 1])[first].sum() if len(tot) else 0 for tot, first in zip(seg.totals, seg.first)
    ]
    totals = mpc_allreduce_sum(cluster, [np.array([o, len(s)]) for o, s in zip(local_out, cluster.stores)],
                               label="join:totals")
    out_total, n_total = int(totals[0]), int(totals[1])
    assert n_total == n_in

    # Per-tuple view of its key's statistics.
    tot = np.concatenate(seg.totals) if n_in else np.zeros((0, 2), np.int64)
    before = np.concatenate(seg.before) if n_in else np.zeros((0, 2), np.int64)
    first = np.concatenate(seg.first) if n_in else np.zeros(0, bool)
    nr, ns = tot[:, 0], tot[:, 1]
    og = nr * ns

    # Cell counts: heavy keys (quota >= 1) are all-gathered and rounded jointly.
    with np.errstate(divide="ignore", invalid="ignore"):
        quota = p * np.maximum(og / max(out_total, 1), (nr + ns) / max(n_total, 1))
    quota = np.where(og > 0, quota, 0.0)
    heavy_lead = np.flatnonzero(first & (quota >= 1.0))
    broadcast(cluster, len(heavy_lead), label="join:heavy")
    shape_a = np.ones(n_in, dtype=np.int64)
    shape_b = np.ones(n_in, dtype=np.int64)
    if len(heavy_lead):
        q = quota[heavy_lead]
        alloc = largest_remainder(q, max(len(q), int(round(q.sum()))))
        gid = np.cumsum(first) - 1
        lead_of_gid = np.flatnonzero(first)
        per_group_a = np.ones(len(lead_of_gid), np.int64)
        per_group_b = np.ones(len(lead_of_gid), np.int64)
        for lead, c in zip(heavy_lead, alloc):
            g = gid[lead]
            a, b = grid_shape(int(c), int(nr[lead]), int(ns[lead]))
            per_group_a[g], per_group_b[g] = a, b
        shape_a, shape_b = per_group_a[gid], per_group_b[gid]

    # Replication weight of each tuple, laid out by a global prefix sum.
    is_r = np.concatenate([s[REL_FIELD] for s in cluster.stores]) == Relation.R if n_in else np.zeros(0, bool)
    live = og > 0
    weight = np.where(live, np.where(is_r, shape_b, shape_a), 0)
    cuts = np.cumsum(cluster.sizes)[:-1]
    incl = np.concatenate(mpc_prefix_sum(cluster, np.split(weight, cuts), label="join:layout"))
    total_weight = int(weight.sum())
    target = max(1, -(-total_weight // p))
    # Exclusive offset of the key's block: remove this tuple's own in-key prefix.
    in_key = np.where(is_r, before[:, 0] * shape_b, nr * shape_b + before[:, 1] * shape_a)
    key_off = incl - weight - in_key
    key_w = nr * shape_b + ns * shape_a

    row = np.where(is_r, before[:, 0] * shape_a // np.maximum(nr, 1), 0)
    col = np.where(is_r, 0, before[:, 1] * shape_b // np.maximum(ns, 1))

    src = np.repeat(np.arange(p), cluster.sizes)
    rep = weight
    t_idx = np.repeat(np.arange(n_in), rep)
    k = _ramp(rep)
    r_t = is_r[t_idx]
    cell_u = np.where(r_t, row[t_idx], k)
    cell_v = np.where(r_t, k, col[t_idx])
    cell_id = cell_u * shape_b[t_idx] + cell_v
    ncell = shape_a[t_idx] * shape_b[t_idx]
    cell_off = key_off[t_idx] + cell_id * key_w[t_idx] // ncell
    dest = np.minimum(p - 1, cell_off // target)

    items = np.concatenate(cluster.stores) if n_in else cluster.stores[0][:0]
    copy_src = src[t_idx]
    copy_items = items[t_idx]
    stay = copy_src == dest
    kept, messages = [], []
    for rank in range(p):
        mine = copy_src == rank
        kept.append(np.flatnonzero(mine & stay))
        go = mine & ~stay
        messages.append((np.flatnonzero(go), dest[go]))
    # Copies travel by reference (an index into copy_items); one unit per copy sent.
    cluster.exchange(kept, messages, label="join:route")

    # Local materialisation: order delivered copies by (processor, key block, cell, R before S).
    delivered = np.concatenate(cluster.stores)
    proc = np.repeat(np.arange(p), cluster.sizes)
    order = np.lexsort((~is_r[t_idx][delivered], cell_id[delivered], key_off[t_idx][delivered], proc))
    delivered = delivered[order]
    proc = proc[order]
    c_key = key_off[t_idx][delivered]
    c_cell = cell_id[delivered]
    c_isr = is_r[t_idx][delivered]
    m = len(delivered)
    boundary = np.ones(m, dtype=bool)
    if m > 1:
        boundary[1:] = (c_key[1:] != c_key[:-1]) | (c_cell[1:] != c_cell[:-1]) | (proc[1:] != proc[:-1])
    starts = np.flatnonzero(boundary)
    block = np.cumsum(boundary) - 1
    cell_r = np.bincount(block[c_isr], minlength=len(starts)) if m else np.zeros(0, np.int64)
    cell_s = np.bincount(block[~c_isr], minlength=len(starts)) if m else np.zeros(0, np.int64)

    stats = {
        "n": n_in,
        "out": out_total,
        "keys": int(first.sum()),
        "heavy_keys": int(len(heavy_lead)),
        "copies": int(m),
    }
    cluster.replace(np.split(copy_items[delivered], np.cumsum(np.bincount(proc, minlength=p))[:-1]))
    return EquiJoinOutput(
        copies=copy_items[delivered],
        proc=proc,
        cell_start=starts.astype(np.int64),
        cell_r=cell_r.astype(np.int64),
        cell_s=cell_s.astype(np.int64),
        stats=stats,
    )
