"""Density-adaptive LSH similarity join and its static-level baseline.

Every point ``x`` picks a level ``k_x`` in ``1..kappa`` minimising its
estimated comparison cost. In phase ``i`` a point is *active* if
``i == k_x``, *passive* if ``i < k_x`` and *dead* otherwise. Non-dead points
emit one tuple per level-``i`` hash; buckets without an active member are
dropped; the survivors of all phases go through a single equi-join, and
only pairs with an active endpoint are distance-checked.

With the default ``schedule="concurrent"`` all phases and all repetitions
share the same simulator rounds, so the round count depends only on the
estimator, never on ``n``. ``schedule="sequential"`` runs estimation and
phases one level at a time (``O(kappa)`` rounds) and keeps each phase's
survivors in place until the final join.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from simjoin.equijoin import equi_join
from simjoin.lsh import (
    STREAM_ESTIMATE,
    STREAM_PHASE,
    STREAM_TREE,
    HashFunctionSpec,
    LshParams,
    bit_sampling_family,
    hash_rows,
    hashes_per_level,
)
from simjoin.lsh import (
    kappa as kappa_for,
)
from simjoin.mpc import Cluster, LoadReport, block_owner, broadcast, mpc_segmented_sum, mpc_sort
from simjoin.oracle import recall
from simjoin.points import PointSet, Relation, hamming_matrix, hamming_rows

ESTIMATORS = ("exact", "sampled", "bucket-tree")
SCHEDULES = ("concurrent", "sequential")
TREE_RULES = ("max", "one-plus-min")

TUPLE_DTYPE = np.dtype(
    [("table", "i8"), ("hhi", "u8"), ("hlo", "u8"), ("idx", "i4"), ("rel", "u1"), ("status", "u1")]
)
KEY = ("table", "hhi", "hlo")
_HOME_DTYPE = np.dtype([("idx", "i4"), ("table", "i8"), ("count", "i8")])


class Status(enum.IntEnum):
    DEAD = -1
    PASSIVE = 0
    ACTIVE = 1


def point_status(k_x: int, phase: int) -> Status:
    if phase < 1:
        raise ValueError("phase must be >= 1")
    if phase == k_x:
        return Status.ACTIVE
    return Status.PASSIVE if phase < k_x else Status.DEAD


@dataclass
class JoinConfig:
    r: int
    c: float
    p: int
    reps: int | None = None
    estimator: str = "sampled"
    c_rep: float = 1.0
    seed: int = 0
    eps: float = 0.25
    M: int = 8
    tree_rule: str = "max"
    tree_plus_term: bool = True
    schedule: str = "concurrent"

    def validate(self, dim: int) -> LshParams:
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if self.reps is not None and self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")
        if self.c_rep < 1:
            raise ValueError("c_rep must be >= 1")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")
        _check_tree(self.eps, self.M, self.tree_rule)
        return bit_sampling_family(dim, self.r, self.c)

    def repetitions(self, n: int) -> int:
        if self.reps is not None:
            return self.reps
        return max(1, math.ceil(2 * math.log(max(n, 2))))


def _check_tree(eps: float, M: int, rule: str) -> None:
    if not 0 < eps <= 0.5:
        raise ValueError("eps must lie in (0, 1/2]")
    if M < 1:
        raise ValueError("M must be >= 1")
    if rule not in TREE_RULES:
        raise ValueError(f"tree rule must be one of {TREE_RULES}")


@dataclass
class LevelAssignment:
    """Chosen level per (repetition, point) and the costs behind it.

    Points are indexed R first, then S. ``costs[rep, x, i-1]`` is the cost
    estimate at level ``i`` (for the bucket-tree mode, at tree depth ``i``).
    """

    levels: np.ndarray
    costs: np.ndarray
    mode: str
    kappa: int
    n_r: int

    @property
    def reps(self) -> int:
        return self.levels.shape[0]

    def r_levels(self, rep: int = 0) -> np.ndarray:
        return self.levels[rep, : self.n_r]

    def s_levels(self, rep: int = 0) -> np.ndarray:
        return self.levels[rep, self.n_r :]


@dataclass
class JoinResult:
    pairs: np.ndarray  # (m, 3): r_id, s_id, distance; sorted, unique
    duplicates_emitted: int
    candidates: int
    materialized: int
    load: LoadReport
    per_phase: dict[int, dict[str, int]]
    kappa: int
    reps: int
    algorithm: str
    assignment: LevelAssignment | None = None
    level_violations: int = 0
    recall: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def pair_set(self) -> set[tuple[int, int]]:
        return {(int(a), int(b)) for a, b in self.pairs[:, :2]}

    def metrics(self) -> dict:
        out = {
            "algorithm": self.algorithm,
            "L": self.load.L,
            "rounds": self.load.rounds,
            "pairs": int(len(self.pairs)),
            "duplicates_emitted": int(self.duplicates_emitted),
            "candidates": int(self.candidates),
            "materialized": int(self.materialized),
            "kappa": self.kappa,
            "reps": self.reps,
            "per_phase": {str(k): v for k, v in sorted(self.per_phase.items())},
            "load": self.load.to_dict(per_round=True),
        }
        if self.assignment is not None:
            hist = np.bincount(self.assignment.levels.ravel(), minlength=self.kappa + 1)[1:]
            out["level_histogram"] = hist.astype(int).tolist()
        if self.recall is not None:
            out["recall"] = self.recall
        out.update(self.extra)
        return out


class _Instance:
    """Both relations concatenated (R rows first) plus the home processor of each point."""

    def __init__(self, R: PointSet, S: PointSet, params: LshParams, p: int):
        if R.dim != S.dim:
            raise ValueError("R and S have different dimensions")
        if R.relation != Relation.R or S.relation != Relation.S:
            raise ValueError("expected (R, S) point sets")
        self.R, self.S, self.params = R, S, params
        self.n_r, self.n_s = len(R), len(S)
        self.n = self.n_r + self.n_s
        self.bits = np.concatenate([R.bits, S.bits])
        self.packed = np.concatenate([R.packed, S.packed])
        self.rel = np.concatenate([np.zeros(self.n_r, np.uint8), np.ones(self.n_s, np.uint8)])
        self.home = block_owner(self.n, p)


class _Tables:
    """Encodes (repetition, level, hash index) into a single sortable integer."""

    def __init__(self, levels: int, width: int):
        self.levels = levels
        self.width = width

    def encode(self, rep, level, j):
        return (np.asarray(rep, np.int64) * (self.levels + 1) + level) * self.width + j

    def level(self, table: np.ndarray) -> np.ndarray:
        return (table // self.width) % (self.levels + 1)

    def rep(self, table: np.ndarray) -> np.ndarray:
        return table // self.width // (self.levels + 1)


def _argmin_first(costs: np.ndarray) -> np.ndarray:
    """1-based argmin over the last axis; near-ties (1e-12 relative) go to the lowest level."""
    lo = costs.min(axis=-1, keepdims=True)
    return np.argmax(costs <= lo * (1 + 1e-12), axis=-1) + 1


# -- level estimation --------------------------------------------------------


def exact_costs(R: PointSet, S: PointSet, params: LshParams, kappa: int) -> np.ndarray:
    """``p1**-i * (1 + sum_y (1 - d(x,y)/d)**i)`` for every point (R then S) and level."""
    d = params.dim
    levels = np.arange(1, kappa + 1)
    out = np.empty((len(R) + len(S), kappa))

    def fill(a: PointSet, b: PointSet, offset: int) -> None:
        if len(a) == 0:
            return
        if len(b) == 0:
            out[offset : offset + len(a)] = 1.0
        else:
            step = max(1, (1 << 22) // len(b))
            for lo in range(0, len(a), step):
                q = (d - hamming_matrix(a.packed[lo : lo + step], b.packed)) / d
                acc = np.ones((q.shape[0], kappa))
                qi = np.ones_like(q)
                for i in range(kappa):
                    qi *= q
                    acc[:, i] += qi.sum(axis=1)
                out[offset + lo : offset + lo + q.shape[0]] = acc
        out[offset : offset + len(a)] *= params.p1 ** -levels.astype(float)

    fill(R, S, 0)
    fill(S, R, len(R))
    return out


def estimate_levels_exact(R: PointSet, S: PointSet, params: LshParams, kappa: int, reps: int = 1) -> LevelAssignment:
    costs = exact_costs(R, S, params, kappa)
    levels = _argmin_first(costs)
    return LevelAssignment(
        levels=np.broadcast_to(levels, (reps, len(levels))).copy(),
        costs=np.broadcast_to(costs, (reps,) + costs.shape).copy(),
        mode="exact",
        kappa=kappa,
        n_r=len(R),
    )


def _bucket_counts_home(cluster: Cluster, inst: _Instance, tuples: np.ndarray, count_all: bool, label: str) -> np.ndarray:
    """Sort keyed tuples, count each bucket, and send each tuple's count back home.

    Returns the routed ``_HOME_DTYPE`` records (gathered). The count is of
    the other relation, or of the whole bucket with ``count_all``.
    """
    cluster.load(tuples, owner=inst.home[tuples["idx"]])
    mpc_sort(cluster, list(KEY), label=f"{label}:sort")
    seg = mpc_segmented_sum(
        cluster,
        list(KEY),
        lambda t: np.stack([t["rel"] == Relation.R, t["rel"] == Relation.S], axis=1),
        label=f"{label}:counts",
    )
    kept, messages = [], []
    for rank, (local, tot) in enumerate(zip(cluster.stores, seg.totals)):
        rec = np.empty(len(local), _HOME_DTYPE)
        rec["idx"] = local["idx"]
        rec["table"] = local["table"]
        if count_all:
            rec["count"] = tot.sum(axis=1)
        else:
            rec["count"] = np.where(local["rel"] == Relation.R, tot[:, 1], tot[:, 0])
        dest = inst.home[rec["idx"]]
        stay = dest == rank
        kept.append(rec[stay])
        messages.append((rec[~stay], dest[~stay]))
    cluster.exchange(kept, messages, label=f"{label}:home")
    return cluster.gather()[0]


def _emit(inst: _Instance, tables: _Tables, specs: list[tuple[int, int, int, HashFunctionSpec]],
          emitters: np.ndarray | None = None, active_level: np.ndarray | None = None,
          prefix: bool = False) -> np.ndarray:
    """Keyed tuples for ``specs``; each point hashes only its own bits (local work).

    ``emitters[rep]`` masks the points that emit at a given level, and
    ``active_level[rep]`` sets the status. With ``prefix`` the hash spec is a
    depth-``D`` tree hash evaluated at prefix length ``level``.
    """
    parts = []
    all_idx = np.arange(inst.n, dtype=np.int64)
    for rep, level, j, spec in specs:
        if emitters is None:
            idx = all_idx
        else:
            idx = np.flatnonzero(emitters[rep] >= level)
        if len(idx) == 0:
            continue
        hi, lo = hash_rows(spec, inst.bits[idx], prefix=level if prefix else None)
        t = np.empty(len(idx), TUPLE_DTYPE)
        t["table"] = tables.encode(rep, level, j)
        t["hhi"], t["hlo"] = hi, lo
        t["idx"] = idx
        t["rel"] = inst.rel[idx]
        t["status"] = 1 if active_level is None else (active_level[rep, idx] == level)
        parts.append(t)
    return np.concatenate(parts) if parts else np.empty(0, TUPLE_DTYPE)


def _sampled(cluster: Cluster, inst: _Instance, kappa: int, seed: int, c_rep: float, reps: int,
             sequential: bool = False) -> LevelAssignment:
    p1 = inst.params.p1
    t = [hashes_per_level(inst.params, i, c_rep) for i in range(1, kappa + 1)]
    tables = _Tables(kappa, max(t) + 1)
    sums = np.zeros((reps, inst.n, kappa))
    batches = [[i] for i in range(1, kappa + 1)] if sequential else [list(range(1, kappa + 1))]
    for levels in batches:
        specs = [
            (rep, i, j, HashFunctionSpec.derive(seed, STREAM_ESTIMATE, rep, i, j, inst.params.dim))
            for rep in range(reps)
            for i in levels
            for j in range(1, t[i - 1] + 1)
        ]
        broadcast(cluster, len(specs), label="estimate:specs")
        home = _bucket_counts_home(cluster, inst, _emit(inst, tables, specs), False, "estimate")
        np.add.at(sums, (tables.rep(home["table"]), home["idx"], tables.level(home["table"]) - 1), home["count"])
    lv = np.arange(1, kappa + 1)
    scale = np.array(t, float) * p1**lv
    costs = sums / scale + p1 ** -lv.astype(float)
    return LevelAssignment(_argmin_first(costs), costs, "sampled", kappa, inst.n_r)


def estimate_levels_sampled(
    cluster: Cluster,
    R: PointSet,
    S: PointSet,
    params: LshParams,
    kappa: int,
    seed: int,
    c_rep: float = 1.0,
    reps: int = 1,
) -> LevelAssignment:
    """Estimate each level's cost from the summed sizes of the buckets a point lands in.

    ``W~[x, i] = sum_j |bucket_ij(x) & other| / (t_i * p1**i) + p1**-i``,
    computed with one sort, one segmented count and one routing round.
    """
    inst = _Instance(R, S, params, cluster.p)
    return _sampled(cluster, inst, kappa, seed, c_rep, reps)


def _tree(cluster: Cluster, inst: _Instance, eps: float, M: int, seed: int, kappa: int | None,
          reps: int, rule: str, plus_term: bool) -> LevelAssignment:
    p1 = inst.params.p1
    depth = max(1, math.ceil(math.log2(max(inst.n, 1))))
    tables = _Tables(depth, 1)
    specs = []
    for rep in range(reps):
        spec = HashFunctionSpec.derive(seed, STREAM_TREE, rep, depth, 0, inst.params.dim)
        specs += [(rep, k, 0, spec) for k in range(1, depth + 1)]
    broadcast(cluster, reps, label="tree:specs")
    home = _bucket_counts_home(cluster, inst, _emit(inst, tables, specs, prefix=True), True, "tree")
    sizes = np.zeros((reps, inst.n, depth))
    np.add.at(sizes, (tables.rep(home["table"]), home["idx"], tables.level(home["table"]) - 1), home["count"])
    lv = np.arange(1, depth + 1)
    costs = (sizes + (M if plus_term else 0)) / p1**lv
    best = costs.min(axis=-1, keepdims=True)
    in_k = costs <= (1 + eps) * best * (1 + 1e-12)
    if rule == "max":
        levels = depth - np.argmax(in_k[..., ::-1], axis=-1)
    else:
        levels = 1 + (np.argmax(in_k, axis=-1) + 1)
    upper = kappa if kappa is not None else depth + 1
    levels = np.clip(levels, 1, upper)
    return LevelAssignment(levels, costs, "bucket-tree", kappa if kappa is not None else int(levels.max(initial=1)), inst.n_r)


def select_level_bucket_tree(
    R: PointSet,
    S: PointSet,
    params: LshParams,
    eps: float,
    M: int,
    seed: int,
    *,
    kappa: int | None = None,
    cluster: Cluster | None = None,
    reps: int = 1,
    rule: str = "max",
    plus_term: bool = True,
) -> LevelAssignment:
    """Levels from a single depth-``ceil(log2 n)`` hash whose prefixes are the buckets.

    ``B_k(x)`` is the size of ``x``'s prefix-``k`` bucket (all points,
    ``x`` included). Among the levels whose ``(B_k + M) / p1**k`` is within
    ``1 + eps`` of the best, ``rule="max"`` takes the deepest and
    ``rule="one-plus-min"`` takes one past the shallowest. The result is
    clamped to ``[1, kappa]``.
    """
    _check_tree(eps, M, rule)
    if cluster is None:
        cluster = Cluster(1, TUPLE_DTYPE)
    inst = _Instance(R, S, params, cluster.p)
    return _tree(cluster, inst, eps, M, seed, kappa, reps, rule, plus_term)


# -- phases ------------------------------------------------------------------


def _phases(cluster: Cluster, inst: _Instance, levels: list[int], kappa: int, assignment: np.ndarray,
            seed: int, c_rep: float, prune: bool, per_phase: dict) -> None:
    """Hash, sort and prune the given phases, merged into shared rounds.

    ``assignment`` is ``(reps, n)``; leaves the surviving tuples on the cluster.
    """
    reps = assignment.shape[0]
    t = {i: hashes_per_level(inst.params, i, c_rep) for i in levels}
    tables = _Tables(kappa, max(t.values()) + 1)
    specs = [
        (rep, i, j, HashFunctionSpec.derive(seed, STREAM_PHASE, rep, i, j, inst.params.dim))
        for rep in range(reps)
        for i in levels
        for j in range(1, t[i] + 1)
    ]
    broadcast(cluster, len(specs), label="phase:specs")
    tuples = _emit(inst, tables, specs, emitters=assignment, active_level=assignment)
    cluster.load(tuples, owner=inst.home[tuples["idx"]])
    gen_level = tables.level(tuples["table"])
    for i in levels:
        per_phase.setdefault(i, {"generated": 0, "pruned": 0, "survived": 0})
        per_phase[i]["generated"] += int((gen_level == i).sum())
    if not prune:
        for i in levels:
            per_phase[i]["survived"] += per_phase[i]["generated"]
        return
    mpc_sort(cluster, list(KEY), label="phase:sort")
    seg = mpc_segmented_sum(cluster, list(KEY), lambda u: u["status"].astype(np.int64), label="phase:active")
    survivors = [local[tot[:, 0] > 0] for local, tot in zip(cluster.stores, seg.totals)]
    cluster.replace(survivors)
    kept_level = tables.level(np.concatenate(survivors)["table"])
    for i in levels:
        s = int((kept_level == i).sum())
        per_phase[i]["survived"] += s
        per_phase[i]["pruned"] += per_phase[i]["generated"] - s


def run_phase(cluster: Cluster, phase: int, assignment: LevelAssignment, config: JoinConfig,
              R: PointSet, S: PointSet) -> np.ndarray:
    """Run phase ``phase`` alone and return the tuples that survive pruning."""
    params = config.validate(R.dim)
    if not 1 <= phase <= assignment.kappa:
        raise ValueError(f"phase must lie in [1, {assignment.kappa}]")
    inst = _Instance(R, S, params, cluster.p)
    _phases(cluster, inst, [phase], assignment.kappa, assignment.levels, config.seed, config.c_rep, True, {})
    return cluster.gather()[0]


def _join_and_filter(cluster: Cluster, inst: _Instance, tables: _Tables, assignment: np.ndarray):
    out = equi_join(cluster, KEY)
    r = inst.params.r
    codes, dists = [], []
    emitted = candidates = violations = 0
    for left, right in out.iter_pairs():
        a, b = out.copies[left], out.copies[right]
        cand = (a["status"] | b["status"]) > 0
        a, b = a[cand], b[cand]
        candidates += len(a)
        ia, ib = a["idx"].astype(np.int64), b["idx"].astype(np.int64)
        rep = tables.rep(a["table"])
        lvl = tables.level(a["table"])
        violations += int(((lvl != assignment[rep, ia]) & (lvl != assignment[rep, ib])).sum())
        dist = hamming_rows(inst.packed[ia], inst.packed[ib])
        near = dist <= r
        emitted += int(near.sum())
        codes.append(ia[near] * max(inst.n_s, 1) + (ib[near] - inst.n_r))
        dists.append(dist[near])
    if codes:
        code = np.concatenate(codes)
        dist = np.concatenate(dists)
        code, first = np.unique(code, return_index=True)
        dist = dist[first]
    else:
        code = np.zeros(0, np.int64)
        dist = np.zeros(0, np.int64)
    ri, si = code // max(inst.n_s, 1), code % max(inst.n_s, 1)
    pairs = np.stack([inst.R.ids[ri], inst.S.ids[si], dist], axis=1).astype(np.int64)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return pairs[order], emitted, candidates, out.count, violations, out.stats


def _empty_result(algorithm: str, p: int, kappa: int, reps: int) -> JoinResult:
    return JoinResult(np.zeros((0, 3), np.int64), 0, 0, 0, LoadReport(p), {}, kappa, reps, algorithm)


def similarity_join(R: PointSet, S: PointSet, config: JoinConfig, cluster: Cluster | None = None,
                    exact: set[tuple[int, int]] | None = None) -> JoinResult:
    """All pairs within Hamming distance ``r``, found with high probability.

    With ``exact`` (the true pair set) the result carries its recall.
    """
    params = config.validate(R.dim)
    n = len(R) + len(S)
    kap = kappa_for(params, config.p)
    reps = config.repetitions(n)
    if n == 0:
        return _empty_result("adaptive", config.p, kap, reps)
    cluster = cluster or Cluster(config.p, TUPLE_DTYPE)
    cluster.check_job(n)
    inst = _Instance(R, S, params, cluster.p)
    sequential = config.schedule == "sequential"

    if config.estimator == "exact":
        assignment = estimate_levels_exact(R, S, params, kap, reps)
    elif config.estimator == "sampled":
        assignment = _sampled(cluster, inst, kap, config.seed, config.c_rep, reps, sequential)
    else:
        assignment = _tree(cluster, inst, config.eps, config.M, config.seed, kap, reps,
                           config.tree_rule, config.tree_plus_term)

    per_phase: dict = {}
    levels = list(range(1, kap + 1))
    if sequential:
        # One phase at a time; survivors wait in place (no messages) for the join.
        held = [[] for _ in range(cluster.p)]
        for i in levels:
            _phases(cluster, inst, [i], kap, assignment.levels, config.seed, config.c_rep, True, per_phase)
            for rank, local in enumerate(cluster.stores):
                held[rank].append(local)
        cluster.replace([np.concatenate(h) for h in held])
    else:
        _phases(cluster, inst, levels, kap, assignment.levels, config.seed, config.c_rep, True, per_phase)
    tables = _Tables(kap, max(hashes_per_level(params, i, config.c_rep) for i in levels) + 1)
    pairs, emitted, cands, mat, viol, jstats = _join_and_filter(cluster, inst, tables, assignment.levels)
    res = JoinResult(pairs, emitted, cands, mat, cluster.load_log, per_phase, kap, reps, "adaptive",
                     assignment=assignment, level_violations=viol, extra={"equijoin": jstats})
    if exact is not None:
        res.recall = recall(res.pair_set, exact)
    return res


def static_baseline_join(R: PointSet, S: PointSet, config: JoinConfig, cluster: Cluster | None = None,
                         exact: set[tuple[int, int]] | None = None) -> JoinResult:
    """Every point hashed at the top level ``kappa`` only, all active, no pruning."""
    params = config.validate(R.dim)
    n = len(R) + len(S)
    kap = kappa_for(params, config.p)
    reps = config.repetitions(n)
    if n == 0:
        return _empty_result("static", config.p, kap, reps)
    cluster = cluster or Cluster(config.p, TUPLE_DTYPE)
    cluster.check_job(n)
    inst = _Instance(R, S, params, cluster.p)
    assignment = np.full((reps, n), kap, dtype=np.int64)
    per_phase: dict = {}
    _phases(cluster, inst, [kap], kap, assignment, config.seed, config.c_rep, False, per_phase)
    tables = _Tables(kap, hashes_per_level(params, kap, config.c_rep) + 1)
    pairs, emitted, cands, mat, viol, jstats = _join_and_filter(cluster, inst, tables, assignment)
    res = JoinResult(pairs, emitted, cands, mat, cluster.load_log, per_phase, kap, reps, "static",
                     extra={"equijoin": jstats})
    if exact is not None:
        res.recall = recall(res.pair_set, exact)
    return res
