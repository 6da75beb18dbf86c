"""Instance builders and independent reference implementations for the tests."""

from __future__ import annotations

from collections import Counter

import numpy as np

from simjoin.mpc import Cluster
from simjoin.points import PointSet, Relation

KEYED = np.dtype([("key", np.int64), ("rel", np.uint8), ("tag", np.int64)])


def make_sets(r_bits, s_bits) -> tuple[PointSet, PointSet]:
    r_bits = np.asarray(r_bits, dtype=np.uint8)
    s_bits = np.asarray(s_bits, dtype=np.uint8)
    nr = len(r_bits)
    R = PointSet(Relation.R, np.arange(nr), r_bits)
    S = PointSet(Relation.S, np.arange(nr, nr + len(s_bits)), s_bits)
    return R, S


def random_sets(rng: np.random.Generator, nr: int, ns: int, d: int) -> tuple[PointSet, PointSet]:
    return make_sets(rng.integers(0, 2, (nr, d)), rng.integers(0, 2, (ns, d)))


def keyed_tuples(r_keys, s_keys) -> np.ndarray:
    r_keys = np.asarray(r_keys, dtype=np.int64)
    s_keys = np.asarray(s_keys, dtype=np.int64)
    t = np.zeros(len(r_keys) + len(s_keys), KEYED)
    t["key"] = np.concatenate([r_keys, s_keys])
    t["rel"][len(r_keys):] = Relation.S
    t["tag"] = np.arange(len(t))
    return t


def random_keyed_instance(rng: np.random.Generator, n_max: int = 10_000):
    """Zipf-skewed keys on both sides, so some keys are heavy and many are light."""
    nr = int(rng.integers(1, n_max // 2 + 1))
    ns = int(rng.integers(1, n_max // 2 + 1))
    a = float(rng.uniform(1.3, 3.0))
    domain = int(rng.integers(5, 2000))
    r_keys = rng.zipf(a, nr) % domain
    s_keys = rng.zipf(a, ns) % domain
    return keyed_tuples(r_keys, s_keys)


def nested_loop_pairs(tuples: np.ndarray) -> Counter:
    """Multiset of ``(r_tag, s_tag)`` with equal keys, by a plain double loop over keys."""
    by_key: dict[int, tuple[list[int], list[int]]] = {}
    for key, rel, tag in tuples.tolist():
        by_key.setdefault(key, ([], []))[rel].append(tag)
    out = Counter()
    for rs, ss in by_key.values():
        for a in rs:
            for b in ss:
                out[(a, b)] += 1
    return out


def nested_loop_count(tuples: np.ndarray) -> int:
    r = Counter(tuples["key"][tuples["rel"] == Relation.R].tolist())
    s = Counter(tuples["key"][tuples["rel"] == Relation.S].tolist())
    return sum(c * s[k] for k, c in r.items())


def keyed_cluster(tuples: np.ndarray, p: int) -> Cluster:
    cl = Cluster(p, KEYED)
    cl.load(tuples)
    return cl


def brute_levels(R: PointSet, S: PointSet, p1: float, kappa: int) -> np.ndarray:
    """Argmin over ``i`` of ``p1**-i * (1 + sum_y (1 - dist/d)**i)``, written with plain loops."""
    d = R.dim
    points = [(R.bits[i], S.bits) for i in range(len(R))] + [(S.bits[j], R.bits) for j in range(len(S))]
    out = []
    for x, others in points:
        best, best_cost = 1, None
        dist = [int(np.sum(x != y)) for y in others]
        for i in range(1, kappa + 1):
            cost = p1**-i * (1 + sum((1 - t / d) ** i for t in dist))
            if best_cost is None or cost < best_cost * (1 - 1e-12):
                best, best_cost = i, cost
        out.append(best)
    return np.array(out)


def double_loop_join(R: PointSet, S: PointSet, r: int) -> set[tuple[int, int, int]]:
    out = set()
    for i in range(len(R)):
        for j in range(len(S)):
            t = int(np.count_nonzero(R.bits[i] != S.bits[j]))
            if t <= r:
                out.add((int(R.ids[i]), int(S.ids[j]), t))
    return out


RESULTS: list[str] = []


def record(line: str) -> None:
    RESULTS.append(line)
    print(line, flush=True)
