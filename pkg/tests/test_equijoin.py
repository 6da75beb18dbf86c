from __future__ import annotations

import math
from collections import Counter

import numpy as np
import pytest
from helpers import keyed_cluster, keyed_tuples, nested_loop_pairs, random_keyed_instance

from simjoin.equijoin import equi_join, grid_shape, join_load_bound, largest_remainder
from simjoin.mpc import load_summary


def _materialised(out) -> Counter:
    left, right = out.pairs()
    return Counter(zip(out.copies["tag"][left].tolist(), out.copies["tag"][right].tolist()))


def test_small_example():
    t = keyed_tuples([1, 1, 2], [1, 3])  # {a,a,b} x {a,c}
    out = equi_join(keyed_cluster(t, 2), ["key"])
    assert out.count == 2
    assert _materialised(out) == nested_loop_pairs(t)
    left, right = out.pairs()
    assert set(out.copies["key"][left].tolist()) == {1}
    assert np.array_equal(out.copies["key"][left], out.copies["key"][right])


def test_empty_side():
    t = keyed_tuples(np.arange(40) % 5, [])
    cl = keyed_cluster(t, 4)
    out = equi_join(cl, ["key"])
    assert out.count == 0
    assert load_summary(cl).L <= math.ceil(40 / 4) + 4 * 4


def test_single_heavy_key_grid():
    t = keyed_tuples(np.zeros(64), np.zeros(64))
    cl = keyed_cluster(t, 16)
    out = equi_join(cl, ["key"])
    assert out.count == 4096
    assert _materialised(out) == nested_loop_pairs(t)
    assert out.stats["heavy_keys"] == 1
    route = load_summary(cl).received[-1]
    assert route.max() <= 2 * 64 // 4 + 16


def test_load_bound_values():
    assert join_load_bound(4096, 0, 16) == 256
    assert join_load_bound(4096, 4096, 16) == 272
    assert join_load_bound(0, 0, 16) == 0


def test_helpers():
    assert largest_remainder(np.array([1.5, 1.5, 1.0]), 4).tolist() == [2, 1, 1]
    assert grid_shape(16, 64, 64) == (4, 4)
    assert grid_shape(4, 100, 1) == (4, 1)


@pytest.mark.parametrize("p", [1, 3, 8, 16])
def test_oracle_equivalence_random(p, rng):
    for _ in range(4):
        t = random_keyed_instance(rng, n_max=600)
        out = equi_join(keyed_cluster(t, p), ["key"])
        assert _materialised(out) == nested_loop_pairs(t)


def test_constant_rounds(rng):
    rounds = set()
    for n in (200, 2000):
        t = random_keyed_instance(rng, n_max=n)
        cl = keyed_cluster(t, 8)
        equi_join(cl, ["key"])
        rounds.add(load_summary(cl).rounds)
    assert len(rounds) == 1
