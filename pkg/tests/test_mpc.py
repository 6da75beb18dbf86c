from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simjoin.mpc import (
    Cluster,
    ConservationError,
    broadcast,
    load_summary,
    mpc_allreduce_sum,
    mpc_prefix_sum,
    mpc_segmented_sum,
    mpc_sort,
)

KEYED = np.dtype([("k", np.int64), ("origin", np.int64)])


def _keyed(keys, p):
    items = np.zeros(len(keys), KEYED)
    items["k"] = keys
    items["origin"] = np.arange(len(keys))
    cl = Cluster(p, KEYED)
    cl.load(items)
    return cl


def test_empty_round():
    cl = Cluster(3)
    cl.load(np.arange(6))
    cl.run_round(lambda rank, local: (local, local[:0], np.zeros(0, np.int64)))
    assert cl.round_counter == 1
    assert load_summary(cl).received[0].tolist() == [0, 0, 0]
    assert [s.tolist() for s in cl.stores] == [[0, 1], [2, 3], [4, 5]]


def test_point_to_point_send():
    cl = Cluster(2)
    cl.load(np.arange(5), owner=np.zeros(5, np.int64))

    def compute(rank, local):
        if rank == 0:
            return local[:0], local, np.ones(len(local), np.int64)
        return local, local[:0], np.zeros(0, np.int64)

    cl.run_round(compute)
    rep = load_summary(cl)
    assert rep.sent[0][0] == 5 and rep.received[0][1] == 5
    assert rep.L == 5 and rep.round_load(0) == 5
    assert cl.stores[1].tolist() == [0, 1, 2, 3, 4]


def test_all_to_all():
    p = 4
    cl = Cluster(p)
    cl.load(np.repeat(np.arange(p), p), owner=np.repeat(np.arange(p), p))
    cl.run_round(lambda rank, local: (local[:0], local, np.arange(p)))
    rep = load_summary(cl)
    assert rep.sent[0].tolist() == [4] * 4
    assert rep.received[0].tolist() == [4] * 4


def test_empty_report():
    rep = load_summary(Cluster(4))
    assert rep.rounds == 0 and rep.L == 0


def test_conservation_violation_raises():
    cl = Cluster(2)
    with pytest.raises(ConservationError):
        cl.charge(np.array([1, 0]), np.array([0, 0]))


def test_bad_destination():
    cl = Cluster(2)
    cl.load(np.arange(4))
    with pytest.raises(IndexError):
        cl.run_round(lambda rank, local: (local[:0], local, np.full(len(local), 5)))


def test_check_job():
    with pytest.raises(ValueError):
        Cluster(8).check_job(4)
    with pytest.warns(UserWarning):
        Cluster(8).check_job(40)


def test_broadcast_accounting():
    cl = Cluster(4)
    broadcast(cl, 0)
    assert load_summary(cl).round_load(0) == 0
    broadcast(cl, 7)
    assert load_summary(cl).received[1].tolist() == [7, 7, 7, 7]
    assert load_summary(cl).sent[1].sum() == 28


def test_sort_equal_keys_tie_break():
    cl = _keyed(np.zeros(8, np.int64), 4)
    cl.stores = cl.stores[::-1]  # origin order no longer matches processor order
    mpc_sort(cl, ["k"])
    assert cl.sizes.tolist() == [2, 2, 2, 2]
    flat = np.concatenate(cl.stores)["origin"]
    assert flat.tolist() == [6, 7, 4, 5, 2, 3, 0, 1]


def test_sort_random_keys_balance(rng):
    cl = _keyed(rng.integers(0, 10**6, 1000), 10)
    mpc_sort(cl, ["k"])
    rep = load_summary(cl)
    assert rep.rounds == 2
    assert cl.sizes.max() == 100
    assert rep.received[1].max() <= 110
    keys = np.concatenate(cl.stores)["k"]
    assert np.all(keys[1:] >= keys[:-1])


def test_sort_already_sorted_is_cheap():
    cl = _keyed(np.arange(100), 4)
    mpc_sort(cl, ["k"])
    rep = load_summary(cl)
    assert rep.sent[1].sum() == 0
    assert np.concatenate(cl.stores)["k"].tolist() == list(range(100))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(-50, 50), max_size=200), st.integers(1, 9))
def test_sort_property(keys, p):
    cl = _keyed(np.array(keys, dtype=np.int64), p)
    mpc_sort(cl, ["k"])
    out = np.concatenate(cl.stores)
    assert out["k"].tolist() == sorted(keys)
    assert np.ptp(cl.sizes) <= 1
    for a, b in zip(load_summary(cl).sent, load_summary(cl).received):
        assert a.sum() == b.sum()


def test_prefix_sum_examples():
    cl = Cluster(2)
    cl.load(np.array([3, 0, 2, 5]))
    out = mpc_prefix_sum(cl, lambda v: v)
    assert np.concatenate(out).tolist() == [3, 3, 5, 10]
    cl = Cluster(2)
    cl.load(np.ones(4, np.int64))
    assert np.concatenate(mpc_prefix_sum(cl, lambda v: v)).tolist() == [1, 2, 3, 4]
    cl = Cluster(3)
    cl.load(np.zeros(5, np.int64))
    assert np.concatenate(mpc_prefix_sum(cl, lambda v: v)).tolist() == [0] * 5
    assert load_summary(cl).rounds == 2


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 100), max_size=100), st.integers(1, 8))
def test_prefix_sum_property(values, p):
    cl = Cluster(p)
    cl.load(np.array(values, dtype=np.int64))
    out = mpc_prefix_sum(cl, lambda v: v)
    assert np.concatenate(out).tolist() == np.cumsum(values).tolist()


def test_segmented_sum():
    cl = _keyed(np.array([1, 1, 2, 2, 2, 5, 7, 7]), 3)
    seg = mpc_segmented_sum(cl, ["k"], lambda t: np.ones(len(t), np.int64))
    assert np.concatenate(seg.totals)[:, 0].tolist() == [2, 2, 3, 3, 3, 1, 2, 2]
    assert np.concatenate(seg.before)[:, 0].tolist() == [0, 1, 0, 1, 2, 0, 0, 1]
    assert np.concatenate(seg.first).tolist() == [1, 0, 1, 0, 0, 1, 1, 0]


def test_allreduce():
    cl = Cluster(3)
    total = mpc_allreduce_sum(cl, [np.array([1, 2]), np.array([3, 4]), np.array([5, 6])])
    assert total.tolist() == [9, 12]
    assert load_summary(cl).L == 6


def test_report_json_roundtrip():
    cl = Cluster(2)
    broadcast(cl, 3, label="b")
    doc = load_summary(cl).to_dict()
    assert doc["rounds"] == 1 and doc["L"] == 4 and doc["labels"] == ["b"]
