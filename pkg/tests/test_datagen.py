from __future__ import annotations

import math

import numpy as np
import pytest

from simjoin.datagen import (
    DatasetFormatError,
    DatasetSpec,
    gen_planted_clusters,
    gen_uniform,
    read_dataset,
    write_dataset,
)
from simjoin.oracle import brute_force_join
from simjoin.points import hamming_matrix


def test_uniform_empty():
    R, S = gen_uniform(DatasetSpec(n=0, d=8))
    assert len(R) == len(S) == 0


def test_uniform_deterministic():
    a = gen_uniform(DatasetSpec(n=50, d=32, seed=9))
    b = gen_uniform(DatasetSpec(n=50, d=32, seed=9))
    assert a[0] == b[0] and a[1] == b[1]


def test_uniform_mean_distance():
    R, S = gen_uniform(DatasetSpec(n=2048, d=64, seed=1))
    dist = hamming_matrix(R.packed[:512], S.packed[:512])
    # Distances of independent pairs are Binomial(64, 1/2); average over 512 disjoint pairs.
    diag = np.diag(dist)
    assert abs(diag.mean() - 32) <= 3 * math.sqrt(16 / len(diag))


def test_radius_zero_members_identical():
    R, S = gen_planted_clusters(DatasetSpec(n=100, d=32, mode="planted-clusters", clusters=1, cluster_size=20, radius=0))
    dist = hamming_matrix(R.packed, S.packed)
    assert (dist == 0).sum() >= 10 * 10


def test_cluster_pairs_all_near():
    spec = DatasetSpec(n=4096, d=64, mode="planted-clusters", clusters=1, cluster_size=512, radius=2, seed=4)
    R, S = gen_planted_clusters(spec)
    assert len(brute_force_join(R, S, 4)) >= 256 * 256


def test_zero_clusters_equals_uniform():
    a = gen_planted_clusters(DatasetSpec(n=64, d=16, mode="planted-clusters", seed=5))
    b = gen_uniform(DatasetSpec(n=64, d=16, seed=5))
    assert a[0] == b[0] and a[1] == b[1]


def test_spec_validation():
    with pytest.raises(ValueError):
        DatasetSpec(n=10, d=8, mode="planted-clusters", clusters=2, cluster_size=6)
    with pytest.raises(ValueError):
        DatasetSpec(n=10, d=8, radius=9)
    with pytest.raises(ValueError):
        DatasetSpec(n=10, d=8, mode="gaussian")


def test_round_trip(tmp_path):
    R, S = gen_planted_clusters(DatasetSpec(n=40, d=70, mode="planted-clusters", clusters=2, cluster_size=6, radius=3))
    path = tmp_path / "x.ds"
    write_dataset(path, R, S)
    R2, S2 = read_dataset(path)
    assert R == R2 and S == S2
    assert path.read_text().splitlines()[0] == "SIMJOIN v1 metric=hamming n=80 d=70"


@pytest.mark.parametrize(
    "text, message",
    [
        ("", "missing header"),
        ("SIMJOIN v1 metric=hamming n=2 d=4\nR 0 0101\n", "n=2"),
        ("SIMJOIN v1 metric=hamming n=1 d=4\nR 0 0121\n", "bit string"),
        ("SIMJOIN v1 metric=hamming n=2 d=4\nR 0 0101\nS 00 0101\n", "duplicate"),
        ("SIMJOIN v1 metric=hamming n=1 d=4\nQ 0 0101\n", "expected"),
    ],
)
def test_read_errors(tmp_path, text, message):
    path = tmp_path / "bad.ds"
    path.write_text(text)
    with pytest.raises(DatasetFormatError, match=message):
        read_dataset(path)
