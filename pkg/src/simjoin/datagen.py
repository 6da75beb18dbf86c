"""Synthetic datasets and the line-based dataset file format.

File layout (ASCII, LF)::

    SIMJOIN v1 metric=hamming n=<points in file> d=<dimension>
    R <id> <bitstring>
    S <id> <bitstring>
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from simjoin.points import PointSet, Relation

HEADER_RE = re.compile(r"^SIMJOIN v1 metric=hamming n=(\d+) d=(\d+)$")


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetSpec:
    n: int
    d: int
    mode: str = "uniform"
    clusters: int = 0
    cluster_size: int = 0
    radius: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in ("uniform", "planted-clusters"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.n < 0 or self.d < 1:
            raise ValueError("need n >= 0 and d >= 1")
        if self.clusters < 0 or self.cluster_size < 0:
            raise ValueError("cluster count and size must be non-negative")
        if self.clusters * self.cluster_size > self.n:
            raise ValueError("clusters * cluster_size exceeds n")
        if not 0 <= self.radius <= self.d:
            raise ValueError("radius must lie in [0, d]")


def _relations(r_bits: np.ndarray, s_bits: np.ndarray) -> tuple[PointSet, PointSet]:
    nr = len(r_bits)
    return (
        PointSet(Relation.R, np.arange(nr), r_bits),
        PointSet(Relation.S, np.arange(nr, nr + len(s_bits)), s_bits),
    )


def gen_uniform(spec: DatasetSpec) -> tuple[PointSet, PointSet]:
    rng = np.random.default_rng(spec.seed)
    r_bits = rng.integers(0, 2, size=(spec.n, spec.d), dtype=np.uint8)
    s_bits = rng.integers(0, 2, size=(spec.n, spec.d), dtype=np.uint8)
    return _relations(r_bits, s_bits)


def gen_planted_clusters(spec: DatasetSpec) -> tuple[PointSet, PointSet]:
    """Uniform background with ``clusters`` groups of near-duplicates.

    Each member is its cluster centre with between 0 and ``radius`` bits
    flipped (distinct coordinates), so members are within ``2*radius`` of
    each other. Members alternate between R and S and overwrite randomly
    chosen background rows.
    """
    rng = np.random.default_rng(spec.seed)
    r_bits = rng.integers(0, 2, size=(spec.n, spec.d), dtype=np.uint8)
    s_bits = rng.integers(0, 2, size=(spec.n, spec.d), dtype=np.uint8)
    if spec.clusters == 0 or spec.cluster_size == 0:
        return _relations(r_bits, s_bits)
    per_r = (spec.cluster_size + 1) // 2
    per_s = spec.cluster_size // 2
    r_rows = rng.permutation(spec.n)[: spec.clusters * per_r]
    s_rows = rng.permutation(spec.n)[: spec.clusters * per_s]
    for c in range(spec.clusters):
        centre = rng.integers(0, 2, size=spec.d, dtype=np.uint8)
        members = np.repeat(centre[None, :], spec.cluster_size, axis=0)
        for m in range(spec.cluster_size):
            flips = rng.integers(0, spec.radius + 1)
            coords = rng.choice(spec.d, size=flips, replace=False)
            members[m, coords] ^= 1
        r_bits[r_rows[c * per_r : (c + 1) * per_r]] = members[0::2]
        s_bits[s_rows[c * per_s : (c + 1) * per_s]] = members[1::2]
    return _relations(r_bits, s_bits)


def generate(spec: DatasetSpec) -> tuple[PointSet, PointSet]:
    if spec.mode == "uniform":
        return gen_uniform(spec)
    return gen_planted_clusters(spec)


def write_dataset(path: str | Path, R: PointSet, S: PointSet) -> None:
    if R.dim != S.dim:
        raise ValueError("R and S have different dimensions")
    lines = [f"SIMJOIN v1 metric=hamming n={len(R) + len(S)} d={R.dim}"]
    for ps in (R, S):
        tag = ps.relation.name
        strings = (ps.bits + ord("0")).view("S1").reshape(len(ps), ps.dim) if len(ps) else []
        for pid, row in zip(ps.ids, strings):
            lines.append(f"{tag} {pid} {row.tobytes().decode('ascii')}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii", newline="\n")


def read_dataset(path: str | Path) -> tuple[PointSet, PointSet]:
    text = Path(path).read_text(encoding="ascii")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DatasetFormatError("missing header")
    m = HEADER_RE.match(lines[0])
    if not m:
        raise DatasetFormatError(f"missing header: bad header line {lines[0]!r}")
    n, d = int(m.group(1)), int(m.group(2))
    body = lines[1:]
    if len(body) != n:
        raise DatasetFormatError(f"header says n={n} but the file has {len(body)} points")
    ids = {Relation.R: [], Relation.S: []}
    rows = {Relation.R: [], Relation.S: []}
    seen = set()
    for lineno, line in enumerate(body, start=2):
        parts = line.split(" ")
        if len(parts) != 3 or parts[0] not in ("R", "S"):
            raise DatasetFormatError(f"line {lineno}: expected '<R|S> <id> <bits>'")
        tag, pid, bits = Relation[parts[0]], parts[1], parts[2]
        if not pid.isdigit():
            raise DatasetFormatError(f"line {lineno}: bad id {pid!r}")
        if len(bits) != d or set(bits) - {"0", "1"}:
            raise DatasetFormatError(f"line {lineno}: expected a bit string of length {d}")
        if int(pid) in seen:
            raise DatasetFormatError(f"line {lineno}: duplicate id {pid}")
        seen.add(int(pid))
        ids[tag].append(int(pid))
        rows[tag].append(np.frombuffer(bits.encode("ascii"), dtype=np.uint8) - ord("0"))

    def build(rel: Relation) -> PointSet:
        if not rows[rel]:
            return PointSet.empty(rel, d)
        return PointSet(rel, ids[rel], np.stack(rows[rel]))

    return build(Relation.R), build(Relation.S)
