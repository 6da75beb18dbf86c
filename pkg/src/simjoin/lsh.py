"""Bit-sampling LSH over Hamming space.

An atomic hash reads one coordinate of the bit vector; a level-``k`` hash
concatenates ``k`` coordinates drawn uniformly with replacement, so two
points at distance ``t`` collide with probability exactly ``(1 - t/d)**k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from simjoin.points import Point

# Seed stream tags, so estimation and join hashes are independent draws.
STREAM_ESTIMATE = 0
STREAM_PHASE = 1
STREAM_TREE = 2


@dataclass(frozen=True)
class LshParams:
    r: int
    c: float
    p1: float
    p2: float
    rho: float
    dim: int

    @property
    def cr(self) -> float:
        return self.c * self.r


def bit_sampling_family(dim: int, r: int, c: float) -> LshParams:
    """Collision contract of bit sampling at radii ``r`` and ``c*r``."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if r < 1:
        raise ValueError("r must be >= 1")
    if c <= 1:
        raise ValueError("c must be > 1")
    if c * r >= dim:
        raise ValueError(f"c*r = {c * r:g} must be below dim = {dim}; p2 would be 0")
    p1 = 1.0 - r / dim
    p2 = 1.0 - c * r / dim
    rho = math.log(1.0 / p1) / math.log(1.0 / p2)
    return LshParams(r=r, c=float(c), p1=p1, p2=p2, rho=rho, dim=dim)


def collision_probability(params: LshParams, distance: int, level: int) -> float:
    if not 0 <= distance <= params.dim:
        raise ValueError(f"distance {distance} outside [0, {params.dim}]")
    if level < 1:
        raise ValueError("level must be >= 1")
    d = params.dim
    return (d - distance) ** level / d**level


def kappa(params: LshParams, p: int) -> int:
    """Number of levels used on ``p`` processors (never below 1)."""
    if p < 1:
        raise ValueError("p must be >= 1")
    raw = (params.rho / (1.0 + params.rho)) * math.log(p) / math.log(1.0 / params.p1)
    return max(1, math.ceil(raw))


def hashes_per_level(params: LshParams, level: int, c_rep: float = 1.0) -> int:
    """``t_i = ceil(c_rep / p1**i)``."""
    x = c_rep / params.p1**level
    return max(1, math.ceil(x * (1.0 - 1e-12)))


def derive_seed(master: int, *path: int) -> int:
    """64-bit seed for the node ``path`` below ``master`` (counter-based split)."""
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(v) for v in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class HashFunctionSpec:
    level: int
    repetition: int
    seed: int
    dim: int

    def __post_init__(self) -> None:
        if self.level < 1:
            raise ValueError("level must be >= 1")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")

    @cached_property
    def coords(self) -> np.ndarray:
        rng = np.random.default_rng(self.seed)
        return rng.integers(0, self.dim, size=self.level)

    @classmethod
    def derive(cls, master: int, stream: int, rep: int, level: int, j: int, dim: int) -> HashFunctionSpec:
        return cls(level=level, repetition=j, seed=derive_seed(master, stream, rep, level, j), dim=dim)


def _pack_digest(sampled: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n, k = sampled.shape
    nbytes = max(16, (k + 7) // 8)
    nbytes = (nbytes + 7) // 8 * 8
    raw = np.zeros((n, nbytes), dtype=np.uint8)
    packed = np.packbits(sampled, axis=1, bitorder="little")
    raw[:, : packed.shape[1]] = packed
    words = raw.view(np.uint64)
    lo, hi = words[:, 0].copy(), words[:, 1].copy()
    # Digests wider than 128 bits are folded with a multiplicative mix.
    for w in range(2, words.shape[1]):
        hi = (hi ^ words[:, w]) * np.uint64(0x9E3779B97F4A7C15)
        lo = lo ^ (hi >> np.uint64(29))
    return hi, lo


def hash_rows(spec: HashFunctionSpec, bits: np.ndarray, prefix: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised ``eval_hash`` over an ``(n, d)`` bit matrix.

    Returns the digest as two uint64 lanes ``(hi, lo)``. With ``prefix`` only
    the first ``prefix`` sampled coordinates are used (a coarser bucket of
    the same hash).
    """
    if bits.shape[1] != spec.dim:
        raise ValueError(f"dimension mismatch: spec {spec.dim}, points {bits.shape[1]}")
    coords = spec.coords if prefix is None else spec.coords[:prefix]
    return _pack_digest(bits[:, coords])


def eval_hash(spec: HashFunctionSpec, x: Point | np.ndarray) -> int:
    bits = x.bits if isinstance(x, Point) else np.asarray(x, dtype=np.uint8)
    if bits.ndim != 1 or bits.size != spec.dim:
        raise ValueError(f"dimension mismatch: spec {spec.dim}, point {bits.size}")
    hi, lo = hash_rows(spec, bits.reshape(1, -1))
    return (int(hi[0]) << 64) | int(lo[0])
