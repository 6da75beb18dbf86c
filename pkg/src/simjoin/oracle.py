"""Ground truth: exact joins, density statistics, recall and load bounds."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from simjoin.lsh import LshParams
from simjoin.points import PointSet, hamming_matrix

MAX_ORACLE_PAIRS = 10**8


class OracleSizeError(ValueError):
    pass


def _guard(R: PointSet, S: PointSet) -> None:
    if len(R) * len(S) > MAX_ORACLE_PAIRS:
        raise OracleSizeError(f"oracle size guard: |R|*|S| = {len(R) * len(S)} > {MAX_ORACLE_PAIRS}")


def _blocks(R: PointSet, S: PointSet):
    step = max(1, (1 << 22) // max(len(S), 1))
    for lo in range(0, len(R), step):
        yield lo, hamming_matrix(R.packed[lo : lo + step], S.packed)


def brute_force_join(R: PointSet, S: PointSet, r: int) -> np.ndarray:
    """Every ``(r_id, s_id, distance)`` with distance ``<= r``, sorted by ids."""
    _guard(R, S)
    if R.dim != S.dim:
        raise ValueError("dimension mismatch")
    out = []
    if len(S):
        for lo, dist in _blocks(R, S):
            i, j = np.nonzero(dist <= r)
            out.append(np.stack([R.ids[lo + i], S.ids[j], dist[i, j]], axis=1))
    pairs = np.concatenate(out) if out else np.zeros((0, 3), np.int64)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return pairs[order].astype(np.int64)


def pair_set(pairs: np.ndarray) -> set[tuple[int, int]]:
    return {(int(a), int(b)) for a, b in np.asarray(pairs)[:, :2]}


def recall(reported, exact) -> float:
    exact = set(exact)
    if not exact:
        return 1.0
    return len(set(reported) & exact) / len(exact)


@dataclass
class DensityProfile:
    n: int
    kappa: int
    n_r_near: np.ndarray  # per point (R then S): near neighbours in the other relation
    n_cr_near: np.ndarray  # per point: neighbours within c*r
    level: np.ndarray  # per point density level in 1..kappa
    out_r: int
    out_cr: int  # pairs with r < distance <= c*r
    out_r_level: np.ndarray  # index i-1 holds OUT_{r,i}
    attribution: str

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, np.ndarray):
                d[k] = v.astype(int).tolist()
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def density_level(near: np.ndarray, n: int, p2: float, kappa: int) -> np.ndarray:
    """Smallest ``i < kappa`` with ``near > n * p2**i``, else ``kappa``."""
    near = np.asarray(near)
    level = np.full(near.shape, kappa, dtype=np.int64)
    for i in range(kappa - 1, 0, -1):
        level = np.where(near > n * p2**i, i, level)
    return level


def density_profile(R: PointSet, S: PointSet, params: LshParams, kappa: int, attribution: str = "min") -> DensityProfile:
    """Near counts, density levels and per-level near-pair counts.

    Each near pair is attributed to ``min(level_x, level_y)``; with
    ``attribution="both"`` it counts once under each distinct endpoint level.
    """
    if attribution not in ("min", "both"):
        raise ValueError("attribution must be 'min' or 'both'")
    _guard(R, S)
    nr, ns = len(R), len(S)
    n = nr + ns
    near = np.zeros(n, np.int64)
    cnear = np.zeros(n, np.int64)
    out_cr = 0
    near_pairs = []
    if nr and ns:
        for lo, dist in _blocks(R, S):
            is_near = dist <= params.r
            is_c = dist <= params.c * params.r
            near[lo : lo + dist.shape[0]] = is_near.sum(axis=1)
            cnear[lo : lo + dist.shape[0]] = is_c.sum(axis=1)
            near[nr:] += is_near.sum(axis=0)
            cnear[nr:] += is_c.sum(axis=0)
            out_cr += int((is_c & ~is_near).sum())
            i, j = np.nonzero(is_near)
            near_pairs.append(np.stack([lo + i, nr + j], axis=1))
    level = density_level(near, n, params.p2, kappa)
    pairs = np.concatenate(near_pairs) if near_pairs else np.zeros((0, 2), np.int64)
    lx, ly = level[pairs[:, 0]], level[pairs[:, 1]]
    if attribution == "min":
        per_level = np.bincount(np.minimum(lx, ly), minlength=kappa + 1)[1:]
    else:
        per_level = np.bincount(lx, minlength=kappa + 1)[1:] + np.bincount(ly[ly != lx], minlength=kappa + 1)[1:]
    return DensityProfile(
        n=n,
        kappa=kappa,
        n_r_near=near,
        n_cr_near=cnear,
        level=level,
        out_r=int(len(pairs)),
        out_cr=out_cr,
        out_r_level=per_level.astype(np.int64),
        attribution=attribution,
    )


def theoretical_load_bound(profile: DensityProfile, params: LshParams, n: int, p: int, kappa: int) -> float:
    """``sqrt(sum_i OUT_ri / (p p1**i)) + sqrt(OUT_cr / p) + n / p**(1/(1+rho))``, constants 1."""
    if profile.kappa != kappa:
        raise ValueError("profile was computed for a different kappa")
    levels = np.arange(1, kappa + 1)
    dense = float(np.sum(profile.out_r_level / (p * params.p1**levels)))
    return math.sqrt(dense) + math.sqrt(profile.out_cr / p) + n / p ** (1.0 / (1.0 + params.rho))
