"""Point containers for the two relations of a Hamming-space join."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class Relation(enum.IntEnum):
    R = 0
    S = 1


@dataclass(frozen=True)
class Point:
    """A single identified bit vector."""

    id: int
    relation: Relation
    bits: np.ndarray

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits, dtype=np.uint8).reshape(-1)
        if bits.size < 1:
            raise ValueError("point dimension must be >= 1")
        if bits.max() > 1:
            raise ValueError("bits must be 0/1")
        if self.id < 0:
            raise ValueError("point id must be non-negative")
        bits = bits.copy()
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "relation", Relation(self.relation))

    @property
    def dim(self) -> int:
        return int(self.bits.size)


@dataclass
class PointSet:
    """All points of one relation, stored column-wise.

    ``bits`` is an ``(n, d)`` uint8 matrix of 0/1 values; ``ids`` holds the
    matching point identifiers.
    """

    relation: Relation
    ids: np.ndarray
    bits: np.ndarray
    _packed: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.relation = Relation(self.relation)
        self.ids = np.asarray(self.ids, dtype=np.int64).reshape(-1)
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.ndim != 2:
            raise ValueError("bits must be a 2-d array")
        if bits.shape[0] != self.ids.shape[0]:
            raise ValueError("ids and bits disagree on the number of points")
        if bits.size and bits.max() > 1:
            raise ValueError("bits must be 0/1")
        if self.ids.size and self.ids.min() < 0:
            raise ValueError("point ids must be non-negative")
        if np.unique(self.ids).size != self.ids.size:
            raise ValueError("duplicate point id")
        self.bits = bits

    @classmethod
    def empty(cls, relation: Relation, dim: int) -> PointSet:
        return cls(relation, np.zeros(0, np.int64), np.zeros((0, dim), np.uint8))

    @classmethod
    def from_points(cls, relation: Relation, points: list[Point], dim: int | None = None) -> PointSet:
        if not points:
            if dim is None:
                raise ValueError("dimension required for an empty point set")
            return cls.empty(relation, dim)
        if any(pt.relation != relation for pt in points):
            raise ValueError("point relation tag does not match the set")
        return cls(relation, [pt.id for pt in points], np.stack([pt.bits for pt in points]))

    def __len__(self) -> int:
        return int(self.ids.shape[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PointSet):
            return NotImplemented
        return (
            self.relation == other.relation
            and np.array_equal(self.ids, other.ids)
            and np.array_equal(self.bits, other.bits)
        )

    @property
    def dim(self) -> int:
        return int(self.bits.shape[1])

    @property
    def packed(self) -> np.ndarray:
        """Bits packed into little-endian uint64 words, shape ``(n, ceil(d/64))``."""
        if self._packed is None:
            self._packed = pack_bits(self.bits)
        return self._packed

    def point(self, row: int) -> Point:
        return Point(int(self.ids[row]), self.relation, self.bits[row])


def pack_bits(bits: np.ndarray) -> np.ndarray:
    n, d = bits.shape
    words = (d + 63) // 64
    padded = np.zeros((n, words * 64), dtype=np.uint8)
    padded[:, :d] = bits
    packed = np.packbits(padded, axis=1, bitorder="little")
    return np.ascontiguousarray(packed).view(np.uint64).reshape(n, words)


def hamming(x: Point | np.ndarray, y: Point | np.ndarray) -> int:
    a = x.bits if isinstance(x, Point) else np.asarray(x)
    b = y.bits if isinstance(y, Point) else np.asarray(y)
    if a.shape != b.shape:
        raise ValueError("dimension mismatch")
    return int(np.count_nonzero(a != b))


def hamming_rows(packed_a: np.ndarray, packed_b: np.ndarray) -> np.ndarray:
    """Row-aligned Hamming distances between two packed matrices."""
    return np.bitwise_count(packed_a ^ packed_b).sum(axis=1, dtype=np.int64)


def hamming_matrix(packed_a: np.ndarray, packed_b: np.ndarray) -> np.ndarray:
    """All-pairs Hamming distances, shape ``(len(a), len(b))``."""
    out = np.zeros((packed_a.shape[0], packed_b.shape[0]), dtype=np.int64)
    for w in range(packed_a.shape[1]):
        out += np.bitwise_count(packed_a[:, w, None] ^ packed_b[None, :, w])
    return out
