"""Quantizer, symbol encoder and the nearest-point lookup decoder."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .design import FEASIBILITY_EPS
from .functions import MultisetClass

__all__ = [
    "Quantizer",
    "Encoder",
    "DecoderTable",
    "DecodeResult",
    "quantize",
    "dequantize",
    "encode",
    "build_decoder_table",
    "decode",
    "decode_many",
]


@dataclass(frozen=True)
class Quantizer:
    """Uniform mid-tread quantizer with reconstruction points at both ends."""

    lo: float
    hi: float
    q: int

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("need lo < hi")
        if self.q < 2:
            raise ValueError("need q >= 2")

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.q - 1)

    @property
    def levels(self) -> np.ndarray:
        """Reconstruction value of every level."""
        return self.lo + self.step * np.arange(self.q)

    def quantize(self, v):
        v = np.clip(np.asarray(v, dtype=float), self.lo, self.hi)
        lvl = np.rint((v - self.lo) / self.step).astype(int)
        return np.clip(lvl, 0, self.q - 1)

    def dequantize(self, level):
        level = np.asarray(level)
        if np.any((level < 0) | (level >= self.q)):
            raise IndexError(f"level out of range [0, {self.q})")
        return self.lo + level * self.step


def quantize(v: float, Q: Quantizer) -> int:
    return int(Q.quantize(v))


def dequantize(level: int, Q: Quantizer) -> float:
    return float(Q.dequantize(level))


@dataclass(frozen=True)
class Encoder:
    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=complex))

    @property
    def q(self) -> int:
        return len(self.x)

    def __call__(self, levels):
        levels = np.asarray(levels)
        if np.any((levels < 0) | (levels >= self.q)):
            raise IndexError(f"level out of range [0, {self.q})")
        return self.x[levels]


def encode(level: int, E: Encoder) -> complex:
    return complex(E(level))


@dataclass(frozen=True)
class DecodeResult:
    value: float
    point_index: int
    distance: float


@dataclass(frozen=True)
class DecoderTable:
    points: np.ndarray
    values: np.ndarray
    epsilon: float
    members: tuple[tuple[int, ...], ...] = field(default=(), repr=False)
    class_values: np.ndarray | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.points)

    @property
    def merged_mixed(self) -> list[int]:
        """Points whose merged classes carried different function values."""
        if self.class_values is None:
            return []
        return [k for k, m in enumerate(self.members) if np.ptp(self.class_values[list(m)]) > 0]

    def to_dict(self) -> dict:
        return {
            "points_re": self.points.real.tolist(),
            "points_im": self.points.imag.tolist(),
            "values": self.values.tolist(),
            "epsilon": self.epsilon,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DecoderTable":
        pts = np.asarray(data["points_re"], float) + 1j * np.asarray(data["points_im"], float)
        return cls(pts, np.asarray(data["values"], float), float(data["epsilon"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def build_decoder_table(x, classes: list[MultisetClass], epsilon: float = FEASIBILITY_EPS) -> DecoderTable:
    """Lookup table of distinct received points and their output values.

    Class points ``counts . x`` closer than ``epsilon * sqrt(P)`` are merged by
    single linkage; a merged point decodes to the mean value of its classes.
    Points are ordered by the first class that lands on them.
    """
    x = np.asarray(x, dtype=complex)
    P = float(np.vdot(x, x).real)
    counts = np.array([c.counts for c in classes], dtype=float)
    values = np.array([c.value for c in classes], dtype=float)
    pts = counts @ x
    radius = epsilon * np.sqrt(P)
    tree = cKDTree(np.column_stack([pts.real, pts.imag]))
    close = tree.query_pairs(radius, output_type="ndarray")
    n = len(pts)
    adj = coo_matrix((np.ones(len(close)), (close[:, 0], close[:, 1])), shape=(n, n))
    _, label = connected_components(adj, directed=False)
    # relabel components by first appearance so the table order is deterministic
    _, first = np.unique(label, return_index=True)
    order = np.argsort(first)
    members = tuple(tuple(np.flatnonzero(label == label[first[k]]).tolist()) for k in order)
    points = np.array([pts[m[0]] for m in members])
    # agreeing classes keep their value exactly; averaging identical floats can drift an ulp
    vals = np.array([values[m[0]] if np.ptp(values[list(m)]) == 0 else values[list(m)].mean() for m in members])
    return DecoderTable(points, vals, float(epsilon), members, values)


def decode(y: complex, table: DecoderTable) -> DecodeResult:
    """Nearest table point to ``y``; ties go to the lowest index."""
    d = np.abs(table.points - y)
    k = int(np.argmin(d))
    return DecodeResult(float(table.values[k]), k, float(d[k]))


def decode_many(y, table: DecoderTable) -> np.ndarray:
    """Vectorized :func:`decode` returning only the values."""
    y = np.asarray(y, dtype=complex).ravel()
    out = np.empty(len(y))
    step = max(1, 2_000_000 // max(len(table), 1))
    for lo in range(0, len(y), step):
        d = np.abs(y[lo:lo + step, None] - table.points[None, :])
        out[lo:lo + step] = table.values[np.argmin(d, axis=1)]
    return out
