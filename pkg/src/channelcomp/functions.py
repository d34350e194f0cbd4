"""Target functions, input-space enumeration and the selection structures.

A node's quantized input is a *level* in ``{0, ..., q-1}``.  A tuple of ``K``
levels is addressed by a mixed-radix index with node 1 as the least
significant digit.  Because every node shares one modulation vector ``x``, the
superposed symbol for a tuple only depends on how many times each level occurs
(its count vector), so the ``q**K`` tuples collapse into multiset classes.
"""

from __future__ import annotations

import itertools
import json
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "ENUMERATION_LIMIT",
    "EnumerationLimitError",
    "NonSymmetricFunction",
    "FunctionSpec",
    "MultisetClass",
    "RangeSet",
    "SelectionMatrix",
    "PRESETS",
    "make_function",
    "load_value_table",
    "index_to_tuple",
    "tuple_to_index",
    "verify_symmetry",
    "enumerate_multiset_classes",
    "build_selection_matrix",
    "range_set",
]

ENUMERATION_LIMIT = 10**6
SYMMETRY_RTOL = 1e-12


class EnumerationLimitError(ValueError):
    """Raised when ``q**K`` exceeds the brute-force enumeration guard."""


class NonSymmetricFunction(ValueError):
    """Raised when two permutations of one tuple evaluate differently."""


@dataclass(frozen=True)
class FunctionSpec:
    """A K-variate function over ``q`` quantization levels.

    ``evaluator`` receives a 1-D float array of *input values*.  Level ``l`` is
    turned into the value ``level_values[l]`` before evaluation, so the same
    spec can score both quantized tuples and raw continuous inputs.
    """

    K: int
    q: int
    evaluator: Callable[[np.ndarray], float]
    name: str = "custom"
    level_values: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.K < 2:
            raise ValueError(f"K must be >= 2, got {self.K}")
        if self.q < 2:
            raise ValueError(f"q must be >= 2, got {self.q}")
        if self.level_values is not None and len(self.level_values) != self.q:
            raise ValueError("level_values must have length q")

    @property
    def M(self) -> int:
        return self.q**self.K

    def values_of(self, levels) -> np.ndarray:
        lv = np.arange(self.q, dtype=float) if self.level_values is None else np.asarray(self.level_values)
        return lv[np.asarray(levels, dtype=int)]

    def __call__(self, levels: Sequence[int]) -> float:
        """Evaluate on a tuple of levels."""
        return float(self.evaluator(self.values_of(levels)))

    def evaluate_raw(self, values: Sequence[float]) -> float:
        """Evaluate on raw (possibly continuous) input values."""
        return float(self.evaluator(np.asarray(values, dtype=float)))


def _quadratic(v):
    return np.sum(np.square(v))


PRESETS: dict[str, Callable[[np.ndarray], float]] = {
    "sum": np.sum,
    "product": np.prod,
    "max": np.max,
    "quadratic": _quadratic,
}


def make_function(name: str, K: int, q: int, level_values=None) -> FunctionSpec:
    """Build a preset function (sum, product, max or quadratic)."""
    try:
        ev = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown function preset {name!r}; choose from {sorted(PRESETS)}") from None
    lv = None if level_values is None else tuple(float(v) for v in level_values)
    return FunctionSpec(K=K, q=q, evaluator=ev, name=name, level_values=lv)


def load_value_table(path) -> FunctionSpec:
    """Load a custom function from ``{"K": .., "q": .., "values": [...]}``.

    ``values`` holds ``q**K`` reals in input-index order.  The resulting spec
    is only meaningful on level tuples (integer inputs).
    """
    data = json.loads(Path(path).read_text())
    K, q = int(data["K"]), int(data["q"])
    table = np.asarray(data["values"], dtype=float)
    if table.shape != (q**K,):
        raise ValueError(f"value table must hold q**K = {q**K} entries, got {table.size}")

    def lookup(v):
        return table[tuple_to_index(np.rint(v).astype(int), K, q)]

    return FunctionSpec(K=K, q=q, evaluator=lookup, name=data.get("name", "custom"))


def _guard(K: int, q: int, limit: int | None):
    limit = ENUMERATION_LIMIT if limit is None else limit
    if q**K > limit:
        raise EnumerationLimitError(f"q**K = {q**K} exceeds enumeration limit {limit}")


def index_to_tuple(m: int, K: int, q: int) -> tuple[int, ...]:
    """Mixed-radix digits of ``m`` in base ``q``, node 1 least significant."""
    if not 0 <= m < q**K:
        raise IndexError(f"index {m} out of range [0, {q**K})")
    digits = []
    for _ in range(K):
        m, d = divmod(m, q)
        digits.append(d)
    return tuple(digits)


def tuple_to_index(levels: Sequence[int], K: int, q: int) -> int:
    if len(levels) != K:
        raise ValueError(f"expected {K} levels, got {len(levels)}")
    m = 0
    for d in reversed(list(levels)):
        d = int(d)
        if not 0 <= d < q:
            raise IndexError(f"level {d} out of range [0, {q})")
        m = m * q + d
    return m


def _all_tuples(K: int, q: int) -> np.ndarray:
    # row m holds index_to_tuple(m); itertools.product varies the last slot fastest
    grid = np.array(list(itertools.product(range(q), repeat=K)), dtype=int)
    return grid[:, ::-1]


def _same(a: float, b: float) -> bool:
    # permutations may reorder floating-point accumulation
    return a == b or abs(a - b) <= SYMMETRY_RTOL * max(1.0, abs(a), abs(b))


def verify_symmetry(spec: FunctionSpec, limit: int | None = None) -> bool:
    """Brute-force check that ``f(t) == f(sorted(t))`` for every level tuple."""
    _guard(spec.K, spec.q, limit)
    cache: dict[tuple[int, ...], float] = {}
    for t in _all_tuples(spec.K, spec.q):
        key = tuple(sorted(t.tolist()))
        if key not in cache:
            cache[key] = spec(key)
        if not _same(spec(t), cache[key]):
            return False
    return True


@dataclass(frozen=True)
class MultisetClass:
    """Input tuples sharing one level-count vector, hence one constellation point."""

    counts: tuple[int, ...]
    representative: int
    value: float

    @property
    def levels(self) -> tuple[int, ...]:
        """Sorted level tuple of the class."""
        return tuple(l for l, c in enumerate(self.counts) for _ in range(c))

    def point(self, x) -> complex:
        return complex(np.dot(self.counts, x))


def enumerate_multiset_classes(
    spec: FunctionSpec, limit: int | None = None, assume_symmetric: bool = False
) -> list[MultisetClass]:
    """List the ``C(K+q-1, q-1)`` multiset classes of ``spec``'s input space.

    Classes are ordered lexicographically by their sorted level tuple.  Every
    member tuple is evaluated to confirm the class value is well defined unless
    ``assume_symmetric`` is set, which is required beyond the enumeration guard.
    """
    K, q = spec.K, spec.q
    if not assume_symmetric:
        _guard(K, q, limit)
        values: dict[tuple[int, ...], float] = {}
        for t in _all_tuples(K, q):
            key = tuple(sorted(t.tolist()))
            v = spec(t)
            if key not in values:
                values[key] = spec(key)
            if not _same(values[key], v):
                raise NonSymmetricFunction(f"f{tuple(t.tolist())} = {v} differs from f{key} = {values[key]}")
    combos = list(itertools.combinations_with_replacement(range(q), K))
    raw = [values[c] if not assume_symmetric else spec(c) for c in combos]
    snapped = _snap(raw)
    classes = [
        MultisetClass(tuple(int(n) for n in np.bincount(c, minlength=q)), tuple_to_index(c, K, q), v)
        for c, v in zip(combos, snapped)
    ]
    assert len(classes) == math.comb(K + q - 1, q - 1)
    return classes


def _snap(values: list[float]) -> list[float]:
    """Map values that agree up to round-off onto one representative."""
    order = sorted(range(len(values)), key=values.__getitem__)
    out = list(values)
    rep = None
    for k in order:
        if rep is None or not _same(rep, values[k]):
            rep = values[k]
        out[k] = float(rep)
    return out


@dataclass(frozen=True)
class SelectionMatrix:
    """Binary ``q**K x qK`` matrix whose row ``m`` picks node k's level in block k."""

    K: int
    q: int
    rows: np.ndarray = field(repr=False)

    def apply(self, x) -> np.ndarray:
        """Constellation sums ``A (1_K kron x)`` for every input index."""
        return self.rows @ np.kron(np.ones(self.K), np.asarray(x))


def build_selection_matrix(K: int, q: int, limit: int | None = None) -> SelectionMatrix:
    _guard(K, q, limit)
    tuples = _all_tuples(K, q)
    A = np.zeros((q**K, q * K), dtype=np.int8)
    cols = np.arange(K) * q + tuples
    A[np.arange(q**K)[:, None], cols] = 1
    return SelectionMatrix(K, q, A)


@dataclass(frozen=True)
class RangeSet:
    values: tuple[float, ...]

    @property
    def L(self) -> int:
        return len(self.values)


def range_set(spec: FunctionSpec, limit: int | None = None) -> RangeSet:
    classes = enumerate_multiset_classes(spec, limit)
    return RangeSet(tuple(sorted({c.value for c in classes})))
