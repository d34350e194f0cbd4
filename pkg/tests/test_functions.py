import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from channelcomp.functions import (
    EnumerationLimitError,
    FunctionSpec,
    NonSymmetricFunction,
    build_selection_matrix,
    enumerate_multiset_classes,
    index_to_tuple,
    load_value_table,
    make_function,
    range_set,
    tuple_to_index,
    verify_symmetry,
)


def diff_spec(q=2):
    return FunctionSpec(2, q, lambda v: float(v[0] - v[1]), name="diff")


@pytest.mark.parametrize("m,K,q,expected", [(0, 2, 2, (0, 0)), (3, 2, 2, (1, 1)), (6, 2, 4, (2, 1))])
def test_index_to_tuple(m, K, q, expected):
    assert index_to_tuple(m, K, q) == expected
    assert tuple_to_index(expected, K, q) == m


def test_index_out_of_range():
    with pytest.raises(IndexError):
        index_to_tuple(4, 2, 2)
    with pytest.raises(IndexError):
        tuple_to_index((0, 2), 2, 2)


@given(st.integers(1, 4), st.integers(2, 5), st.data())
def test_index_bijection(K, q, data):
    m = data.draw(st.integers(0, q**K - 1))
    assert tuple_to_index(index_to_tuple(m, K, q), K, q) == m


@pytest.mark.parametrize("spec,expected", [
    (make_function("sum", 2, 2), True),
    (diff_spec(), False),
    (make_function("max", 3, 4), True),
])
def test_verify_symmetry(spec, expected):
    assert verify_symmetry(spec) is expected


def test_symmetry_guard():
    with pytest.raises(EnumerationLimitError):
        verify_symmetry(make_function("sum", 7, 8))


def test_classes_small():
    classes = enumerate_multiset_classes(make_function("sum", 2, 2))
    assert sorted(c.counts for c in classes) == [(0, 2), (1, 1), (2, 0)]
    assert [c.value for c in classes] == [0, 1, 2]


def test_classes_k4_q8():
    assert len(enumerate_multiset_classes(make_function("product", 4, 8))) == 330


def test_classes_reject_asymmetric():
    with pytest.raises(NonSymmetricFunction):
        enumerate_multiset_classes(diff_spec())


@given(st.integers(2, 4), st.integers(2, 5))
def test_class_count_identity(K, q):
    classes = enumerate_multiset_classes(make_function("sum", K, q))
    assert len(classes) == math.comb(K + q - 1, q - 1)
    assert all(sum(c.counts) == K for c in classes)


def test_float_levels_are_symmetric():
    # float sums of a non-integer grid depend on order; classes must still be well defined
    spec = make_function("sum", 4, 16, level_values=np.linspace(0, 7, 16))
    assert len(enumerate_multiset_classes(spec)) == math.comb(19, 15)


def test_selection_matrix_examples(bpsk):
    A = build_selection_matrix(2, 2)
    assert A.rows.shape == (4, 4)
    # tuple (0, 1): node 1 picks level 0, node 2 picks level 1
    assert A.rows[tuple_to_index((0, 1), 2, 2)].tolist() == [1, 0, 0, 1]
    np.testing.assert_array_equal(A.apply(bpsk), [-2, 0, 0, 2])
    assert build_selection_matrix(3, 4).rows.shape == (64, 12)


@pytest.mark.parametrize("K,q", [(2, 2), (2, 4), (3, 3), (3, 4), (4, 3)])
def test_reduction_matches_full_selection(K, q):
    # every tuple's row of A must land on its class point, for random x
    rng = np.random.default_rng(K * 10 + q)
    A = build_selection_matrix(K, q)
    classes = enumerate_multiset_classes(make_function("sum", K, q))
    by_counts = {c.counts: c for c in classes}
    for _ in range(100 if K * q <= 12 else 20):
        x = rng.standard_normal(q) + 1j * rng.standard_normal(q)
        s = A.apply(x)
        for m in range(q**K):
            t = index_to_tuple(m, K, q)
            cls = by_counts[tuple(np.bincount(t, minlength=q).tolist())]
            assert abs(s[m] - cls.point(x)) < 1e-12


def test_range_sets():
    assert range_set(make_function("sum", 2, 2)).values == (0, 1, 2)
    rs = range_set(make_function("product", 2, 4))
    oracle = sorted({a * b for a, b in itertools.product(range(4), repeat=2)})
    assert list(rs.values) == oracle == [0, 1, 2, 3, 4, 6, 9]
    assert rs.L == 7
    const = FunctionSpec(3, 3, lambda v: 5.0, name="const")
    assert range_set(const).values == (5.0,) and range_set(const).L == 1


def test_value_table(tmp_path):
    p = tmp_path / "f.json"
    vals = [float(sum(index_to_tuple(m, 2, 3)) ** 2) for m in range(9)]
    p.write_text(f'{{"K": 2, "q": 3, "values": {vals}}}')
    spec = load_value_table(p)
    assert spec((1, 2)) == 9.0
    assert len(enumerate_multiset_classes(spec)) == 6
