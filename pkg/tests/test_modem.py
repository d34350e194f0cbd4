import itertools
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from channelcomp.design import design_modulation
from channelcomp.functions import FunctionSpec, enumerate_multiset_classes, make_function
from channelcomp.modem import (
    DecoderTable,
    Encoder,
    Quantizer,
    build_decoder_table,
    decode,
    decode_many,
    dequantize,
    encode,
    quantize,
)


@pytest.mark.parametrize("v,q,level", [(3, 8, 3), (7, 4, 3), (2.5, 4, 1), (-1, 4, 0), (9, 4, 3)])
def test_quantize(v, q, level):
    assert quantize(v, Quantizer(0, 7, q)) == level


def test_dequantize():
    Q = Quantizer(0, 7, 4)
    assert dequantize(0, Q) == 0
    assert dequantize(3, Q) == 7
    assert dequantize(1, Q) == pytest.approx(7 / 3)
    with pytest.raises(IndexError):
        dequantize(4, Q)


@given(st.floats(0, 7), st.integers(2, 32))
def test_quantizer_round_trip(v, q):
    Q = Quantizer(0, 7, q)
    assert abs(dequantize(quantize(v, Q), Q) - v) <= 7 / (2 * (q - 1)) + 1e-12


def test_encode(bpsk):
    E = Encoder(2.5 * bpsk)
    assert encode(1, E) == 2.5
    assert encode(0, E) == -2.5
    x = np.array([0.3 + 1j, -2, 5j])
    assert encode(2, Encoder(x)) == 5j
    with pytest.raises(IndexError):
        encode(3, Encoder(x))


def test_bpsk_table(bpsk):
    t = build_decoder_table(bpsk, enumerate_multiset_classes(make_function("sum", 2, 2)))
    assert sorted(t.points.real.tolist()) == [-2, 0, 2]
    assert sorted(t.values.tolist()) == [0, 1, 2]
    assert decode(-2 + 0j, t).value == 0
    assert decode(1.9 + 0.05j, t).value == 2


def test_pam_product_merge():
    x = np.arange(4, dtype=complex)
    t = build_decoder_table(x, enumerate_multiset_classes(make_function("product", 2, 4)))
    k = int(np.argmin(np.abs(t.points - 2)))
    assert t.values[k] == 0.5
    assert k in t.merged_mixed


def test_constant_merge():
    classes = enumerate_multiset_classes(FunctionSpec(2, 3, lambda v: 5.0, name="const"))
    t = build_decoder_table(np.zeros(3, complex), classes)
    assert len(t) == 1 and t.values.tolist() == [5.0]


def test_tie_goes_to_lowest_index(bpsk):
    t = build_decoder_table(bpsk, enumerate_multiset_classes(make_function("sum", 2, 2)))
    lo, hi = sorted(range(3), key=lambda k: t.points[k].real)[:2]
    mid = 0.5 * (t.points[lo] + t.points[hi])
    assert decode(mid, t).point_index == min(lo, hi)
    # explicit table with the higher-index point listed first
    t2 = DecoderTable(np.array([1.0, -1.0], complex), np.array([10.0, 20.0]), 1e-6)
    assert decode(0j, t2).point_index == 0
    assert decode_many([0j, 0j], t2).tolist() == [10.0, 10.0]


@given(st.floats(-50, 50), st.floats(-50, 50))
def test_decoder_total(re, im):
    classes = enumerate_multiset_classes(make_function("max", 2, 3))
    t = build_decoder_table(np.array([0, 1, 1j]), classes)
    assert decode(complex(re, im), t).value in set(t.values.tolist())


@pytest.mark.parametrize("name,K,q", [("sum", 4, 8), ("product", 3, 6), ("max", 4, 5), ("quadratic", 2, 8)])
def test_noiseless_exactness(name, K, q):
    spec = make_function(name, K, q)
    classes = enumerate_multiset_classes(spec)
    d = design_modulation(classes)
    assert d.exact_feasible
    t = build_decoder_table(d.x, classes)
    E = Encoder(d.x)
    tuples = np.array(list(itertools.product(range(q), repeat=K)))
    y = E(tuples).sum(axis=1)
    truth = np.array([spec(tt) for tt in tuples])
    np.testing.assert_array_equal(decode_many(y, t), truth)


def test_table_idempotent_and_roundtrip(tmp_path):
    classes = enumerate_multiset_classes(make_function("product", 2, 4))
    x = np.arange(4, dtype=complex)
    a, b = build_decoder_table(x, classes), build_decoder_table(x, classes)
    np.testing.assert_array_equal(a.points, b.points)
    np.testing.assert_array_equal(a.values, b.values)
    a.save(tmp_path / "t.json")
    c = DecoderTable.from_dict(json.loads((tmp_path / "t.json").read_text()))
    np.testing.assert_array_equal(c.points, a.points)
