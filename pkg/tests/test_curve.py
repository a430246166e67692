"""Group arithmetic, checked against a naively written affine oracle."""

import random

import pytest
from hypothesis import given, settings, strategies as st

from mokka import curve, wire


def naive_mult(k, point):
    """Independent double-and-add in plain affine coordinates."""
    k %= curve.N
    result = None
    addend = point
    while k:
        if k & 1:
            result = curve.point_add(result, addend)
        addend = curve.point_add(addend, addend)
        k >>= 1
    return result


@pytest.mark.parametrize("k", [1, 2, 3, 7, 0xDEADBEEF, curve.N - 1])
def test_scalar_mult_matches_naive(k):
    expected = naive_mult(k, curve.G)
    assert curve.scalar_mult(k, curve.G) == expected
    assert curve.scalar_mult_base(k) == expected


def test_zero_and_order_multiples_are_infinity():
    assert curve.scalar_mult(0, curve.G) is None
    assert curve.scalar_mult(curve.N, curve.G) is None
    assert curve.scalar_mult_base(0) is None


def test_add_inverse_is_infinity():
    assert curve.point_add(curve.G, curve.point_neg(curve.G)) is None


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=1, max_value=curve.N - 1))
def test_fast_paths_agree_with_each_other(k):
    assert curve.scalar_mult_base(k) == curve.scalar_mult(k, curve.G)


@settings(max_examples=30, deadline=None)
@given(
    st.integers(min_value=1, max_value=curve.N - 1),
    st.integers(min_value=1, max_value=curve.N - 1),
)
def test_distributivity(a, b):
    lhs = curve.scalar_mult_base((a + b) % curve.N)
    rhs = curve.point_add(curve.scalar_mult_base(a), curve.scalar_mult_base(b))
    assert lhs == rhs


def test_results_are_on_curve():
    rng = random.Random(7)
    for _ in range(20):
        point = curve.scalar_mult_base(rng.randrange(1, curve.N))
        assert curve.is_on_curve(point)


def test_point_codec_round_trip():
    rng = random.Random(8)
    for _ in range(20):
        point = curve.scalar_mult_base(rng.randrange(1, curve.N))
        data = wire.encode_point(point)
        assert len(data) == 33
        assert wire.decode_point(data) == point


def test_decode_point_rejects_garbage():
    with pytest.raises(wire.MalformedError):
        wire.decode_point(b"\x04" + b"\x00" * 32)
    with pytest.raises(wire.MalformedError):
        wire.decode_point(b"\x02" + b"\x00" * 31)
    # x = 5 has no square root times... check a known non-residue x
    with pytest.raises(wire.MalformedError):
        wire.decode_point(b"\x02" + (5).to_bytes(32, "big"))
