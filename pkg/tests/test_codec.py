import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from deep_positron import codec, oracle
from deep_positron.codec import (
    NAR, Code, DecodedPosit, FloatClass, FormatSpec, Kind, PositClass,
    code_to_exact, posit_decode, posit_encode, round_to_format,
)
from deep_positron.errors import InvalidFormat, NaRInput, NotRepresentable, ReservedInput, UnknownFormatTag

from conftest import GRID, fixed_specs, float_specs, posit_specs

P80 = FormatSpec.posit(8, 0)
F43 = FormatSpec.floating(4, 3)
X84 = FormatSpec.fixed(8, 4)


def p80(bits: str) -> Code:
    return Code(int(bits, 2), P80)


# -- format descriptions ---------------------------------------------------


@pytest.mark.parametrize("tag, spec", [
    ("posit8es0", FormatSpec.posit(8, 0)),
    ("posit16es4", FormatSpec.posit(16, 4)),
    ("float8e4", FormatSpec.floating(4, 3)),
    ("float32e8", FormatSpec.floating(8, 23)),
    ("fixed8q4", FormatSpec.fixed(8, 4)),
    ("fixed2q0", FormatSpec.fixed(2, 0)),
])
def test_tags_roundtrip(tag, spec):
    assert FormatSpec.parse(tag) == spec
    assert spec.tag == tag


@pytest.mark.parametrize("tag", ["posit8x1", "posit", "float8", "fixedq4", "int8", ""])
def test_bad_tags(tag):
    with pytest.raises(UnknownFormatTag):
        FormatSpec.parse(tag)


@pytest.mark.parametrize("make", [
    lambda: FormatSpec.posit(2, 0),
    lambda: FormatSpec.posit(17, 0),
    lambda: FormatSpec.posit(5, 3),
    lambda: FormatSpec.posit(8, 5),
    lambda: FormatSpec.floating(1, 3),
    lambda: FormatSpec.floating(9, 3),
    lambda: FormatSpec.floating(4, 0),
    lambda: FormatSpec.floating(8, 24),
    lambda: FormatSpec.fixed(1, 0),
    lambda: FormatSpec.fixed(33, 0),
    lambda: FormatSpec.fixed(8, 8),
    lambda: FormatSpec.fixed(8, -1),
    lambda: FormatSpec.parse("float5e4"),
])
def test_out_of_range_formats(make):
    with pytest.raises(InvalidFormat):
        make()


def test_code_must_fit():
    with pytest.raises(ValueError):
        Code(256, P80)
    with pytest.raises(ValueError):
        Code(-1, P80)


# -- posit decode / encode -------------------------------------------------


def test_decode_examples():
    assert posit_decode(p80("00000000")).cls is PositClass.ZERO
    assert posit_decode(p80("10000000")).cls is PositClass.NAR
    one = posit_decode(p80("01000000"))
    assert (one.cls, one.sign, one.regime, one.exponent) == (PositClass.NORMAL, 0, 0, 0)
    assert code_to_exact(p80("01000000")) == 1
    two = posit_decode(p80("01100000"))
    assert two.regime == 1
    assert code_to_exact(p80("01100000")) == 2


def test_encode_examples():
    assert posit_encode(DecodedPosit(PositClass.NORMAL, 0, 0, 0, 1 << P80.posit_frac_bits), P80) == p80("01000000")
    assert posit_encode(DecodedPosit(PositClass.ZERO), P80) == p80("00000000")
    assert posit_encode(DecodedPosit(PositClass.NORMAL, 1, 0, 0, 1 << P80.posit_frac_bits), P80) == p80("11000000")
    # independent check: the only code of value -1 in the exhaustive table
    minus_one = [b for b in range(256) if oracle.value(Code(b, P80)) == -1]
    assert minus_one == [0b11000000]


def test_encode_rejects_unrepresentable():
    with pytest.raises(NotRepresentable):
        posit_encode(DecodedPosit(PositClass.NORMAL, 0, 7, 0, 1 << P80.posit_frac_bits), P80)


def test_decode_rejects_other_kinds():
    with pytest.raises(TypeError):
        posit_decode(Code(0, X84))


@pytest.mark.parametrize("spec", posit_specs(range(3, 11)), ids=str)
def test_posit_roundtrip_and_value_agree_with_string_decoder(spec):
    n = spec.n
    for bits in range(1 << n):
        c = Code(bits, spec)
        d = posit_decode(c)
        assert posit_encode(d, spec) == c
        v = code_to_exact(c)
        ref = oracle.value(c)
        assert (v is NAR) if ref is None else v == ref
        if d.cls is PositClass.NORMAL:
            assert -(n - 1) <= d.regime <= n - 2
            assert 0 <= d.exponent < (1 << spec.es)


@pytest.mark.parametrize("spec", posit_specs(range(3, 11)), ids=str)
def test_posit_negation_symmetry(spec):
    n = spec.n
    for bits in range(1, 1 << n):
        if bits == 1 << (n - 1):
            continue
        neg = Code((-bits) % (1 << n), spec)
        assert code_to_exact(neg) == -code_to_exact(Code(bits, spec))


# -- exact values ----------------------------------------------------------


def test_value_examples():
    assert code_to_exact(p80("01111111")) == 64
    assert code_to_exact(Code(0b0_0000_001, F43)) == Fraction(1, 2 ** 9)
    assert code_to_exact(Code(0b00011000, X84)) == Fraction(3, 2)
    assert code_to_exact(p80("10000000")) is NAR
    with pytest.raises(NaRInput):
        codec.exact_value(p80("10000000"))


def test_float_classes():
    assert codec.float_decode(Code(0, F43)).cls is FloatClass.ZERO
    sub = codec.float_decode(Code(0b0_0000_101, F43))
    assert (sub.cls, sub.significand, sub.effective_exp()) == (FloatClass.SUBNORMAL, 0b101, 1)
    norm = codec.float_decode(Code(0b0_0111_000, F43))
    assert (norm.cls, norm.significand) == (FloatClass.NORMAL, 0b1000)
    with pytest.raises(ReservedInput):
        codec.float_decode(Code(0b0_1111_000, F43))


@pytest.mark.parametrize("spec", [s for s in GRID if s.kind is not Kind.POSIT], ids=str)
def test_values_agree_with_string_decoder(spec):
    for bits, v in enumerate(codec.value_table(spec)):
        assert v == oracle.value(Code(bits, spec))


# -- extrema and dynamic range ----------------------------------------------


def test_extrema_examples():
    assert codec.format_extrema(P80) == (64, Fraction(1, 64))
    assert codec.format_extrema(F43) == (240, Fraction(1, 2 ** 9))
    assert codec.format_extrema(X84) == (Fraction(127, 16), Fraction(1, 16))


@pytest.mark.parametrize("spec", GRID, ids=str)
def test_extrema_match_table(spec):
    positives = [v for v in codec.value_table(spec) if v is not None and v > 0]
    assert codec.format_extrema(spec) == (max(positives), min(positives))


@pytest.mark.parametrize("spec, expected", [
    (P80, math.log10(64 * 64)),
    (F43, math.log10(240 * 2 ** 9)),
    (X84, math.log10(127)),
])
def test_dynamic_range_examples(spec, expected):
    assert codec.dynamic_range(spec) == pytest.approx(expected, abs=1e-12)


def test_dynamic_range_rounded_values():
    assert round(codec.dynamic_range(P80), 3) == 3.612
    assert round(codec.dynamic_range(X84), 3) == 2.104
    assert abs(codec.dynamic_range(F43) - 5.090) < 1e-3


# -- rounding ----------------------------------------------------------------


def test_round_examples():
    assert round_to_format(1, P80) == p80("01000000")
    assert round_to_format(100, P80) == p80("01111111")
    assert round_to_format(-100, P80) == Code((-0b01111111) % 256, P80)
    assert round_to_format(Fraction(1, 10 ** 6), P80) == p80("00000001")
    assert round_to_format(-Fraction(1, 10 ** 6), P80) == p80("11111111")
    assert round_to_format(Fraction(1, 10 ** 6), F43) == Code(0, F43)
    assert round_to_format(-Fraction(1, 10 ** 6), F43) == Code(0, F43)
    assert round_to_format(1000, F43) == Code(0b0_1110_111, F43)
    assert round_to_format(Fraction(-3, 32), X84) == Code((-2) % 256, X84)
    assert round_to_format(100, X84) == Code(0x7F, X84)
    assert round_to_format(-100, X84) == Code(0x80, X84)


def test_round_midpoint_ties_to_even():
    # 1 and 1 + 1/32 are neighbours in posit<8,0>; the midpoint picks the even pattern
    mid = Fraction(1) + Fraction(1, 64)
    assert round_to_format(mid, P80) == p80("01000000")
    mid = Fraction(1) + Fraction(3, 64)
    assert round_to_format(mid, P80) == p80("01000010")


@pytest.mark.parametrize("spec", GRID, ids=str)
def test_round_idempotent(spec):
    for c in codec.finite_codes(spec):
        assert round_to_format(code_to_exact(c), spec) == c


def test_negative_zero_canonicalised():
    neg_zero = Code(1 << (F43.n - 1), F43)
    assert code_to_exact(neg_zero) == 0
    assert round_to_format(code_to_exact(neg_zero), F43) == Code(0, F43)


def _nearest_ok(v: Fraction, spec: FormatSpec) -> None:
    got = round_to_format(v, spec)
    assert got == oracle.oracle_round(v, spec).rounded
    if spec.kind is Kind.FIXED:
        return
    err = abs(code_to_exact(got) - v)
    values = [x for x in codec.value_table(spec) if x is not None]
    best = min(abs(x - v) for x in values)
    if spec.kind is Kind.POSIT and v != 0 and code_to_exact(got) != 0:
        # posits may skip zero in favour of +-min
        best = min(abs(x - v) for x in values if x != 0)
    assert err == best


@pytest.mark.parametrize("spec", posit_specs() + float_specs() + fixed_specs(), ids=str)
def test_round_at_every_midpoint(spec):
    values = sorted({v for v in codec.value_table(spec) if v is not None})
    eps = Fraction(1, 10 ** 9)
    for a, b in zip(values, values[1:]):
        mid = (a + b) / 2
        for v in (mid, mid - eps, mid + eps):
            assert round_to_format(v, spec) == oracle.oracle_round(v, spec).rounded


@settings(max_examples=300, deadline=None)
@given(
    spec=st.sampled_from(posit_specs() + float_specs() + fixed_specs(range(5, 8))),
    num=st.integers(-10 ** 7, 10 ** 7),
    den=st.integers(1, 10 ** 6),
)
def test_round_is_nearest(spec, num, den):
    _nearest_ok(Fraction(num, den), spec)


@settings(max_examples=200, deadline=None)
@given(x=st.floats(allow_nan=False, allow_infinity=False, width=64))
def test_round_accepts_floats(x):
    assert round_to_format(x, P80) == round_to_format(Fraction(x), P80)


def test_round_rejects_non_finite():
    with pytest.raises(ValueError):
        round_to_format(float("nan"), P80)
    with pytest.raises(ValueError):
        round_to_format(float("inf"), P80)


def test_wide_posit_rounding_matches_bracketing_oracle(rng):
    spec = FormatSpec.posit(16, 2)
    for _ in range(400):
        v = Fraction(rng.randint(-2 ** 40, 2 ** 40), 2 ** rng.randint(0, 60))
        assert round_to_format(v, spec) == oracle.oracle_round(v, spec).rounded


def test_named_dynamic_range_pair():
    assert codec.dynamic_range(FormatSpec.posit(7, 0)) > codec.dynamic_range(FormatSpec.floating(3, 3))


@pytest.mark.parametrize("n", [5, 6, 7])
def test_best_posit_outranges_every_float(n):
    best_posit = max(codec.dynamic_range(FormatSpec.posit(n, es)) for es in range(3) if es <= n - 3)
    floats = [FormatSpec.floating(we, n - 1 - we) for we in (3, 4, 5) if n - 1 - we >= 1]
    assert all(best_posit > codec.dynamic_range(f) for f in floats)
