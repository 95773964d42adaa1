"""Bit-exact codecs for the three low-precision formats.

Every value is handled as an exact ``fractions.Fraction``; nothing in this
module touches binary floating point except :func:`dynamic_range`, which
reports a double by contract.

Formats
-------
posit<n, es>
    sign, run-length regime, ``es`` exponent bits, fraction.  Negative
    values are stored as the two's complement of the positive pattern.
float<we, wf>
    IEEE-style minifloat with subnormals.  The all-ones exponent field is
    reserved (never produced, rejected on input), so there is no Inf/NaN.
fixed<n, q>
    two's-complement integer with ``q`` fraction bits.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Union

from .errors import (
    InvalidFormat,
    NaRInput,
    NotRepresentable,
    ReservedInput,
    UnknownFormatTag,
)

Number = Union[Fraction, int, float, str]


class Kind(enum.Enum):
    POSIT = "posit"
    FLOAT = "float"
    FIXED = "fixed"


@dataclass(frozen=True)
class FormatSpec:
    """Description of one numeric format.

    Use the constructors :meth:`posit`, :meth:`floating`, :meth:`fixed` or
    :meth:`parse` rather than filling the fields by hand.
    """

    kind: Kind
    n: int
    es: int = 0
    we: int = 0
    wf: int = 0
    q: int = 0

    def __post_init__(self) -> None:
        n = self.n
        if self.kind is Kind.POSIT:
            if not (3 <= n <= 16 and 0 <= self.es <= 4 and self.es <= n - 3):
                raise InvalidFormat(f"posit<{n},{self.es}> out of range")
        elif self.kind is Kind.FLOAT:
            if not (2 <= self.we <= 8 and self.wf >= 1 and n == 1 + self.we + self.wf <= 32):
                raise InvalidFormat(f"float<we={self.we},wf={self.wf}> (n={n}) out of range")
        elif self.kind is Kind.FIXED:
            if not (2 <= n <= 32 and 0 <= self.q <= n - 1):
                raise InvalidFormat(f"fixed<{n},{self.q}> out of range")
        else:  # pragma: no cover
            raise InvalidFormat(f"unknown kind {self.kind!r}")

    @classmethod
    def posit(cls, n: int, es: int) -> FormatSpec:
        return cls(Kind.POSIT, n, es=es)

    @classmethod
    def floating(cls, we: int, wf: int) -> FormatSpec:
        return cls(Kind.FLOAT, 1 + we + wf, we=we, wf=wf)

    @classmethod
    def fixed(cls, n: int, q: int) -> FormatSpec:
        return cls(Kind.FIXED, n, q=q)

    _TAG = re.compile(r"^(posit|float|fixed)(\d+)(es|e|q)(\d+)$")

    @classmethod
    def parse(cls, tag: str) -> FormatSpec:
        """Parse ``posit8es0``, ``float8e4`` or ``fixed8q4``."""
        m = cls._TAG.match(tag.strip().lower())
        if m is None:
            raise UnknownFormatTag(f"unknown format tag {tag!r}")
        kind, n, sep, p = m.group(1), int(m.group(2)), m.group(3), int(m.group(4))
        expected = {"posit": "es", "float": "e", "fixed": "q"}[kind]
        if sep != expected:
            raise UnknownFormatTag(f"unknown format tag {tag!r}")
        try:
            if kind == "posit":
                return cls.posit(n, p)
            if kind == "float":
                return cls.floating(p, n - 1 - p)
            return cls.fixed(n, p)
        except InvalidFormat as exc:
            raise UnknownFormatTag(f"format tag {tag!r}: {exc}") from None

    @property
    def param(self) -> int:
        """The kind-specific parameter: es, we or q."""
        return {Kind.POSIT: self.es, Kind.FLOAT: self.we, Kind.FIXED: self.q}[self.kind]

    @property
    def tag(self) -> str:
        sep = {Kind.POSIT: "es", Kind.FLOAT: "e", Kind.FIXED: "q"}[self.kind]
        return f"{self.kind.value}{self.n}{sep}{self.param}"

    def __str__(self) -> str:
        return self.tag

    # float helpers
    @property
    def float_bias(self) -> int:
        return (1 << (self.we - 1)) - 1

    @property
    def exp_max(self) -> int:
        """Largest exponent field of a finite float (all-ones is reserved)."""
        return (1 << self.we) - 2

    # posit helpers
    @property
    def useed_log2(self) -> int:
        return 1 << self.es

    @property
    def posit_frac_bits(self) -> int:
        """Fraction width when the regime is as short as possible."""
        return self.n - 3 - self.es


@dataclass(frozen=True)
class Code:
    """An n-bit pattern in a given format."""

    bits: int
    spec: FormatSpec

    def __post_init__(self) -> None:
        if not 0 <= self.bits < (1 << self.spec.n):
            raise ValueError(f"{self.bits} does not fit in {self.spec.n} bits")

    def __str__(self) -> str:
        return format(self.bits, f"0{self.spec.n}b")

    def __repr__(self) -> str:
        return f"Code({self}, {self.spec.tag})"


class _NaR:
    """Marker returned for the posit Not-a-Real pattern."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NaR"


NAR = _NaR()


class PositClass(enum.Enum):
    ZERO = "zero"
    NAR = "nar"
    NORMAL = "normal"


@dataclass(frozen=True)
class DecodedPosit:
    """Fields of a posit: value = (-1)^sign * 2^(regime*2^es + exponent) * fraction/2^F.

    ``fraction`` carries the hidden bit; F is ``spec.posit_frac_bits``.
    """

    cls: PositClass
    sign: int = 0
    regime: int = 0
    exponent: int = 0
    fraction: int = 0

    def scale(self, es: int) -> int:
        return (self.regime << es) + self.exponent


class FloatClass(enum.Enum):
    ZERO = "zero"
    SUBNORMAL = "subnormal"
    NORMAL = "normal"


@dataclass(frozen=True)
class DecodedFloat:
    sign: int
    exp: int
    significand: int
    cls: FloatClass

    def effective_exp(self) -> int:
        """Exponent field with the subnormal adjustment (0 behaves like 1)."""
        return max(self.exp, 1)


def _check_kind(code: Code, kind: Kind) -> None:
    if code.spec.kind is not kind:
        raise TypeError(f"expected a {kind.value} code, got {code.spec.tag}")


# ---------------------------------------------------------------------------
# posit


def posit_decode(code: Code) -> DecodedPosit:
    """Extract sign, regime, exponent and fraction of a posit.

    Works on the two's complement of the body, inverts it when the regime
    starts with ones so that a single leading-zero count finds the regime
    length, then shifts the regime out to expose exponent and fraction.
    """
    _check_kind(code, Kind.POSIT)
    n, es = code.spec.n, code.spec.es
    x = code.bits
    if x == 0:
        return DecodedPosit(PositClass.ZERO)
    if x == 1 << (n - 1):
        return DecodedPosit(PositClass.NAR)

    body_mask = (1 << (n - 1)) - 1
    sign = x >> (n - 1)
    twos = (((body_mask * sign) ^ (x & body_mask)) + sign) & body_mask
    rc = (twos >> (n - 2)) & 1
    inv = (body_mask * rc) ^ twos
    zc = (n - 1) - inv.bit_length()

    tail_w = n - 3
    tail_mask = (1 << tail_w) - 1
    tmp = ((twos & tail_mask) << (zc - 1)) & tail_mask
    fw = tail_w - es
    fraction = (1 << fw) | (tmp & ((1 << fw) - 1))
    exponent = tmp >> fw
    regime = zc - 1 if rc else -zc
    return DecodedPosit(PositClass.NORMAL, sign, regime, exponent, fraction)


def _posit_body(regime: int, exponent: int, frac_field: int, frac_len: int, es: int) -> tuple[int, int]:
    """Unbounded regime|exponent|fraction pattern and its length."""
    if regime >= 0:
        reg, rlen = ((1 << (regime + 1)) - 1) << 1, regime + 2
    else:
        reg, rlen = 1, 1 - regime
    body = (((reg << es) | exponent) << frac_len) | frac_field
    return body, rlen + es + frac_len


def _negate(pattern: int, n: int) -> int:
    return (-pattern) & ((1 << n) - 1)


def posit_encode(d: DecodedPosit, spec: FormatSpec) -> Code:
    """Pack decoded fields; raises NotRepresentable if any set bit would be cut."""
    if spec.kind is not Kind.POSIT:
        raise TypeError("posit_encode needs a posit spec")
    n, es = spec.n, spec.es
    if d.cls is PositClass.ZERO:
        return Code(0, spec)
    if d.cls is PositClass.NAR:
        return Code(1 << (n - 1), spec)
    fw = spec.posit_frac_bits
    if not -(n - 2) <= d.regime <= n - 2:
        raise NotRepresentable(f"regime {d.regime} outside posit<{n},{es}>")
    if not 0 <= d.exponent < (1 << es):
        raise NotRepresentable(f"exponent {d.exponent} needs more than {es} bits")
    if not (1 << fw) <= d.fraction < (2 << fw):
        raise NotRepresentable(f"fraction {d.fraction:#b} is not a {fw}-bit 1.f significand")
    body, length = _posit_body(d.regime, d.exponent, d.fraction - (1 << fw), fw, es)
    width = n - 1
    if length > width:
        cut = length - width
        if body & ((1 << cut) - 1):
            raise NotRepresentable("fields do not fit next to the regime")
        pattern = body >> cut
    else:
        pattern = body << (width - length)
    return Code(_negate(pattern, n) if d.sign else pattern, spec)


def _posit_pattern_value(pattern: int, spec: FormatSpec) -> Fraction:
    return _posit_value(posit_decode(Code(pattern, spec)), spec)


def _posit_value(d: DecodedPosit, spec: FormatSpec) -> Fraction:
    sf = d.scale(spec.es) - spec.posit_frac_bits
    mag = Fraction(d.fraction) * (Fraction(2) ** sf)
    return -mag if d.sign else mag


def _posit_round(negative: bool, sf: int, sig: int, sig_bits: int, spec: FormatSpec) -> Code:
    """Round the exact magnitude 2^sf * sig / 2^sig_bits to the nearest posit.

    ``sig`` must satisfy 2^sig_bits <= sig < 2^(sig_bits+1).  Ties go to the
    even pattern; the result saturates at maxpos and never becomes zero.
    """
    n, es = spec.n, spec.es
    width = n - 1
    maxpos = (1 << width) - 1
    regime = sf >> es
    if regime > n - 2:
        pattern = maxpos
    elif regime < -(n - 2):
        pattern = 1
    else:
        exponent = sf - (regime << es)
        body, length = _posit_body(regime, exponent, sig - (1 << sig_bits), sig_bits, es)
        if length <= width:
            pattern = body << (width - length)
        else:
            cut = length - width
            lower = body >> cut
            rem = body & ((1 << cut) - 1)
            if rem == 0:
                round_up = False
            elif cut <= sig_bits:
                # only fraction bits are dropped: guard/sticky decide
                guard = (rem >> (cut - 1)) & 1
                sticky = (rem & ((1 << (cut - 1)) - 1)) != 0
                round_up = bool(guard and (sticky or (lower & 1)))
            elif lower == maxpos:
                round_up = False
            else:
                # exponent bits are dropped: neighbours are not evenly spaced
                lo = _posit_pattern_value(lower, spec) if lower else Fraction(0)
                hi = _posit_pattern_value(lower + 1, spec)
                twice = 2 * Fraction(sig, 1 << sig_bits) * Fraction(2) ** sf
                mid = lo + hi
                round_up = twice > mid or (twice == mid and bool(lower & 1))
            pattern = min(lower + round_up, maxpos)
            pattern = max(pattern, 1)
    return Code(_negate(pattern, n) if negative else pattern, spec)


# ---------------------------------------------------------------------------
# float


def float_decode(code: Code) -> DecodedFloat:
    _check_kind(code, Kind.FLOAT)
    spec = code.spec
    wf = spec.wf
    sign = code.bits >> (spec.n - 1)
    exp = (code.bits >> wf) & ((1 << spec.we) - 1)
    frac = code.bits & ((1 << wf) - 1)
    if exp == (1 << spec.we) - 1:
        raise ReservedInput(f"{code}: reserved exponent field in {spec.tag}")
    if exp == 0:
        cls = FloatClass.ZERO if frac == 0 else FloatClass.SUBNORMAL
        return DecodedFloat(sign, 0, frac, cls)
    return DecodedFloat(sign, exp, (1 << wf) | frac, FloatClass.NORMAL)


def _float_pack(spec: FormatSpec, sign: int, exp: int, frac: int) -> Code:
    return Code((sign << (spec.n - 1)) | (exp << spec.wf) | frac, spec)


# ---------------------------------------------------------------------------
# fixed


def fixed_int(code: Code) -> int:
    """Two's-complement integer held by a fixed-point code."""
    _check_kind(code, Kind.FIXED)
    n = code.spec.n
    b = code.bits
    return b - (1 << n) if b >> (n - 1) else b


def fixed_from_int(value: int, spec: FormatSpec) -> Code:
    """Encode an integer (in units of 2^-q), clipping to the n-bit range."""
    n = spec.n
    value = max(-(1 << (n - 1)), min((1 << (n - 1)) - 1, value))
    return Code(value & ((1 << n) - 1), spec)


# ---------------------------------------------------------------------------
# values


def code_to_exact(code: Code) -> Fraction | _NaR:
    """Exact value of a code; posit NaR maps to :data:`NAR`."""
    spec = code.spec
    if spec.kind is Kind.POSIT:
        d = posit_decode(code)
        if d.cls is PositClass.NAR:
            return NAR
        if d.cls is PositClass.ZERO:
            return Fraction(0)
        return _posit_value(d, spec)
    if spec.kind is Kind.FLOAT:
        d = float_decode(code)
        mag = Fraction(d.significand) * Fraction(2) ** (d.effective_exp() - spec.float_bias - spec.wf)
        return -mag if d.sign else mag
    return Fraction(fixed_int(code), 1 << spec.q)


def exact_value(code: Code) -> Fraction:
    """Like :func:`code_to_exact` but NaR is an error."""
    v = code_to_exact(code)
    if v is NAR:
        raise NaRInput(f"NaR in {code.spec.tag}")
    return v


def is_negative(code: Code) -> bool:
    """Sign-bit test (two's-complement sign for posit and fixed)."""
    return bool(code.bits >> (code.spec.n - 1))


def zero(spec: FormatSpec) -> Code:
    return Code(0, spec)


def finite_codes(spec: FormatSpec) -> list[Code]:
    """All codes with a real value, excluding NaR, reserved floats and -0."""
    out = []
    for bits in range(1 << spec.n):
        c = Code(bits, spec)
        if spec.kind is Kind.POSIT and bits == 1 << (spec.n - 1):
            continue
        if spec.kind is Kind.FLOAT:
            exp = (bits >> spec.wf) & ((1 << spec.we) - 1)
            if exp == (1 << spec.we) - 1 or bits == 1 << (spec.n - 1):
                continue
        out.append(c)
    return out


@lru_cache(maxsize=None)
def value_table(spec: FormatSpec) -> tuple:
    """Exact value of every bit pattern (``None`` for NaR / reserved)."""
    table = []
    for bits in range(1 << spec.n):
        try:
            v = code_to_exact(Code(bits, spec))
        except ReservedInput:
            v = None
        table.append(None if v is NAR else v)
    return tuple(table)


def format_extrema(spec: FormatSpec) -> tuple[Fraction, Fraction]:
    """(largest, smallest) positive magnitudes; float min is the least subnormal."""
    if spec.kind is Kind.POSIT:
        e = spec.useed_log2 * (spec.n - 2)
        return Fraction(2) ** e, Fraction(2) ** -e
    if spec.kind is Kind.FLOAT:
        bias, wf = spec.float_bias, spec.wf
        mx = Fraction(2) ** (spec.exp_max - bias) * (2 - Fraction(1, 1 << wf))
        mn = Fraction(2) ** (1 - bias) * Fraction(1, 1 << wf)
        return mx, mn
    scale = 1 << spec.q
    return Fraction((1 << (spec.n - 1)) - 1, scale), Fraction(1, scale)


def dynamic_range(spec: FormatSpec) -> float:
    """log10(max / min) of the positive representable magnitudes."""
    mx, mn = format_extrema(spec)
    ratio = mx / mn
    return math.log10(ratio.numerator) - math.log10(ratio.denominator)


# ---------------------------------------------------------------------------
# rounding


def floor_log2(v: Fraction) -> int:
    """Largest e with 2^e <= v, for v > 0."""
    num, den = v.numerator, v.denominator
    e = num.bit_length() - den.bit_length()
    if e >= 0:
        if num < den << e:
            e -= 1
    elif num << -e < den:
        e -= 1
    return e


def _as_fraction(v: Number) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, float) and not math.isfinite(v):
        raise ValueError(f"cannot round non-finite value {v}")
    return Fraction(v)


def _dyadic_with_sticky(mag: Fraction, prec: int) -> tuple[int, int, int]:
    """(sf, sig, sig_bits) with mag ~ 2^sf * sig / 2^sig_bits.

    Exact when ``mag`` has at most ``prec`` significant bits; otherwise a set
    sticky bit is appended, which preserves every comparison against values
    with up to ``prec`` bits.
    """
    sf = floor_log2(mag)
    scaled = mag * Fraction(2) ** (prec - sf)
    sig = scaled.numerator // scaled.denominator
    if sig * scaled.denominator == scaled.numerator:
        return sf, sig, prec
    return sf, (sig << 1) | 1, prec + 1


def round_to_format(v: Number, spec: FormatSpec) -> Code:
    """Nearest code of ``spec`` to the exact value ``v``.

    posit / float: round to nearest, ties to even, saturating at +-max; a
    posit never rounds a nonzero value to zero.  fixed: floor to q fraction
    bits, then clip to the two's-complement range.
    """
    v = _as_fraction(v)
    if spec.kind is Kind.FIXED:
        scaled = v * (1 << spec.q)
        return fixed_from_int(math.floor(scaled), spec)
    if v == 0:
        return Code(0, spec)
    negative = v < 0
    mag = -v if negative else v
    if spec.kind is Kind.POSIT:
        prec = spec.n + (1 << spec.es) + 4
        sf, sig, bits = _dyadic_with_sticky(mag, prec)
        return _posit_round(negative, sf, sig, bits, spec)
    return _float_round(negative, mag, spec)


def _float_round(negative: bool, mag: Fraction, spec: FormatSpec) -> Code:
    bias, wf = spec.float_bias, spec.wf
    sign = int(negative)
    mx, _ = format_extrema(spec)
    if mag >= mx:
        return _float_pack(spec, sign, spec.exp_max, (1 << wf) - 1)
    emin = 1 - bias
    e = max(floor_log2(mag), emin)
    m = mag * Fraction(2) ** (wf - e)
    sig = m.numerator // m.denominator
    rem = m - sig
    if rem > Fraction(1, 2) or (rem == Fraction(1, 2) and sig & 1):
        sig += 1
    if sig == 2 << wf:
        sig >>= 1
        e += 1
    if sig == 0:
        return Code(0, spec)
    if sig < 1 << wf:
        return _float_pack(spec, sign, 0, sig)
    return _float_pack(spec, sign, e + bias, sig - (1 << wf))
