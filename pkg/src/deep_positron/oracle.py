"""Slow, independent reference for dot products and rounding.

Nothing here calls into the codec's decoders or rounding routines: code
values are recomputed from the bit string, and rounding is done by searching
the sorted list of representable values (exhaustively for n <= 10, by
bracketing for wider formats).  The codec and the EMACs are tested against
this module, so the two must stay separate.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence

from .codec import Code, FormatSpec, Kind
from .errors import LengthMismatch, NaRInput, ReservedInput

ENUMERATION_LIMIT = 10


def _posit_string_value(bits: int, n: int, es: int) -> Optional[Fraction]:
    s = format(bits, f"0{n}b")
    if s == "0" * n:
        return Fraction(0)
    if s == "1" + "0" * (n - 1):
        return None
    negative = s[0] == "1"
    if negative:
        s = format((1 << n) - bits, f"0{n}b")
    body = s[1:]
    first = body[0]
    run = len(body) - len(body.lstrip(first))
    k = run - 1 if first == "1" else -run
    rest = body[run + 1:]
    exp_str = (rest[:es]).ljust(es, "0")
    e = int(exp_str, 2) if es else 0
    frac_str = rest[es:]
    f = Fraction(int(frac_str, 2), 2 ** len(frac_str)) if frac_str else Fraction(0)
    useed = Fraction(2) ** (2 ** es)
    v = useed ** k * Fraction(2) ** e * (1 + f)
    return -v if negative else v


def _float_string_value(bits: int, we: int, wf: int) -> Optional[Fraction]:
    s = format(bits, f"0{1 + we + wf}b")
    exp_str, frac_str = s[1:1 + we], s[1 + we:]
    if exp_str == "1" * we:
        return None
    bias = 2 ** (we - 1) - 1
    f = Fraction(int(frac_str, 2), 2 ** wf)
    if exp_str == "0" * we:
        v = Fraction(2) ** (1 - bias) * f
    else:
        v = Fraction(2) ** (int(exp_str, 2) - bias) * (1 + f)
    return -v if s[0] == "1" else v


def _fixed_string_value(bits: int, n: int, q: int) -> Fraction:
    s = format(bits, f"0{n}b")
    v = int(s, 2) - (2 ** n if s[0] == "1" else 0)
    return Fraction(v, 2 ** q)


def value(code: Code) -> Optional[Fraction]:
    """Exact value recomputed from the bit string; None for NaR/reserved."""
    spec = code.spec
    if spec.kind is Kind.POSIT:
        return _posit_string_value(code.bits, spec.n, spec.es)
    if spec.kind is Kind.FLOAT:
        return _float_string_value(code.bits, spec.we, spec.wf)
    return _fixed_string_value(code.bits, spec.n, spec.q)


def _checked_value(code: Code) -> Fraction:
    v = value(code)
    if v is None:
        if code.spec.kind is Kind.POSIT:
            raise NaRInput(f"NaR operand {code}")
        raise ReservedInput(f"reserved float operand {code}")
    return v


def oracle_dot(weights: Sequence[Code], activations: Sequence[Code], bias: Code) -> Fraction:
    """sum(w_i * a_i) + bias, exactly."""
    if len(weights) != len(activations):
        raise LengthMismatch(f"{len(weights)} weights vs {len(activations)} activations")
    total = _checked_value(bias)
    for w, a in zip(weights, activations):
        total += _checked_value(w) * _checked_value(a)
    return total


@dataclass(frozen=True)
class OracleResult:
    exact_sum: Fraction
    rounded: Code
    neighbor_below: Optional[Code]
    neighbor_above: Optional[Code]


@lru_cache(maxsize=None)
def _sorted_table(spec: FormatSpec) -> tuple[list[Fraction], list[int]]:
    pairs = {}
    for bits in range(2 ** spec.n):
        v = value(Code(bits, spec))
        if v is None:
            continue
        # float -0 duplicates +0; keep the all-zero pattern
        if v in pairs and pairs[v] < bits:
            continue
        pairs[v] = bits
    values = sorted(pairs)
    return values, [pairs[v] for v in values]


def _neighbors_enumerated(v: Fraction, spec: FormatSpec) -> tuple[Optional[int], Optional[int]]:
    values, codes = _sorted_table(spec)
    i = bisect.bisect_left(values, v)
    if i < len(values) and values[i] == v:
        return codes[i], codes[i]
    below = codes[i - 1] if i > 0 else None
    above = codes[i] if i < len(values) else None
    return below, above


def _neighbors_bracketed(v: Fraction, spec: FormatSpec) -> tuple[Optional[int], Optional[int]]:
    """Neighbour search without a full table, for wide formats."""
    n = spec.n
    if spec.kind is Kind.FIXED:
        lo_int = -(2 ** (n - 1))
        hi_int = 2 ** (n - 1) - 1
        scaled = v * 2 ** spec.q
        fl = scaled.numerator // scaled.denominator
        enc = lambda i: i % (2 ** n)  # noqa: E731
        if fl < lo_int:
            return None, enc(lo_int)
        if fl >= hi_int:
            return enc(hi_int), (enc(hi_int) if fl == hi_int and scaled == fl else None)
        if scaled == fl:
            return enc(fl), enc(fl)
        return enc(fl), enc(fl + 1)

    # posit and float codes are monotone in value when read as signed
    # (posit) or sign-magnitude (float) integers; bisect on that order
    if spec.kind is Kind.POSIT:
        ordered = [i % (2 ** n) for i in range(-(2 ** (n - 1)) + 1, 2 ** (n - 1))]
    else:
        mag = [b for b in range(2 ** (n - 1)) if (b >> spec.wf) != 2 ** spec.we - 1]
        ordered = [b | (1 << (n - 1)) for b in reversed(mag[1:])] + mag
    lo, hi = 0, len(ordered) - 1
    vals = lambda i: value(Code(ordered[i], spec))  # noqa: E731
    if v < vals(lo):
        return None, ordered[lo]
    if v > vals(hi):
        return ordered[hi], None
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if vals(mid) <= v:
            lo = mid
        else:
            hi = mid
    if vals(lo) == v:
        return ordered[lo], ordered[lo]
    if vals(hi) == v:
        return ordered[hi], ordered[hi]
    return ordered[lo], ordered[hi]


def oracle_round(v: Fraction, spec: FormatSpec) -> OracleResult:
    """Round ``v`` by direct neighbour search."""
    v = Fraction(v)
    if spec.n <= ENUMERATION_LIMIT:
        below, above = _neighbors_enumerated(v, spec)
    else:
        below, above = _neighbors_bracketed(v, spec)
    mk = lambda b: None if b is None else Code(b, spec)  # noqa: E731

    if below is not None and below == above:
        chosen = below
    elif spec.kind is Kind.FIXED:
        # truncation toward -inf, clipped at the most negative code
        chosen = below if below is not None else above
    elif above is None:
        chosen = below  # beyond +max: saturate
    elif below is None:
        chosen = above  # beyond -max: saturate
    else:
        vb = value(Code(below, spec))
        va = value(Code(above, spec))
        if spec.kind is Kind.POSIT and (vb == 0 or va == 0):
            # nonzero values never round to zero
            chosen = above if vb == 0 else below
        elif v - vb < va - v:
            chosen = below
        elif va - v < v - vb:
            chosen = above
        else:
            chosen = below if below % 2 == 0 else above
    return OracleResult(v, Code(chosen, spec), mk(below), mk(above))
