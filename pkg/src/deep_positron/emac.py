"""Exact multiply-and-accumulate units.

Each unit converts its products to fixed point, sums them in a wide
two's-complement register, and rounds once at the very end.  The register
width comes from the closed-form width formulas and is enforced on every
addition, so a run that would need more bits fails loudly instead of
wrapping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from . import codec
from .codec import Code, FormatSpec, Kind, PositClass
from .errors import FormatMismatch, LengthMismatch, NaRInput, QuireOverflow


def ceil_log2(x: Fraction | int) -> int:
    """Smallest integer c with 2^c >= x, for x > 0."""
    x = Fraction(x)
    e = codec.floor_log2(x)
    return e if x == Fraction(2) ** e else e + 1


def kulisch_width(spec: FormatSpec, k: int) -> int:
    """Accumulator bits for k float or fixed products."""
    if spec.kind is Kind.POSIT:
        raise ValueError("posit accumulators use quire_width")
    if k < 1:
        raise ValueError("k must be >= 1")
    mx, mn = codec.format_extrema(spec)
    return ceil_log2(k) + 2 * ceil_log2(mx / mn) + 2


def quire_width(n: int, es: int, k: int) -> int:
    """Quire bits for k posit<n, es> products."""
    if n < 3:
        raise ValueError("quire width needs n >= 3")
    if k < 1:
        raise ValueError("k must be >= 1")
    return (1 << (es + 2)) * (n - 2) + 2 + ceil_log2(k)


def posit_scale_bias(spec: FormatSpec) -> int:
    """Offset that makes the smallest product scale factor zero."""
    return (1 << (spec.es + 1)) * (spec.n - 2)


@dataclass
class Quire:
    """Signed fixed-point register: real value = value * 2^-scale."""

    width: int
    scale: int
    value: int = 0
    peak_bits: int = field(default=0, repr=False)

    def add(self, x: int) -> None:
        v = self.value + x
        limit = 1 << (self.width - 1)
        if not -limit <= v < limit:
            raise QuireOverflow(f"{v.bit_length() + 1}-bit sum in a {self.width}-bit quire")
        self.value = v
        # two's-complement bits needed for the current contents
        self.peak_bits = max(self.peak_bits, v.bit_length() + 1)

    def exact(self) -> Fraction:
        return Fraction(self.value, 1 << self.scale)


@dataclass(frozen=True)
class MacConfig:
    spec: FormatSpec
    k: int
    bias_code: Optional[Code] = None

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.bias_code is not None and self.bias_code.spec != self.spec:
            raise FormatMismatch(f"bias is {self.bias_code.spec.tag}, unit is {self.spec.tag}")

    @property
    def bias(self) -> Code:
        return self.bias_code if self.bias_code is not None else codec.zero(self.spec)


@dataclass
class MacTrace:
    """Optional instrumentation filled in by an EMAC call."""

    width: int = 0
    peak_bits: int = 0
    exact_sum: Fraction = Fraction(0)


def _check(weights: Sequence[Code], activations: Sequence[Code], cfg: MacConfig, kind: Kind) -> None:
    if cfg.spec.kind is not kind:
        raise FormatMismatch(f"{kind.value} EMAC given a {cfg.spec.tag} config")
    if len(weights) != len(activations):
        raise LengthMismatch(f"{len(weights)} weights vs {len(activations)} activations")
    if len(weights) > cfg.k:
        raise LengthMismatch(f"{len(weights)} products exceed k={cfg.k}")
    for c in (*weights, *activations):
        if c.spec != cfg.spec:
            raise FormatMismatch(f"operand {c!r} does not match {cfg.spec.tag}")


def _finish(trace: Optional[MacTrace], quire: Quire) -> None:
    if trace is not None:
        trace.width = quire.width
        trace.peak_bits = quire.peak_bits
        trace.exact_sum = quire.exact()


# ---------------------------------------------------------------------------
# fixed point


def fixed_emac(weights: Sequence[Code], activations: Sequence[Code], cfg: MacConfig,
               trace: Optional[MacTrace] = None) -> Code:
    _check(weights, activations, cfg, Kind.FIXED)
    spec = cfg.spec
    q = spec.q
    quire = Quire(kulisch_width(spec, cfg.k), 2 * q)
    quire.add(codec.fixed_int(cfg.bias) << q)
    for w, a in zip(weights, activations):
        # full 2n-bit product
        quire.add(codec.fixed_int(w) * codec.fixed_int(a))
    _finish(trace, quire)
    # arithmetic shift right: floor toward -inf, then clip to n bits
    return codec.fixed_from_int(quire.value >> q, spec)


# ---------------------------------------------------------------------------
# floating point


def _float_operand(c: Code) -> tuple[int, int, int]:
    d = codec.float_decode(c)
    return d.sign, d.significand, d.effective_exp()


def float_emac(weights: Sequence[Code], activations: Sequence[Code], cfg: MacConfig,
               trace: Optional[MacTrace] = None) -> Code:
    _check(weights, activations, cfg, Kind.FLOAT)
    spec = cfg.spec
    bias, wf = spec.float_bias, spec.wf
    # register lsb is min^2, min = 2^-frac_scale
    frac_scale = bias - 1 + wf
    quire = Quire(kulisch_width(spec, cfg.k), 2 * frac_scale)

    sb, mb, eb = _float_operand(cfg.bias)
    preload = mb << (eb - 1 + frac_scale)
    quire.add(-preload if sb else preload)
    operands = [(_float_operand(w), _float_operand(a)) for w, a in zip(weights, activations)]
    for (sw, mw, ew), (sa, ma, ea) in operands:
        fixed = (mw * ma) << ((ew - 1) + (ea - 1))
        quire.add(-fixed if sw ^ sa else fixed)
    _finish(trace, quire)
    return _float_extract(quire, spec)


def _float_extract(quire: Quire, spec: FormatSpec) -> Code:
    """Normalise, round to nearest even and pack the register contents."""
    wf, bias = spec.wf, spec.float_bias
    total = quire.value
    if total == 0:
        return codec.zero(spec)
    sign = int(total < 0)
    mag = -total if sign else total
    lead = mag.bit_length() - 1
    exponent = lead - quire.scale
    emin = 1 - bias
    subnormal = exponent < emin
    shift = (emin - wf + quire.scale) if subnormal else (lead - wf)
    if shift > 0:
        sig = mag >> shift
        guard = (mag >> (shift - 1)) & 1
        sticky = (mag & ((1 << (shift - 1)) - 1)) != 0
        if guard and (sticky or sig & 1):
            sig += 1
    else:
        sig = mag << -shift
    if subnormal:
        if sig == 0:
            return codec.zero(spec)
        if sig >= 1 << wf:
            # rounded up into the smallest normal binade
            return codec._float_pack(spec, sign, 1, sig - (1 << wf))
        return codec._float_pack(spec, sign, 0, sig)
    if sig == 2 << wf:
        sig >>= 1
        exponent += 1
    biased = exponent + bias
    if biased > spec.exp_max:
        return codec._float_pack(spec, sign, spec.exp_max, (1 << wf) - 1)
    return codec._float_pack(spec, sign, biased, sig - (1 << wf))


# ---------------------------------------------------------------------------
# posit


def _posit_operand(c: Code) -> codec.DecodedPosit:
    d = codec.posit_decode(c)
    if d.cls is PositClass.NAR:
        raise NaRInput(f"NaR operand {c}")
    return d


def posit_emac(weights: Sequence[Code], activations: Sequence[Code], cfg: MacConfig,
               trace: Optional[MacTrace] = None) -> Code:
    _check(weights, activations, cfg, Kind.POSIT)
    spec = cfg.spec
    n, es = spec.n, spec.es
    fw = spec.posit_frac_bits
    bias = posit_scale_bias(spec)
    quire = Quire(quire_width(n, es, cfg.k), bias)

    db = _posit_operand(cfg.bias)
    if db.cls is PositClass.NORMAL:
        # bias magnitude is a multiple of min = 2^(-bias/2): exact in the quire
        fixed = (db.fraction << (db.scale(es) + bias)) >> fw
        quire.add(-fixed if db.sign else fixed)

    decoded = [(_posit_operand(w), _posit_operand(a)) for w, a in zip(weights, activations)]
    low_mask = (1 << (2 * fw + 1)) - 1
    for dw, da in decoded:
        if dw.cls is PositClass.ZERO or da.cls is PositClass.ZERO:
            continue
        # multiplication
        sign_mult = dw.sign ^ da.sign
        frac_mult = dw.fraction * da.fraction          # 2*fw fraction bits, in [1, 4)
        ovf = frac_mult >> (2 * fw + 1)
        normfrac = frac_mult << (1 - ovf)              # 2*fw+1 fraction bits, in [1, 2)
        sf_mult = dw.scale(es) + da.scale(es) + ovf
        # accumulation
        sf_biased = sf_mult + bias
        wide = normfrac << sf_biased
        assert wide & low_mask == 0, "product below the quire lsb"
        fracs_fixed = wide >> (2 * fw + 1)
        quire.add(-fracs_fixed if sign_mult else fracs_fixed)
    _finish(trace, quire)

    # fraction & scale-factor extraction
    total = quire.value
    if total == 0:
        return codec.zero(spec)
    sign_quire = total < 0
    mag_quire = -total if sign_quire else total
    zc = quire.width - mag_quire.bit_length()
    lead = quire.width - 1 - zc
    sf_quire = lead - bias
    # convergent rounding & encoding
    return codec._posit_round(sign_quire, sf_quire, mag_quire, lead, spec)


_UNITS = {Kind.FIXED: fixed_emac, Kind.FLOAT: float_emac, Kind.POSIT: posit_emac}


def emac(weights: Sequence[Code], activations: Sequence[Code], cfg: MacConfig,
         trace: Optional[MacTrace] = None) -> Code:
    """Dispatch to the unit matching ``cfg.spec``."""
    return _UNITS[cfg.spec.kind](weights, activations, cfg, trace)


def register_width(spec: FormatSpec, k: int) -> int:
    if spec.kind is Kind.POSIT:
        return quire_width(spec.n, spec.es, k)
    return kulisch_width(spec, k)


def width_headroom(spec: FormatSpec, k: int) -> int:
    """Bits of the register left unused by the worst-case k-term sum."""
    mx, mn = codec.format_extrema(spec)
    if spec.kind is Kind.FIXED:
        top = 1 << (spec.n - 1)
        ulp = 1 << spec.q
        # in units of the register lsb 2^-2q
        hi = k * top * top + (top - 1) * ulp
        lo = -k * top * (top - 1) - top * ulp
    else:
        units = (k * mx * mx + mx) / (mn * mn)
        hi = math.ceil(units)
        lo = -hi
    needed = max(hi.bit_length(), (-lo - 1).bit_length()) + 1
    return register_width(spec, k) - needed
