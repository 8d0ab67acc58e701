"""Disk weights for simple boundaries and the law of the core perimeter.

A map with a general boundary decomposes into its simple core carrying the
root edge plus one general map hanging off every core corner.  On generating
functions this reads ``W(z) = Wh(z W(z)^2)``, where ``Wh`` counts maps whose
root face is simple.  Inverting the substitution order by order gives the
coefficients ``Wh^(l)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence

import flint
import mpmath
import numpy as np

from .weights import DiskData, TailModel, to_float


@dataclass
class SimpleDiskData:
    """Simple-boundary disk weights.

    Attributes
    ----------
    hatW : list
        ``Wh^(0..L)``, Fractions when the disk is exact.
    hat_c : growth constant of ``Wh``, equal to ``c / W_c^2``
    disk : the general-boundary data the series was derived from
    tail : TailModel for ``Wh^(l) hat_c^{-l}`` beyond ``L``
    """

    hatW: list
    hat_c: object
    disk: DiskData
    tail: TailModel

    @property
    def L(self) -> int:
        return len(self.hatW) - 1

    def scaled(self) -> np.ndarray:
        """``Wh^(l) hat_c^{-l}`` as floats."""
        return np.array([to_float(v / self.hat_c**l) for l, v in enumerate(self.hatW)])

    def generating_value(self, x=None, with_tail: bool = True) -> float:
        """``sum_l Wh^(l) x^l``, by default at ``x = 1/hat_c``.

        The tail beyond ``L`` is only added at the default point.
        """
        if x is None:
            total = math.fsum(self.scaled())
            if with_tail:
                total += self.tail.moment(0)
            return total
        x = float(x)
        return math.fsum(to_float(v) * x**l for l, v in enumerate(self.hatW))


def hat_c(disk: DiskData):
    """``c / W_c^2``: growth constant of the simple-boundary weights."""
    return disk.c / disk.W_c**2


def _to_fmpq(x: Fraction):
    return flint.fmpq(x.numerator, x.denominator)


def _invert_exact(W: Sequence[Fraction], L: int) -> List[Fraction]:
    old = flint.ctx.cap
    flint.ctx.cap = L + 1
    try:
        Ws = flint.fmpq_series([_to_fmpq(Fraction(w)) for w in W[:L + 1]], prec=L + 1)
        z = flint.fmpq_series([0, 1], prec=L + 1)
        y = z * Ws * Ws
        hat = Ws(y.reversion())
        coeffs = hat.coeffs()
    finally:
        flint.ctx.cap = old
    coeffs = list(coeffs) + [0] * (L + 1 - len(coeffs))
    return [Fraction(int(v.p), int(v.q)) for v in coeffs]


def _invert_ball(W, L: int, bits: int) -> List[mpmath.mpf]:
    old_cap, old_prec = flint.ctx.cap, flint.ctx.prec
    flint.ctx.cap = L + 1
    flint.ctx.prec = bits
    try:
        Ws = flint.arb_series([flint.arb(mpmath.nstr(w, bits // 3 + 5)) for w in W[:L + 1]],
                              prec=L + 1)
        z = flint.arb_series([0, 1], prec=L + 1)
        y = z * Ws * Ws
        hat = Ws(y.reversion())
        coeffs = hat.coeffs()
        with mpmath.workdps(40):
            out = [mpmath.mpf(c.mid().str(45, radius=False)) for c in coeffs]
    finally:
        flint.ctx.cap, flint.ctx.prec = old_cap, old_prec
    return out + [mpmath.mpf(0)] * (L + 1 - len(out))


def invert_boundary(disk: DiskData, L: Optional[int] = None) -> SimpleDiskData:
    """Solve ``Wh(z W(z)^2) = W(z)`` for ``Wh^(0..L)``.

    The substitution ``y = z W(z)^2`` starts with ``z``, so the system is
    unitriangular.  It is solved by exact series reversion for rational
    disks and by ball arithmetic otherwise; the working precision grows with
    ``L`` because the inversion cancels a factor ``W_c^{2L}``.
    """
    if L is None:
        L = disk.L
    if L > disk.L:
        raise ValueError(f"L={L} exceeds the disk truncation {disk.L}")
    if disk.exact:
        hatW = _invert_exact(disk.W, L)
    else:
        bits = int(2 * L * math.log2(max(to_float(disk.W_c), 1.0001))) + 256
        hatW = _invert_ball(disk.W, L, bits)
    hc = hat_c(disk)
    scaled = [to_float(v / hc**l) for l, v in enumerate(hatW)]
    tail = TailModel.fit(scaled[1:], 1)
    return SimpleDiskData(hatW=hatW, hat_c=hc, disk=disk, tail=tail)


def compose_check(sdisk: SimpleDiskData, L: Optional[int] = None) -> float:
    """Max relative deviation of ``Wh(z W^2)`` from ``W`` up to order ``L``."""
    disk = sdisk.disk
    if L is None:
        L = sdisk.L
    if disk.exact:
        old = flint.ctx.cap
        flint.ctx.cap = L + 1
        try:
            Ws = flint.fmpq_series([_to_fmpq(w) for w in disk.W[:L + 1]], prec=L + 1)
            Hs = flint.fmpq_series([_to_fmpq(w) for w in sdisk.hatW[:L + 1]], prec=L + 1)
            z = flint.fmpq_series([0, 1], prec=L + 1)
            back = Hs(z * Ws * Ws)
            diff = (back - Ws).coeffs()
        finally:
            flint.ctx.cap = old
        return 0.0 if all(v == 0 for v in diff) else float(max(abs(v) for v in diff))
    # float round trip on the rescaled coefficients
    c = to_float(disk.c)
    w = np.array([to_float(disk.W[l]) / c**l for l in range(L + 1)])
    h = [to_float(sdisk.hatW[l]) / c**l for l in range(L + 1)]
    u = np.convolve(np.convolve(w, w)[:L], [0, 1])[:L + 1]
    total = np.zeros(L + 1)
    power = np.zeros(L + 1)
    power[0] = 1
    for l in range(L + 1):
        total += h[l] * power
        power = np.convolve(power, u)[:L + 1]
    return float(np.max(np.abs(total - w) / np.maximum(np.abs(w), 1e-300)))


@dataclass
class CorePerimeterLaw:
    """``P(|core boundary| = 2l)`` for ``0 <= l <= lmax`` plus the tail mass."""

    pmf: np.ndarray
    tail_mass: float

    def conditioned_nonvertex(self) -> np.ndarray:
        """Law of ``l`` given ``l >= 1`` (index 0 is ``l = 1``)."""
        body = self.pmf[1:]
        return body / (body.sum() + self.tail_mass)


def core_perimeter_pmf(sdisk: SimpleDiskData, lmax: int = 200,
                       warn_tail: float = 0.01) -> CorePerimeterLaw:
    """Law ``Wh^(l) hat_c^{-l} / W_c`` of the core half-perimeter of a free map.

    ``l = 0`` is the vertex map.  The mass beyond ``lmax`` comes from the
    ``-5/2`` tail model; a warning is issued when it exceeds ``warn_tail``.
    """
    if lmax > sdisk.L:
        raise ValueError(f"lmax={lmax} exceeds the computed order {sdisk.L}")
    Wc = to_float(sdisk.disk.W_c)
    scaled = sdisk.scaled()
    pmf = scaled[:lmax + 1] / Wc
    if lmax < sdisk.L:
        tail = (math.fsum(scaled[lmax + 1:]) + sdisk.tail.moment(0)) / Wc
    else:
        tail = sdisk.tail.moment(0) / Wc
    if tail > warn_tail:
        warnings.warn(f"core perimeter law truncated at {lmax}: tail mass {tail:.3g}")
    return CorePerimeterLaw(pmf=pmf, tail_mass=tail)


def exact_core_pmf(sdisk: SimpleDiskData, lmax: int) -> List[Fraction]:
    """Exact ``Wh^(l) hat_c^{-l} / W_c`` for rational disks."""
    if not sdisk.disk.exact:
        raise ValueError("exact pmf requires a rational disk")
    return [sdisk.hatW[l] / sdisk.hat_c**l / sdisk.disk.W_c for l in range(lmax + 1)]


@dataclass
class RatioReport:
    ratios: np.ndarray
    last: float
    deviation: float


def ratio_diagnostics(series: Sequence, target) -> RatioReport:
    """Successive ratios ``a_{l+1}/a_l`` and the distance of the last one to ``target``."""
    if len(series) < 10:
        raise ValueError("ratio diagnostics need at least 10 terms")
    vals = list(series)
    ratios = np.array([to_float(Fraction(vals[i + 1]) / Fraction(vals[i]))
                       if isinstance(vals[i], Fraction) else to_float(vals[i + 1]) / to_float(vals[i])
                       for i in range(len(vals) - 1)])
    last = float(ratios[-1])
    return RatioReport(ratios=ratios, last=last, deviation=abs(last - to_float(target)))
