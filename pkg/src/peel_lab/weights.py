"""Weight sequences, disk functions and the peeling step measure.

A bipartite Boltzmann map is weighted by ``prod q_{deg(f)/2}`` over its
non-root faces.  For a weight sequence ``q`` with finite support this module
computes

* the growth constant ``c_q`` of the disk function ``W^(l)``,
* the disk function itself (total weight of maps with perimeter ``2l``),
* the step measure ``nu`` of the half-plane peeling walk,
* the mean gulp and exposure of one lazy peeling step.

Exact rational arithmetic is used whenever the weights and the growth
constant are rational (e.g. every critical ``2p``-angulation).  Otherwise all
quantities are carried as ``mpmath`` numbers with 40 significant digits.

Computation route
-----------------
The negative part of ``nu`` is obtained from the harmonicity of
``h(n) = binom(2n, n) 4^{-n}`` for the ``nu``-walk killed on the non-positive
integers.  Its generating function ``N(x) = sum_{l>=1} nu(-l) x^l`` is

    N(x) = 1 - sqrt(1-x) - sqrt(1-x) P(x),

where ``P`` only involves the finitely many positive atoms of ``nu``.  This
gives each ``nu(-l)`` in ``O(support^2)`` operations without truncation.  The
monotone fixed-point iteration of the disk Tutte equation is provided as an
independent cross-check in :func:`iterate_disk_series`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Union

import mpmath
import numpy as np

Number = Union[Fraction, mpmath.mpf]

PRECISION_DIGITS = 40


class InvalidWeights(ValueError):
    """Raised for weight sequences violating the basic invariants."""


class InadmissibleWeights(ValueError):
    """No growth constant exists for the given weights.

    Attributes
    ----------
    diagnostics : dict
        Values of the admissibility function at the bracket ends.
    """

    def __init__(self, message, diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class SolverFailure(RuntimeError):
    """A numerical solver did not reach its tolerance.

    Attributes
    ----------
    residuals : dict
        The residuals observed when the solver gave up.
    """

    def __init__(self, message, residuals):
        super().__init__(message)
        self.residuals = residuals


def _mpf(x):
    with mpmath.workdps(PRECISION_DIGITS):
        if isinstance(x, Fraction):
            return mpmath.mpf(x.numerator) / x.denominator
        return mpmath.mpf(x)


def to_float(x) -> float:
    """Convert a Fraction / mpf / int to a Python float."""
    if isinstance(x, Fraction):
        return x.numerator / x.denominator if abs(x.numerator) < 10**300 else float(x)
    return float(x)


def parse_weight(text: str) -> Fraction:
    """Parse ``"3/40"``, ``"0.125"`` or ``"1e-3"`` into an exact Fraction."""
    text = text.strip()
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise InvalidWeights(f"cannot parse weight {text!r}") from exc


class WeightSequence:
    """Face weights ``q_k`` indexed by half-degree ``k >= 1``.

    Parameters
    ----------
    entries : dict
        Map ``k -> q_k``.  Values may be ints, Fractions, strings accepted by
        :func:`parse_weight`, floats or mpmath numbers.  Zero entries are
        dropped.
    """

    def __init__(self, entries: Dict[int, object]):
        clean: Dict[int, Number] = {}
        for k, v in entries.items():
            k = int(k)
            if k < 1:
                raise InvalidWeights(f"half-degree must be >= 1, got {k}")
            if isinstance(v, str):
                v = parse_weight(v)
            elif isinstance(v, int):
                v = Fraction(v)
            elif isinstance(v, float):
                v = Fraction(v)
            if v < 0:
                raise InvalidWeights(f"negative weight q_{k} = {v}")
            if v != 0:
                clean[k] = v
        if not clean:
            raise InvalidWeights("weight sequence has empty support")
        self.entries = dict(sorted(clean.items()))
        self.exact = all(isinstance(v, Fraction) for v in self.entries.values())

    @property
    def support_bound(self) -> int:
        return max(self.entries)

    def __getitem__(self, k: int):
        return self.entries.get(k, Fraction(0) if self.exact else mpmath.mpf(0))

    def items(self):
        return self.entries.items()

    def __repr__(self):
        body = ", ".join(f"{k}: {v}" for k, v in self.entries.items())
        return f"WeightSequence({{{body}}})"

    def to_text(self) -> str:
        return "".join(f"{k} {v}\n" for k, v in self.entries.items())

    @classmethod
    def from_text(cls, text: str) -> "WeightSequence":
        """Read lines ``"k q_k"``; blank lines and ``#`` comments are skipped."""
        entries = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise InvalidWeights(f"line {lineno}: expected 'k q_k', got {line!r}")
            try:
                k = int(parts[0])
            except ValueError as exc:
                raise InvalidWeights(f"line {lineno}: bad half-degree {parts[0]!r}") from exc
            if k in entries:
                raise InvalidWeights(f"line {lineno}: duplicate half-degree {k}")
            entries[k] = parse_weight(parts[1])
        return cls(entries)

    @classmethod
    def from_file(cls, path) -> "WeightSequence":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())


# ---------------------------------------------------------------------------
# growth constant

def _admissibility_coefficients(q: WeightSequence):
    # phi(R) = 1 + sum_k q_k binom(2k-1, k) R^k - R
    return {k: v * math.comb(2 * k - 1, k) for k, v in q.items()}


def _phi(coef, R, deriv=0):
    if deriv == 0:
        return 1 - R + sum(a * R**k for k, a in coef.items())
    return -1 + sum(k * a * R ** (k - 1) for k, a in coef.items())


def _try_rational(x, coef, need_double: bool) -> Optional[Fraction]:
    for bound in (10**3, 10**6, 10**9, 10**12):
        cand = Fraction(str(mpmath.nstr(x, 35))).limit_denominator(bound)
        if cand > 0 and _phi(coef, cand) == 0 and (not need_double or _phi(coef, cand, 1) == 0):
            return cand
    return None


def solve_admissible_c(q: WeightSequence, tol: float = 1e-30):
    """Growth constant ``c_q`` of the disk function.

    ``c_q = 4 R`` where ``R`` is the smallest positive root of
    ``R = 1 + sum_k q_k binom(2k-1, k) R^k``.  The root is bracketed and
    bisected in 40-digit arithmetic; for rational weights an exact rational
    root is returned when one exists.

    Returns
    -------
    c : Fraction or mpf
    critical_root : bool
        True when the root is a double root (the critical case).

    Raises
    ------
    InadmissibleWeights
        When the equation has no positive root; the diagnostics report the
        sign of ``phi`` at both ends of the bracket.
    """
    coef = _admissibility_coefficients(q)
    with mpmath.workdps(PRECISION_DIGITS):
        mcoef = {k: _mpf(a) for k, a in coef.items()}
        lo, hi = mpmath.mpf(0), mpmath.mpf(1)
        if _phi(mcoef, lo, 1) >= 0:
            raise InadmissibleWeights(
                "phi is increasing from phi(0)=1: no positive root",
                {"phi_lo": 1.0, "phi_hi": float(_phi(mcoef, hi)), "bracket": (0.0, 1.0)},
            )
        while _phi(mcoef, hi, 1) < 0:
            hi *= 2
            if hi > 1e30:
                raise SolverFailure("cannot bracket the minimum of phi", {"hi": float(hi)})
        for _ in range(400):
            mid = (lo + hi) / 2
            if _phi(mcoef, mid, 1) < 0:
                lo = mid
            else:
                hi = mid
        r_star = (lo + hi) / 2
        phi_star = _phi(mcoef, r_star)
        scale = max(mpmath.mpf(1), r_star)
        if phi_star > tol * scale:
            raise InadmissibleWeights(
                "weights are not admissible: phi(R) > 0 for all R > 0",
                {"phi_lo": 1.0, "phi_hi": float(phi_star), "bracket": (0.0, float(r_star)),
                 "sign_lo": 1, "sign_hi": 1},
            )
        double = abs(phi_star) <= tol * scale
        if double:
            root = r_star
        else:
            lo, hi = mpmath.mpf(0), r_star
            for _ in range(400):
                mid = (lo + hi) / 2
                if _phi(mcoef, mid) > 0:
                    lo = mid
                else:
                    hi = mid
            root = (lo + hi) / 2
        if q.exact:
            exact = _try_rational(root, coef, double)
            if exact is not None:
                return 4 * exact, double
        return 4 * root, double


# ---------------------------------------------------------------------------
# the step measure nu

def _central(n_max: int, exact: bool):
    """h(n) = binom(2n,n)/4^n and s(n) = [x^n] sqrt(1-x) for n <= n_max."""
    one = Fraction(1) if exact else _mpf(1)
    h = [one]
    for n in range(n_max):
        h.append(h[-1] * (2 * n + 1) / (2 * n + 2))
    s = [one] + [-h[m] / (2 * m - 1) for m in range(1, n_max + 1)]
    return h, s


def positive_nu(q: WeightSequence, c) -> List[Number]:
    """``nu(k) = q_{k+1} c^k`` for ``0 <= k <= support_bound - 1``."""
    exact = q.exact and isinstance(c, Fraction)
    zero = Fraction(0) if exact else _mpf(0)
    cc = c if exact else _mpf(c)
    return [(q[k + 1] if exact else _mpf(q[k + 1])) * cc**k if (k + 1) in q.entries else zero
            for k in range(q.support_bound)]


def negative_nu(q: WeightSequence, c, K: int) -> List[Number]:
    """``nu(-l)`` for ``1 <= l <= K`` (index ``l-1`` in the result)."""
    exact = q.exact and isinstance(c, Fraction)
    pos = positive_nu(q, c)
    p = len(pos)
    h, s = _central(K + p + 1, exact)
    # inner[k][j] = sum_{n=0}^{k} h(n) s(j - n), only nonzero atoms used
    atoms = [(k, v) for k, v in enumerate(pos) if v != 0]
    out = []
    with mpmath.workdps(PRECISION_DIGITS):
        for l in range(1, K + 1):
            acc = -s[l]
            for k, v in atoms:
                inner = 0
                for n in range(k + 1):
                    inner += h[n] * s[l + k - n]
                acc += v * inner
            out.append(acc)
    return out


# ---------------------------------------------------------------------------
# tail model

@dataclass
class TailModel:
    """``nu(-k) ~ k^{-5/2} (a_0 + a_1/k + a_2/k^2 + a_3/k^3)`` for large k.

    Fitted by least squares on the last quarter of the computed terms.
    """

    coefficients: Sequence[float]
    start: int  # first index not covered by the table (K + 1)
    exponent: float = -2.5

    @property
    def amplitude(self) -> float:
        return float(self.coefficients[0])

    def value(self, k):
        k = np.asarray(k, dtype=float)
        poly = sum(a * k ** (-j) for j, a in enumerate(self.coefficients))
        return poly * k**self.exponent

    def moment(self, power: int = 0) -> float:
        """``sum_{k >= start} k^power nu(-k)`` under the model."""
        with mpmath.workdps(30):
            total = mpmath.mpf(0)
            for j, a in enumerate(self.coefficients):
                total += a * mpmath.zeta(-self.exponent + j - power, self.start)
            return float(total)

    @classmethod
    def fit(cls, values: Sequence[float], first_index: int = 1, degree: int = 3) -> "TailModel":
        n = len(values)
        lo = max(0, n - max(n // 4, degree + 2))
        ks = np.arange(first_index + lo, first_index + n, dtype=float)
        ys = np.asarray([float(v) for v in values[lo:]]) * ks**2.5
        kmax = ks[-1]
        # polynomial in x = kmax/k, rescaled back to powers of 1/k
        x = kmax / ks
        deg = min(degree, len(ks) - 1)
        coefs = np.polynomial.polynomial.polyfit(x, ys, deg)
        coefficients = [coefs[j] * kmax**j for j in range(deg + 1)]
        return cls(coefficients, first_index + n)


def fit_tail_exponent(values: Sequence[float], first_index: int = 1) -> float:
    """Least-squares slope of ``log nu(-k)`` against ``log k`` on ``[K/2, K]``."""
    n = len(values)
    ks = np.arange(first_index + n // 2, first_index + n, dtype=float)
    vs = np.asarray([float(v) for v in values[n // 2:]])
    mask = vs > 0
    if mask.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(ks[mask]), np.log(vs[mask]), 1)[0])


# ---------------------------------------------------------------------------
# disk data

@dataclass
class DiskData:
    """Disk function of a weight sequence.

    Attributes
    ----------
    q : WeightSequence
    c : growth constant ``c_q``
    W : list
        ``W^(0..L)``; exact Fractions when available.
    W_c : value of ``sum_l W^(l) c^{-l}``
    L : truncation order
    tail : TailModel for ``nu(-k)``, ``k > L + 1``
    exact : bool
    critical_root : bool
        The growth constant is a double root of the admissibility equation.
    """

    q: WeightSequence
    c: Number
    W: List[Number]
    W_c: Number
    L: int
    tail: TailModel
    exact: bool
    critical_root: bool = False
    neg_nu: List[Number] = field(default_factory=list, repr=False)
    pos_nu: List[Number] = field(default_factory=list, repr=False)

    def scaled_W(self) -> np.ndarray:
        """``W^(l) c^{-l}`` as floats for ``0 <= l <= L``."""
        c = self.c
        return np.array([to_float(self.neg_nu[l] * c / 2) for l in range(self.L + 1)])

    def W_float(self, l: int) -> float:
        return to_float(self.W[l])


def solve_disk_series(q: WeightSequence, c, L: int, tol: float = 1e-12,
                      method: str = "closed", **iterate_kwargs) -> List[Number]:
    """Disk function ``W^(0..L)`` at growth constant ``c``.

    With ``method="closed"`` (default) uses ``W^(l) = nu(-l-1) c^{l+1} / 2``
    with ``nu`` from the closed generating function.  The result is the
    minimal solution of the Tutte equation only when ``c`` is the growth
    constant, which is enforced by checking ``nu(-1) = 2/c``.  With
    ``method="iterate"`` the float fixed-point iteration
    :func:`iterate_disk_series` is used instead.

    Raises
    ------
    InvalidWeights
        If ``L < 2`` or ``c <= 0``.
    SolverFailure
        If ``c`` is not the growth constant of ``q``.
    """
    if L < 2:
        raise InvalidWeights("truncation L must be >= 2")
    if c <= 0:
        raise InvalidWeights("c must be positive")
    if method == "iterate":
        return list(iterate_disk_series(q, c, L, tol=tol, **iterate_kwargs)[0])
    if method != "closed":
        raise ValueError(f"unknown method {method!r}")
    neg = negative_nu(q, c, L + 1)
    defect = neg[0] * c / 2 - 1
    if abs(to_float(defect)) > tol:
        raise SolverFailure("c is not the growth constant: nu(-1) != 2/c",
                            {"nu(-1)*c/2 - 1": to_float(defect)})
    return [neg[l] * c ** (l + 1) / 2 for l in range(L + 1)]


def iterate_disk_series(q: WeightSequence, c: float, L: int, tol: float = 1e-12,
                        max_iter: int = 100000, overflow: float = 1e12):
    """Monotone fixed-point iteration of the disk Tutte equation.

    Iterates ``W <- T(W)`` from ``W = (1, 0, 0, ...)`` with
    ``T(W)^(l) = sum_k q_k W^(l+k-1) + sum_{a+b=l-1} W^(a) W^(b)``.  Terms of
    index above ``L`` use the tail ``A c^l l^{-5/2}`` with ``A`` averaged over
    the last quarter of the current iterate.  Works in floats with the
    rescaled unknowns ``W^(l) c^{-l}``.

    Returns
    -------
    W : ndarray
        ``W^(0..L)``.
    info : dict
        ``iterations``, ``last_update``, ``monotone`` (every iterate was
        entrywise >= the previous one).

    Raises
    ------
    InadmissibleWeights
        When iterates exceed the overflow guard.
    SolverFailure
        When ``max_iter`` is reached without convergence.
    """
    if L < 2:
        raise InvalidWeights("truncation L must be >= 2")
    c = float(c)
    qs = {k: float(v) for k, v in q.items()}
    kmax = q.support_bound
    u = np.zeros(L + 1)  # u[l] = W^(l) c^{-l}
    u[0] = 1.0
    idx = np.arange(L + kmax + 1, dtype=float)
    monotone = True
    update = float("inf")
    quarter = max(L // 4, 1)
    for it in range(1, max_iter + 1):
        amp = float(np.mean(u[L - quarter + 1:] * idx[L - quarter + 1:L + 1] ** 2.5))
        ext = np.empty(L + kmax + 1)
        ext[:L + 1] = u
        ext[L + 1:] = amp * idx[L + 1:] ** -2.5
        new = np.empty_like(u)
        new[0] = 1.0
        conv = np.convolve(u, u)  # conv[m] = sum_{a+b=m} u_a u_b
        for l in range(1, L + 1):
            acc = 0.0
            for k, qk in qs.items():
                acc += qk * c ** (k - 1) * ext[l + k - 1]
            new[l] = acc + conv[l - 1] / c
        if np.any(new < u - 1e-15 * np.abs(u)):
            monotone = False
        update = float(np.max(np.abs(new - u) / np.maximum(np.abs(new), 1e-300)))
        u = new
        if not np.all(np.isfinite(u)) or np.max(u) > overflow:
            raise InadmissibleWeights("fixed-point iterates diverge", {"iteration": it})
        if update < tol:
            break
    else:
        raise SolverFailure("fixed-point iteration did not converge",
                            {"iterations": max_iter, "last_update": update})
    W = u * c ** np.arange(L + 1, dtype=float)
    return W, {"iterations": it, "last_update": update, "monotone": monotone}


def solve_disk(q: WeightSequence, L: int = 400, c=None) -> DiskData:
    """Solve for ``c_q`` (unless given) and the disk function up to ``L``."""
    if c is None:
        c, double = solve_admissible_c(q)
    else:
        double = False
    neg = negative_nu(q, c, L + 1)
    defect = to_float(neg[0] * c / 2 - 1)
    if abs(defect) > 1e-12:
        raise SolverFailure("c is not the growth constant: nu(-1) != 2/c",
                            {"nu(-1)*c/2 - 1": defect})
    exact = q.exact and isinstance(c, Fraction)
    W = [neg[l] * c ** (l + 1) / 2 for l in range(L + 1)]
    pos = positive_nu(q, c)
    S_closed = 1 - sum(pos)
    W_c = c * S_closed / 2
    tail = TailModel.fit([to_float(v) for v in neg], 1)
    return DiskData(q=q, c=c, W=W, W_c=W_c, L=L, tail=tail, exact=exact,
                    critical_root=double, neg_nu=neg, pos_nu=pos)


def make_2p_angulation(p: int) -> WeightSequence:
    """Critical weight sequence of ``2p``-angulations.

    The only nonzero weight is ``q_p``.  Criticality makes the admissibility
    root double, which gives ``R = p/(p-1)`` and
    ``q_p = (p-1)^{p-1} / (p^p binom(2p-1, p))``; the returned sequence is
    then checked to produce a centred, normalised ``nu``.
    """
    if p < 2:
        raise InvalidWeights("2p-angulations need p >= 2")
    qp = Fraction((p - 1) ** (p - 1), p**p * math.comb(2 * p - 1, p))
    q = WeightSequence({p: qp})
    c, double = solve_admissible_c(q)
    if not double or c != Fraction(4 * p, p - 1):
        raise SolverFailure("2p-angulation weight is not critical",
                            {"c": to_float(c), "double_root": double})
    return q


def parse_model(spec: str) -> WeightSequence:
    """``"2p:<p>"`` -> critical 2p-angulation."""
    spec = spec.strip()
    if spec.startswith("2p:"):
        try:
            p = int(spec[3:])
        except ValueError as exc:
            raise InvalidWeights(f"bad model {spec!r}") from exc
        return make_2p_angulation(p)
    raise InvalidWeights(f"unknown model {spec!r}; expected '2p:<p>'")


# ---------------------------------------------------------------------------
# nu measure and derived constants

@dataclass
class NuMeasure:
    """The peeling step measure and its derived constants.

    Attributes
    ----------
    pos : list
        ``nu(k)`` for ``0 <= k < support_bound``.
    neg : list
        ``nu(-k)`` for ``1 <= k <= K`` (index ``k-1``).
    K : negative truncation
    tail : TailModel beyond ``-K``
    c : growth constant
    S : ``nu(Z_{<0})`` from the table plus the tail model
    S_closed : ``1 - nu(Z_{>=0})``, exact when the weights are
    gulp : ``1/2 sum_{k>=1} nu(-k)(2k-1)`` from the table plus tail
    gulp_closed : ``sum_{k>=0} k nu(k) - S_closed/2``, exact when available;
        valid for critical sequences (zero mean)
    exposure : ``sum_{k>=0} nu(k)(2k+1)`` (exact when available)
    """

    pos: List[Number]
    neg: List[Number]
    K: int
    tail: TailModel
    c: Number
    exact: bool
    S: float = 0.0
    S_closed: Number = 0
    total: float = 0.0
    mean: float = 0.0
    gulp: float = 0.0
    gulp_closed: Number = 0
    exposure: Number = 0

    def __call__(self, k: int):
        if k >= 0:
            return self.pos[k] if k < len(self.pos) else 0
        if -k <= self.K:
            return self.neg[-k - 1]
        return float(self.tail.value(-k))

    @property
    def gulp_unhalved(self) -> float:
        """``sum_{k>=1} nu(-k)(2k-1)``: the displayed formula without the 1/2."""
        return 2 * self.gulp

    @property
    def nu_minus_one(self):
        return self.neg[0]

    def pos_float(self) -> np.ndarray:
        return np.array([to_float(v) for v in self.pos])

    def neg_float(self) -> np.ndarray:
        return np.array([to_float(v) for v in self.neg])


def nu_measure(disk: DiskData, K: Optional[int] = None) -> NuMeasure:
    """Build ``nu`` from a solved disk (``K <= L + 1``)."""
    if K is None:
        K = disk.L + 1
    if K > len(disk.neg_nu):
        raise InvalidWeights(f"K={K} exceeds L+1={disk.L + 1}")
    neg = disk.neg_nu[:K]
    pos = disk.pos_nu
    negf = np.array([to_float(v) for v in neg])
    posf = np.array([to_float(v) for v in pos])
    tail = TailModel.fit(negf, 1) if K == len(disk.neg_nu) else TailModel.fit(negf, 1)
    ks = np.arange(1, K + 1, dtype=float)
    t0, t1 = tail.moment(0), tail.moment(1)
    # compensated sums keep 1e-14 level accuracy
    S = math.fsum(negf) + t0
    neg_first = math.fsum(negf * ks) + t1
    pos_first = math.fsum(posf * np.arange(len(posf)))
    total = math.fsum(posf) + S
    mean = pos_first - neg_first
    gulp = 0.5 * (2 * neg_first - S)
    S_closed = 1 - sum(pos)
    gulp_closed = sum(k * v for k, v in enumerate(pos)) - S_closed / 2
    exposure = sum((2 * k + 1) * v for k, v in enumerate(pos))
    return NuMeasure(pos=pos, neg=neg, K=K, tail=tail, c=disk.c, exact=disk.exact,
                     S=S, S_closed=S_closed, total=total, mean=mean, gulp=gulp,
                     gulp_closed=gulp_closed, exposure=exposure)


def tutte_residuals(nu: NuMeasure, lmax: Optional[int] = None) -> np.ndarray:
    """``|nu(-l-1) - 1/2 sum_k nu(k) nu(-l-k-1)|`` for ``1 <= l <= lmax``."""
    if lmax is None:
        lmax = nu.K - 1
    lmax = min(lmax, nu.K - 1)
    pos = nu.pos
    neg = nu.neg
    out = np.empty(lmax)
    for l in range(1, lmax + 1):
        acc = 0
        for k, v in enumerate(pos):
            if v:
                acc += v * neg[l + k] if l + k < nu.K else v * nu.tail.value(l + k + 1)
        for j in range(1, l + 1):
            acc += neg[j - 1] * neg[l - j]
        for j in range(l + 1, l + len(pos) + 1):
            m = j - l - 1
            if pos[m]:
                acc += neg[j - 1] * pos[m]
        out[l - 1] = abs(to_float(neg[l] - acc / 2))
    return out


@dataclass
class CriticalityReport:
    normalization_residual: float
    mean_residual: float
    tutte_residual_max: float
    tail_exponent: float
    admissible: bool
    critical: bool
    dilute: bool
    exposure_identity_residual: float

    def as_dict(self):
        return dict(self.__dict__)


def criticality_report(nu: NuMeasure, tol_mean: float = 1e-6,
                       tutte_lmax: int = 50) -> CriticalityReport:
    """Diagnostics of normalisation, centring, Tutte equation and tail."""
    tut = tutte_residuals(nu, tutte_lmax)
    expo = fit_tail_exponent(nu.neg_float(), 1)
    mean_res = abs(nu.mean)
    critical = mean_res < tol_mean and abs(expo + 2.5) < 0.1
    return CriticalityReport(
        normalization_residual=abs(nu.total - 1),
        mean_residual=mean_res,
        tutte_residual_max=float(tut.max()) if len(tut) else 0.0,
        tail_exponent=expo,
        admissible=True,
        critical=bool(critical),
        dilute=True,
        exposure_identity_residual=abs(to_float(nu.exposure) - 2 * nu.gulp - 1),
    )


def exposure_closed_form(p: int) -> Fraction:
    """``4^{p-1} / binom(2p-2, p-1)``."""
    return Fraction(4 ** (p - 1), math.comb(2 * p - 2, p - 1))
