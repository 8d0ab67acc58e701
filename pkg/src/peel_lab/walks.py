"""Walk measures, absorption and renewal functions, and h-transformed chains.

The exposed-boundary length of the core exploration moves like a walk with
steps ``mu``: up by ``2k`` with probability ``nu(k)``, down by ``2l`` with
probability ``nu(-l)/2`` and down by one with probability ``S/2`` where
``S = nu(Z_{<0})``.  ``H_down(l)`` is the probability that this walk started
at ``l`` first enters the non-positive integers exactly at 0, and ``H_up`` is
its prefix sum (the renewal function).
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np

from .weights import DiskData, NuMeasure, to_float


class ConsistencyError(RuntimeError):
    """Two formulas for the same quantity disagree."""


class NormalizationError(RuntimeError):
    """A transformed transition kernel does not sum to one."""


class BudgetExceeded(RuntimeError):
    """A simulation hit its step budget before terminating."""


@dataclass
class MuMeasure:
    """Step law of the exposed-boundary walk, derived from ``nu``.

    ``mu(2k) = nu(k)`` for ``k >= 0``, ``mu(-1) = S/2`` and
    ``mu(-2l) = nu(-l)/2`` for ``l >= 1``.
    """

    nu: NuMeasure
    S: object  # exact when nu is

    def __call__(self, y: int):
        if y >= 0:
            return self.nu(y // 2) if y % 2 == 0 else 0
        if y == -1:
            return self.S / 2
        if y % 2 == 0:
            return self.nu(y // 2) / 2
        return 0

    def total(self) -> float:
        return to_float(sum(self.nu.pos)) + to_float(self.S)


def mu_measure(nu: NuMeasure) -> MuMeasure:
    S = nu.S_closed
    return MuMeasure(nu=nu, S=S)


class RenewalFunctions:
    """Tabulated ``H_down(0..M)`` and ``H_up(0..M+1)``.

    Values beyond the tables are extended through the ``-5/2`` tail model of
    ``nu`` and returned as floats.
    """

    def __init__(self, H_down: List, H_up: List, nu: NuMeasure):
        self.H_down = H_down
        self.H_up = H_up
        self.nu = nu
        self.M = len(H_down) - 1
        self.down_f = np.array([to_float(v) for v in H_down])
        self.up_f = np.array([to_float(v) for v in H_up])
        self._S = to_float(nu.S_closed)

    def down(self, l: int):
        """Exact (when available) ``H_down(l)``; zero for ``l < 0``."""
        if l < 0:
            return 0
        if l <= self.M:
            return self.H_down[l]
        return self.down_float(l)

    def up(self, l: int):
        if l <= 0:
            return 0
        if l <= self.M + 1:
            return self.H_up[l]
        return self.up_float(l)

    def _extend(self, l: int):
        """Grow the float tables so that index ``l`` is covered."""
        n = max(l + 1, 2 * len(self.down_f))
        nu = self.nu
        kmax = n // 2 + 2
        ks = np.arange(1, kmax + 1)
        negs = np.where(ks <= nu.K, 0.0, nu.tail.value(ks))
        negs[:min(nu.K, kmax)] = nu.neg_float()[:min(nu.K, kmax)]
        t = nu.tail
        beyond = float(sum(a * _hurwitz(-t.exponent + j, kmax + 1)
                           for j, a in enumerate(t.coefficients)))
        # suffix[k-1] = nu((-inf, -k])
        suffix = np.cumsum(negs[::-1])[::-1] + beyond
        old = len(self.down_f)
        idx = np.arange(old, n)
        first = (idx + 1) // 2 + 1
        ext = suffix[first - 1] / self._S
        self.down_f = np.concatenate([self.down_f, ext])
        self.up_f = np.concatenate([[0.0], np.cumsum(self.down_f)])

    def down_float(self, l: int) -> float:
        if l < 0:
            return 0.0
        if l >= len(self.down_f):
            self._extend(l)
        return float(self.down_f[l])

    def up_float(self, l: int) -> float:
        if l <= 0:
            return 0.0
        if l >= len(self.up_f):
            self._extend(l)
        return float(self.up_f[l])


def _hurwitz(s: float, a: int) -> float:
    import mpmath
    return float(mpmath.zeta(s, a))


def h_down(nu: NuMeasure, disk: DiskData, M: int, tol: float = 1e-10) -> List:
    """``H_down(0..M)`` from the disk series, checked against the ``nu`` tail.

    The two expressions are ``1 - (1/W_c) sum_{2j < l} W^(j) c^{-j}`` and
    ``nu((-inf, -1 - l/2]) / nu(Z_{<0})``.

    Raises
    ------
    ConsistencyError
        When they differ by more than ``tol`` somewhere.
    """
    need = (M + 1) // 2 + 1
    if need > min(nu.K, disk.L + 1):
        raise ValueError(f"M={M} needs nu down to -{need}; extend L/K")
    c = disk.c
    S = nu.S_closed
    # W-form
    w_out, acc_w = [], 0
    # nu-form
    n_out, acc_n = [], 0
    j_next = 0
    k_next = 1
    for l in range(M + 1):
        while 2 * j_next < l:
            acc_w += disk.W[j_next] / c**j_next
            j_next += 1
        while k_next < 1 + l / 2:
            acc_n += nu.neg[k_next - 1]
            k_next += 1
        w_out.append(1 - acc_w / disk.W_c)
        n_out.append(1 - acc_n / S)
    worst = max(abs(to_float(a - b)) for a, b in zip(w_out, n_out))
    if worst > tol:
        raise ConsistencyError(f"H_down formulas disagree by {worst:.3g}")
    return w_out


def h_down_nu_form(nu: NuMeasure, M: int) -> List:
    S = nu.S_closed
    out, acc, k = [], 0, 1
    for l in range(M + 1):
        while k < 1 + l / 2:
            acc += nu.neg[k - 1]
            k += 1
        out.append(1 - acc / S)
    return out


def h_up(H_down: List) -> List:
    """Prefix sums ``H_up(l) = H_down(0) + ... + H_down(l-1)``, ``0 <= l <= M+1``."""
    out = [H_down[0] * 0]
    for v in H_down:
        out.append(out[-1] + v)
    return out


def renewal_functions(nu: NuMeasure, disk: DiskData, M: Optional[int] = None) -> RenewalFunctions:
    if M is None:
        M = 2 * min(nu.K, disk.L + 1) - 3
    Hd = h_down(nu, disk, M)
    return RenewalFunctions(Hd, h_up(Hd), nu)


# ---------------------------------------------------------------------------
# identities

@dataclass
class IdentityReport:
    harmonic_down_max: float
    harmonic_down_at: int
    sum_to_one_max: float
    sum_to_one_at: Tuple[int, int]
    first_face_sum_residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return max(self.harmonic_down_max, self.sum_to_one_max,
                   self.first_face_sum_residual) <= self.tolerance

    def as_dict(self):
        return dict(self.__dict__, passed=self.passed)


def _nu_value(nu: NuMeasure, k: int, override: Optional[Dict[int, object]]):
    if override and k in override:
        return override[k]
    return nu(k)


def check_H_identities(nu: NuMeasure, H: RenewalFunctions, p_max: int = 40,
                       tol: float = 1e-10, q=None, c=None,
                       nu_override: Optional[Dict[int, object]] = None) -> IdentityReport:
    """Residuals of the harmonicity identities.

    (a) ``H_down`` is ``mu``-harmonic on ``1..p_max``.
    (b) For ``1 <= l <= p <= p_max``::

        sum_{k>=0} nu(k) H_up(p+2k)
          + sum_{k<=-1} nu(k)/2 H_up(max(p+2k, p-l))
          + sum_{k<=-1} nu(k)/2 H_up(max(p+2k, l-1)) = H_up(p)

    (c) ``sum_k q_k c^{k-1} H_up(2k-1) = 1`` when ``q`` and ``c`` are given.

    ``nu_override`` replaces selected atoms of ``nu`` (detector-sensitivity
    runs); ``S`` is recomputed from the overridden atoms.
    """
    pos = [_nu_value(nu, k, nu_override) for k in range(len(nu.pos))]
    S = nu.S_closed
    if nu_override:
        S = S + sum(v - nu(k) for k, v in nu_override.items() if k < 0)
    jump = 2 * (len(pos) - 1)
    if p_max + jump > H.M:
        raise ValueError("renewal tables too short for p_max")

    def neg(k):  # nu(-k), k >= 1
        return _nu_value(nu, -k, nu_override)

    # (a)
    worst_a, at_a = 0.0, 0
    for x in range(1, p_max + 1):
        acc = sum(v * H.down(x + 2 * k) for k, v in enumerate(pos) if v)
        acc += S / 2 * H.down(x - 1)
        for k in range(1, x // 2 + 1):
            acc += neg(k) / 2 * H.down(x - 2 * k)
        r = abs(to_float(acc - H.down(x)))
        if r > worst_a:
            worst_a, at_a = r, x
    # (b)
    worst_b, at_b = 0.0, (0, 0)
    partial = [0]
    for k in range(1, p_max + 2):
        partial.append(partial[-1] + neg(k))
    for p in range(1, p_max + 1):
        up_part = sum(v * H.up(p + 2 * k) for k, v in enumerate(pos) if v)
        for l in range(1, p + 1):
            acc = up_part
            for floor in (p - l, l - 1):
                # explicit while p+2k > floor, i.e. k < (p-floor)/2
                kmax = 0
                s = 0
                while p - 2 * (kmax + 1) > floor:
                    kmax += 1
                    s += neg(kmax) * H.up(p - 2 * kmax)
                rest = S - partial[kmax]
                acc += (s + rest * H.up(floor)) / 2
            r = abs(to_float(acc - H.up(p)))
            if r > worst_b:
                worst_b, at_b = r, (p, l)
    # (c)
    res_c = 0.0
    if q is not None and c is not None:
        total = sum(v * c ** (k - 1) * H.up(2 * k - 1) for k, v in q.items())
        res_c = abs(to_float(total - 1))
    return IdentityReport(worst_a, at_a, worst_b, at_b, res_c, tol)


def first_face_law(q, c, H: RenewalFunctions) -> Dict[int, object]:
    """``P(first simple peel reveals a 2k-gon) = q_k c^{k-1} H_up(2k-1)``."""
    return {k: v * c ** (k - 1) * H.up(2 * k - 1) for k, v in q.items()}


# ---------------------------------------------------------------------------
# Doob transforms

def doob_step(h: Callable[[int], float], kernel: Callable[[int], Iterable[Tuple[int, float]]],
              x: int, rng: np.random.Generator, tol: float = 1e-9) -> int:
    """One step of the ``h``-transform of ``kernel`` from state ``x``.

    ``kernel(x)`` yields ``(y, p(x, y))`` pairs covering every ``y`` with
    ``h(y) > 0``.  The step goes to ``y`` with probability
    ``h(y) p(x, y) / h(x)``.

    Raises
    ------
    NormalizationError
        When the transformed masses do not sum to one within ``tol``.
    """
    hx = h(x)
    if hx <= 0:
        raise ValueError(f"h({x}) = {hx} is not positive")
    ys, ws = [], []
    for y, p in kernel(x):
        hy = h(y)
        if hy > 0 and p > 0:
            ys.append(y)
            ws.append(float(p) * float(hy) / float(hx))
    total = math.fsum(ws)
    if abs(total - 1) > tol:
        raise NormalizationError(f"transformed masses at {x} sum to {total!r}")
    cum = np.cumsum(ws)
    i = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    return ys[min(i, len(ys) - 1)]


def mu_kernel(mu: MuMeasure, floor: int = 0):
    """Kernel of the ``mu``-walk restricted to targets ``>= floor``."""
    pos = mu.nu.pos

    def kernel(x):
        for k, v in enumerate(pos):
            if v:
                yield x + 2 * k, v
        yield x - 1, mu.S / 2
        for k in range(1, (x - floor) // 2 + 1):
            yield x - 2 * k, mu.nu(-k) / 2

    return kernel


class EChain:
    """``H_down``-transform of the ``mu``-walk, absorbed at 0.

    Per-state cumulative tables are built on first use and cached up to
    ``cache_max``; larger states are sampled from weights recomputed on the
    fly, since a table has ``O(E)`` entries.
    """

    cache_max = 4096

    def __init__(self, nu: NuMeasure, H: RenewalFunctions, tol: float = 1e-9):
        self.nu = nu
        self.H = H
        self.tol = tol
        self.S = to_float(nu.S_closed)
        self.up = [(k, to_float(v)) for k, v in enumerate(nu.pos) if v]
        self._tables: Dict[int, Tuple[list, List[int], List[int]]] = {}
        self._negs = np.zeros(0)
        self.max_residual = 0.0

    def _neg_upto(self, n: int) -> np.ndarray:
        """Float ``nu(-k)`` for ``1 <= k <= n`` (index ``k-1``)."""
        if len(self._negs) < n:
            m = max(n, 2 * len(self._negs))
            nu = self.nu
            ks = np.arange(1, m + 1)
            arr = np.asarray(nu.tail.value(ks), dtype=float)
            kk = min(nu.K, m)
            arr[:kk] = nu.neg_float()[:kk]
            self._negs = arr
        return self._negs[:n]

    def _weights(self, E: int):
        """Up-step targets and the unnormalised masses of all moves from ``E``."""
        H = self.H
        top = E + 2 * (len(self.nu.pos) - 1)
        H.down_float(top)
        down = H.down_f
        hE = down[E]
        up_t = [E + 2 * k for k, _ in self.up]
        up_w = [v * down[E + 2 * k] / hE for k, v in self.up]
        ks = np.arange(1, E // 2 + 1)
        dn_w = self._neg_upto(E // 2) / 2 * down[E - 2 * ks] / hE
        ws = np.concatenate([up_w, [self.S / 2 * down[E - 1] / hE], dn_w])
        total = math.fsum(ws)
        self.max_residual = max(self.max_residual, abs(total - 1))
        if abs(total - 1) > self.tol:
            raise NormalizationError(f"E-chain masses at {E} sum to {total!r}")
        return up_t, ws, total

    def table(self, E: int):
        """``(cumulative, targets, kinds)``; kind 1 marks the -1 step."""
        t = self._tables.get(E)
        if t is not None:
            return t
        up_t, ws, total = self._weights(E)
        ks = range(1, E // 2 + 1)
        targets = up_t + [E - 1] + [E - 2 * k for k in ks]
        kinds = [0] * len(up_t) + [1] + [0] * len(ks)
        t = ((np.cumsum(ws) / total).tolist(), targets, kinds)
        if E <= self.cache_max:
            self._tables[E] = t
        return t

    def _large_step(self, E: int, u: float, head: int = 64) -> Tuple[int, int]:
        """One step from an uncached state without materialising a table.

        Moves up, by ``-1`` and down by at most ``2 * head`` are weighted
        directly; the remaining mass is ``1`` minus theirs (the kernel is
        harmonic), so the ``O(E)`` pass only runs when ``u`` falls there.
        """
        H = self.H
        H.down_float(E + 2 * (len(self.nu.pos) - 1))
        down = H.down_f
        hE = down[E]
        acc = 0.0
        for k, v in self.up:
            acc += v * down[E + 2 * k] / hE
            if u < acc:
                return E + 2 * k, 0
        acc += self.S / 2 * down[E - 1] / hE
        if u < acc:
            return E - 1, 1
        ks = np.arange(1, head + 1)
        cum = acc + np.cumsum(self._neg_upto(head) / 2 * down[E - 2 * ks] / hE)
        i = int(np.searchsorted(cum, u, side="right"))
        if i < head:
            return E - 2 * (i + 1), 0
        ks = np.arange(head + 1, E // 2 + 1)
        rest = np.cumsum(self._neg_upto(E // 2)[head:] * down[E - 2 * ks])
        j = min(int(np.searchsorted(rest, (u - cum[-1]) / (1 - cum[-1]) * rest[-1], side="right")),
                len(ks) - 1)
        return E - 2 * int(ks[j]), 0

    def probabilities(self, E: int) -> Dict[int, float]:
        cum, targets, _ = self.table(E)
        probs = np.diff(np.concatenate([[0.0], np.asarray(cum)]))
        out: Dict[int, float] = {}
        for y, p in zip(targets, probs):
            out[y] = out.get(y, 0.0) + float(p)
        return out

    def step(self, E: int, u: float) -> Tuple[int, int]:
        if E > self.cache_max:
            return self._large_step(E, u)
        cum, targets, kinds = self.table(E)
        i = bisect.bisect_right(cum, u)
        i = min(i, len(targets) - 1)
        return targets[i], kinds[i]

    def run(self, rng: np.random.Generator, start: int = 1, budget: int = 10**6,
            trace: Optional[list] = None) -> Tuple[int, int]:
        """Run until absorption at 0; returns ``(D, tau)``.

        ``D`` counts the -1 steps and ``tau`` the number of steps.
        """
        E, D, tau = start, 0, 0
        tables = self._tables
        uniforms = rng.random(8).tolist()
        pos = 0
        while E > 0:
            if tau >= budget:
                raise BudgetExceeded(f"E-chain not absorbed after {budget} steps")
            if pos == len(uniforms):
                uniforms = rng.random(1024).tolist()
                pos = 0
            u = uniforms[pos]
            pos += 1
            if E > self.cache_max:
                y, kind = self._large_step(E, u)
            else:
                cum, targets, kinds = tables.get(E) or self.table(E)
                i = bisect.bisect_right(cum, u)
                if i >= len(targets):
                    i = len(targets) - 1
                y, kind = targets[i], kinds[i]
            if trace is not None:
                trace.append((E, y, u))
            D += kind
            tau += 1
            E = y
        return D, tau
