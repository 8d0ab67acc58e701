"""Identity and Monte Carlo checks shared by ``verify`` and ``report``.

Every check returns a :class:`Check` row with the schema
``{check, target, value, tolerance, pass}``.  Deterministic residual checks
compare ``value`` to ``tolerance``; Monte Carlo checks compare a z-score or a
distance and say so in ``detail``.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy import stats

from .halfplane import (DanglingSampler, SimpleStepSampler, TildeLaw, sum_to_one_residual,
                        prob_gulp_positive)
from .peel_engine import (EChain, Explorer, FiniteTransitions, FreePerimeter, NuLaw,
                          check_structure, run_A_core)
from .percolation import thresholds
from .simple_enum import core_perimeter_pmf, invert_boundary, ratio_diagnostics
from .walks import check_H_identities, h_down_nu_form, renewal_functions
from .weights import (criticality_report, exposure_closed_form, nu_measure, solve_disk,
                      to_float)


@dataclass
class Check:
    check: str
    target: str
    value: str
    tolerance: str
    passed: bool
    detail: str = ""

    def row(self) -> Dict[str, object]:
        return {"check": self.check, "target": self.target, "value": self.value,
                "tolerance": self.tolerance, "pass": self.passed}


def _fmt(x) -> str:
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def residual(name: str, value, tol: float, target="0") -> Check:
    v = abs(to_float(value))
    return Check(name, str(target), _fmt(v), _fmt(tol), bool(v <= tol))


def agreement(name: str, value, target, tol: float) -> Check:
    d = abs(to_float(value) - to_float(target))
    return Check(name, _fmt(target), _fmt(value), _fmt(tol), bool(d <= tol))


def z_check(name: str, mean: float, se: float, target: float, sigmas: float = 3.0) -> Check:
    z = abs(mean - target) / se if se > 0 else (0.0 if mean == target else math.inf)
    return Check(name, _fmt(target), _fmt(mean), f"{sigmas}sigma", bool(z <= sigmas),
                 detail=f"se={se:.3g} z={z:.3f}")


def tv_distance(counts: Dict[int, int], pmf: Callable[[int], float]) -> float:
    """Total variation between empirical counts and a pmf on ``{1, 2, ...}``.

    Mass of the pmf on values never observed is added as one lump.
    """
    n = sum(counts.values())
    seen = 0.0
    tv = 0.0
    for k, c in counts.items():
        p = pmf(k)
        seen += p
        tv += abs(c / n - p)
    tv += max(0.0, 1.0 - seen)
    return tv / 2


class Model:
    """Lazily computed data of one weight sequence."""

    def __init__(self, q, L: int = 400, simple_L: int = 500, K: Optional[int] = None,
                 M: Optional[int] = None):
        self.q = q
        self.L = L
        self.simple_L = simple_L
        self.K = K
        self.M = M

    @cached_property
    def disk(self):
        return solve_disk(self.q, L=max(self.L, self.simple_L))

    @cached_property
    def nu(self):
        return nu_measure(self.disk, self.K)

    @cached_property
    def H(self):
        return renewal_functions(self.nu, self.disk, self.M)

    @cached_property
    def sdisk(self):
        return invert_boundary(self.disk, self.simple_L)

    @cached_property
    def tilde(self):
        return TildeLaw(self.nu, self.H)

    @cached_property
    def nu_law(self):
        return NuLaw(self.nu)

    @cached_property
    def finite_law(self):
        return FiniteTransitions(self.disk)

    @property
    def p(self) -> Optional[int]:
        ks = list(self.q.entries)
        return ks[0] if len(ks) == 1 else None


# ---------------------------------------------------------------------------
# deterministic checks

QUADRANGULATION_NU = {-1: Fraction(1, 4), -2: Fraction(1, 24), -3: Fraction(1, 64),
                      -4: Fraction(1, 128)}


def quadrangulation_nu_oracle(kmax: int) -> List[float]:
    """``nu(-k)`` as the coefficient of ``x^k`` in
    ``N(x) = (x - 2/3 + (2/3)(1-x)^{3/2}) / x``.

    For ``k >= 1`` that is ``(2/3)`` times the coefficient of ``x^{k+1}`` in
    ``(1-x)^{3/2}``.
    """
    out = []
    coef = Fraction(1)
    for n in range(1, kmax + 2):
        coef = coef * (Fraction(3, 2) - (n - 1)) / n * -1
        if n >= 2:
            out.append(float(Fraction(2, 3) * coef))
    return out


def threshold_checks(model: Model) -> List[Check]:
    rep = thresholds(model.nu)
    s = rep.as_strings()
    line = f"{s['site']} {s['bond']} {s['face']}"
    out = [Check("thresholds", "closed form", line, "exact", True)]
    known = {2: "5/9 1/3 3/4", 3: "76/125 5/11 11/16", 4: "5197/8085 11/21 21/32"}
    if model.p in known:
        out[0] = Check("thresholds", known[model.p], line, "exact", line == known[model.p])
    return out


def exposure_checks(model: Model, tol: Optional[float] = None) -> List[Check]:
    nu = model.nu
    out = []
    if model.p is not None:
        out.append(agreement("exposure closed form", nu.exposure, exposure_closed_form(model.p),
                             1e-10 if tol is None else tol))
    out.append(residual("exposure = 2 gulp + 1", to_float(nu.exposure) - 2 * nu.gulp - 1,
                        1e-8 if tol is None else tol))
    return out


def nu_checks(model: Model, tol: Optional[float] = None) -> List[Check]:
    nu = model.nu
    t = (lambda x: x if tol is None else tol)
    rep = criticality_report(nu, tutte_lmax=50)
    out = [residual("nu normalisation", rep.normalization_residual, t(1e-8)),
           residual("nu mean", rep.mean_residual, t(1e-6)),
           agreement("nu(-1) = 2/c", nu.nu_minus_one, 2 / nu.c, t(1e-10)),
           residual("Tutte residual (l <= 50)", rep.tutte_residual_max, t(1e-8))]
    if model.p == 2:
        oracle = quadrangulation_nu_oracle(4)
        for k, ref in QUADRANGULATION_NU.items():
            out.append(agreement(f"nu({k})", nu(k), ref, t(1e-10)))
            out.append(agreement(f"nu({k}) series oracle", nu(k), oracle[-k - 1], t(1e-10)))
    return out


def renewal_checks(model: Model, tol: Optional[float] = None) -> List[Check]:
    t = (lambda x: x if tol is None else tol)
    nu, H = model.nu, model.H
    dual = h_down_nu_form(nu, 101)
    worst = max(abs(to_float(H.down(l)) - to_float(dual[l])) for l in range(101))
    rep = check_H_identities(nu, H, p_max=40, q=model.q, c=model.disk.c)
    return [residual("H_down dual formulas (l <= 100)", worst, t(1e-10)),
            residual("H_down harmonic (x <= 40)", rep.harmonic_down_max, t(1e-10)),
            residual("h-transform sum to one (p <= 40)", rep.sum_to_one_max, t(1e-10)),
            residual("sum q_k c^(k-1) H_up(2k-1) = 1", rep.first_face_sum_residual, t(1e-10)),
            residual("tilde law sum to one (p <= 40)", sum_to_one_residual(model.tilde, 40), t(1e-10))]


def simple_series_checks(model: Model, tol: Optional[float] = None) -> List[Check]:
    t = (lambda x: x if tol is None else tol)
    sd = model.sdisk
    out = []
    if model.p == 2 and model.disk.exact:
        head = [str(v) for v in sd.hatW[:4]]
        target = ["1", "4/3", "4/9", "16/27"]
        out.append(Check("simple disk Wh(0..3)", " ".join(target), " ".join(head), "exact",
                         head == target))
    out.append(agreement("sum Wh(l) / hat_c^l = W_c", sd.generating_value(), model.disk.W_c,
                         t(1e-6)))
    rat = ratio_diagnostics(sd.hatW[:201], sd.hat_c)
    out.append(agreement("Wh ratio at L=200", rat.last, sd.hat_c, 0.1 if tol is None else tol))
    out.append(agreement("P(right gulp > 0) = 1/hat_c", prob_gulp_positive(model.nu),
                         1 / sd.hat_c, t(1e-8)))
    return out


# ---------------------------------------------------------------------------
# Monte Carlo checks

def core_law_check(model: Model, n: int, rng: np.random.Generator, tv_tol: float = 0.005,
                   budget: int = 10**6) -> List[Check]:
    chain = EChain(model.nu, model.H)
    counts: Dict[int, int] = {}
    for _ in range(n):
        l = run_A_core(chain, rng, budget=budget).core_half_perimeter
        counts[l] = counts.get(l, 0) + 1
    law = core_perimeter_pmf(model.sdisk, lmax=min(model.sdisk.L, 500), warn_tail=1.0)
    cond = law.conditioned_nonvertex()

    def pmf(l):
        return float(cond[l - 1]) if l - 1 < len(cond) else 0.0

    tv = tv_distance(counts, pmf)
    p1 = counts.get(1, 0) / n
    return [Check("core perimeter law TV", "0", _fmt(tv), _fmt(tv_tol), bool(tv < tv_tol),
                  detail=f"n={n}"),
            z_check("P(core half-perimeter = 1)", p1, math.sqrt(pmf(1) * (1 - pmf(1)) / n), pmf(1)),
            residual("E-chain table sums", chain.max_residual, 1e-9)]


def simple_step_checks(model: Model, n: int, rng: np.random.Generator,
                       progress: Optional[Callable[[int], None]] = None) -> List[Check]:
    sampler = SimpleStepSampler(model.disk, model.nu, model.H, law=model.tilde)
    gl = np.empty(n)
    gr = np.empty(n)
    ex = np.empty(n)
    balance_bad = 0
    for i in range(n):
        s = sampler.sample(rng)
        gl[i], gr[i], ex[i] = s.gulp_left, s.gulp_right, s.exposure
        if progress and i % 1000 == 0:
            progress(i)
    g = to_float(model.nu.gulp_closed)
    e = to_float(model.nu.exposure)
    ppos = to_float(1 / model.sdisk.hat_c)
    se = (lambda a: float(a.std(ddof=1) / math.sqrt(len(a))))
    pos = (gr > 0).astype(float)
    two = stats.mannwhitneyu(gl, gr, alternative="two-sided")
    return [z_check("E[right gulp]", float(gr.mean()), se(gr), g),
            z_check("E[left gulp]", float(gl.mean()), se(gl), g),
            z_check("E[exposure]", float(ex.mean()), se(ex), e),
            z_check("P(right gulp > 0)", float(pos.mean()), math.sqrt(ppos * (1 - ppos) / n), ppos),
            Check("left/right gulp two-sample test", "p >= 0.01", _fmt(two.pvalue), "0.01",
                  bool(two.pvalue >= 0.01), detail=f"escalations={sampler.escalations}"),
            residual("tilde law table sums", model.tilde.max_residual, 1e-9)]


def dangling_checks(model: Model, n: int, rng: np.random.Generator, tv_tol: float = 0.01,
                    indices=(2, 3, 4, -1, -2, -3)) -> List[Check]:
    sampler = DanglingSampler(model.disk, model.tilde, indices=indices)
    counts: Dict[int, int] = {}
    got = 0
    while got < n:
        for l in sampler.sample(rng):
            counts[l] = counts.get(l, 0) + 1
            got += 1
    free = FreePerimeter(model.disk)
    tv = tv_distance(counts, free.pmf)
    return [Check("dangling component law TV", "0", _fmt(tv), _fmt(tv_tol), bool(tv < tv_tol),
                  detail=f"n={got}")]


def structure_checks(model: Model, rng: np.random.Generator, radius: int = 3,
                     replicas: int = 20) -> List[Check]:
    fails = 0
    first = None
    modes = [("finite", None), ("halfplane-general", model.nu_law), ("halfplane-tilde", model.tilde)]
    for mode, law in modes:
        for _ in range(replicas):
            ex = Explorer(mode, model.disk, rng, law=law, finite_law=model.finite_law,
                          perimeter=1)
            try:
                check_structure(ex.grow(math.inf if mode == "finite" else radius))
            except Exception as exc:  # noqa: BLE001 - any failure is reported
                fails += 1
                first = first or f"{mode}: {exc}"
    out = [Check("map structure (Euler, bipartite, simple holes)", "0 failures", str(fails), "0",
                 fails == 0, detail=first or "")]
    out.append(residual("finite peeling table sums", model.finite_law.max_residual, 1e-9))
    return out


def reproducibility_check(model: Model, seed: int, radius: int = 4) -> Check:
    def run():
        rng = np.random.default_rng(seed)
        ex = Explorer("halfplane-tilde", model.disk, rng, law=model.tilde,
                      finite_law=model.finite_law)
        ball = ex.grow(radius)
        chain = EChain(model.nu, model.H)
        cores = [run_A_core(chain, rng).D for _ in range(50)]
        return (ball.steps, len(ball.pmap.org), tuple(ball.inner_face_degrees()), tuple(cores))

    same = run() == run()
    return Check("seed reproducibility", "identical", "identical" if same else "different", "exact",
                 same)


@dataclass
class SuiteResult:
    checks: List[Check] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def first_failure(self) -> Optional[Check]:
        return next((c for c in self.checks if not c.passed), None)


def run_suite(model: Model, seed_seq: np.random.SeedSequence, tol: Optional[float] = None,
              core_runs: int = 10**6, peel_samples: int = 10**5, dangling_samples: int = 10**5,
              mc: bool = True, log: Optional[Callable[[str], None]] = None) -> SuiteResult:
    """Run the identity suite; Monte Carlo groups draw from spawned streams."""
    res = SuiteResult()
    streams = seed_seq.spawn(5)
    groups = [("thresholds", lambda: threshold_checks(model)),
              ("exposure", lambda: exposure_checks(model, tol)),
              ("nu", lambda: nu_checks(model, tol)),
              ("renewal", lambda: renewal_checks(model, tol)),
              ("simple series", lambda: simple_series_checks(model, tol))]
    if mc:
        # TV noise shrinks like n^{-1/2}; tolerances follow reduced sample sizes
        groups += [
            ("core law", lambda: core_law_check(
                model, core_runs, np.random.default_rng(streams[0]),
                tv_tol=0.005 * max(1.0, math.sqrt(10**6 / core_runs)))),
            ("simple step", lambda: simple_step_checks(
                model, peel_samples, np.random.default_rng(streams[1]))),
            ("dangling", lambda: dangling_checks(
                model, dangling_samples, np.random.default_rng(streams[2]),
                tv_tol=0.01 * max(1.0, math.sqrt(10**5 / dangling_samples)))),
        ]
    groups += [("structure", lambda: structure_checks(model, np.random.default_rng(streams[3]))),
               ("reproducibility", lambda: [reproducibility_check(
                   model, int(streams[4].generate_state(1)[0]))])]
    for name, fn in groups:
        t0 = time.perf_counter()
        if log:
            log(f"running {name} checks")
        try:
            res.checks.extend(fn())
        except Exception as exc:  # noqa: BLE001 - a crashing check is a failing check
            res.checks.append(Check(name, "no error", f"{type(exc).__name__}: {exc}", "-", False))
        res.timings[name] = time.perf_counter() - t0
    return res
