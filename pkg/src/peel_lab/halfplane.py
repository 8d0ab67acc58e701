"""Half-plane maps with an infinite simple core, their core and one simple
peeling step.

The h-transformed half-plane law is grown by metric peeling with transitions
reweighted by the renewal function ``H_up`` of the exposed length.  Its
boundary decomposes into an infinite simple core and finite components
hanging off every core vertex; the core is the half-plane map with a simple
boundary.  The first face revealed on the root edge is also the first face
of one simple peeling step of that core, so the simple gulps and exposure can
be read off a constructed map.

Root-face positions: the root-face darts are ``V_i`` (``i`` in ``Z``) from
left to right, ``s_i = org(V_i)``; the root edge is ``V_0`` from ``s_0`` to
the origin ``s_1``.  Core vertices are indexed the same way, ``b_0 = s_0``
and ``b_1 = s_1``.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .peel_engine import (BudgetExceeded, Explorer, FiniteTransitions, FreePerimeter, NegativeJumps,
                          PlanarMapBall, ScaledDisk, StructureError)
from .walks import ConsistencyError, NormalizationError, RenewalFunctions
from .weights import DiskData, NuMeasure, to_float


class IndeterminateError(RuntimeError):
    """The explored ball is too small to decide the requested quantity."""


# ---------------------------------------------------------------------------
# the h-transformed transition law

class TildeLaw:
    """Exposed-boundary peeling conditioned through ``H_up``.

    With exposed length ``p`` and peel position ``j`` (0-based from the left):

    * ``("C", k)`` has mass ``nu(k-1) H_up(p+2k-2) / H_up(p)``;
    * ``("R", k)`` identifies with the dart ``2k+1`` steps to the right and
      has mass ``nu(-k-1)/2 H_up(p_new) / H_up(p)``, where ``p_new`` is
      ``p-2k-2`` when the partner is exposed and ``j`` when it lies on the
      root face;
    * ``("L", k)`` is symmetric with ``p_new = p-1-j`` beyond the left end.
    """

    exposed_only = True

    def __init__(self, nu: NuMeasure, H: RenewalFunctions,
                 neg: Optional[NegativeJumps] = None, tol: float = 1e-9):
        self.nu = nu
        self.H = H
        self.neg = neg or NegativeJumps(nu)
        self.pos = [(k + 1, to_float(v)) for k, v in enumerate(nu.pos) if v]
        self.kmax = max(k for k, _ in self.pos)
        self.tol = tol
        self.max_residual = 0.0
        self._cache: Dict[Tuple[int, int], tuple] = {}

    def _up(self, n: int) -> np.ndarray:
        self.H.up_float(n)
        return self.H.up_f

    def masses(self, p: int, j: int):
        """Event list and masses (C events, in-range R, in-range L, and the two
        aggregated root-face swallows)."""
        if p < 1 or not 0 <= j < p:
            raise ValueError(f"invalid state p={p}, j={j}")
        up = self._up(p + 2 * self.kmax)
        hp = up[p]
        neg = self.neg.vals
        c_events = [("C", k) for k, _ in self.pos]
        c_mass = np.array([v * up[p + 2 * k - 2] / hp for k, v in self.pos])
        k0r = (p - j) // 2
        k0l = (j + 1) // 2
        kr = np.arange(k0r)
        kl = np.arange(k0l)
        r_mass = neg[kr] / 2 * up[p - 2 * kr - 2] / hp
        l_mass = neg[kl] / 2 * up[p - 2 * kl - 2] / hp
        r_beyond = up[j] / hp * 0.5 * self.neg.suffix(k0r + 1)
        l_beyond = up[p - 1 - j] / hp * 0.5 * self.neg.suffix(k0l + 1)
        return c_events, c_mass, r_mass, l_mass, r_beyond, l_beyond, k0r, k0l

    def total(self, p: int, j: int) -> float:
        _, c, r, l, rb, lb, _, _ = self.masses(p, j)
        return math.fsum(c) + math.fsum(r) + math.fsum(l) + rb + lb

    def _table(self, p: int, j: int):
        key = (p, j)
        t = self._cache.get(key)
        if t is not None:
            return t
        c_events, c, r, l, rb, lb, k0r, k0l = self.masses(p, j)
        parts = [math.fsum(c), math.fsum(r), math.fsum(l), rb, lb]
        total = math.fsum(parts)
        res = abs(total - 1)
        if res > self.max_residual:
            self.max_residual = res
        if res > self.tol:
            raise NormalizationError(f"h-transformed masses at p={p}, j={j} sum to {total!r}")
        t = (c_events, np.cumsum(c).tolist(), np.cumsum(r), np.cumsum(l), parts, total, k0r, k0l)
        if p <= 128:
            self._cache[key] = t
        return t

    def sample(self, p: int, j: int, rng: np.random.Generator) -> tuple:
        c_events, c_cum, r_cum, l_cum, parts, total, k0r, k0l = self._table(p, j)
        u = rng.random() * total
        for which, mass in enumerate(parts):
            if u < mass or which == 4:
                break
            u -= mass
        if which == 0:
            i = bisect.bisect_right(c_cum, u)
            return c_events[min(i, len(c_events) - 1)]
        if which in (1, 2):
            cum = r_cum if which == 1 else l_cum
            i = int(np.searchsorted(cum, u, side="right"))
            return ("R" if which == 1 else "L", min(i, len(cum) - 1))
        k0 = k0r if which == 3 else k0l
        k = self.neg.sample(k0 + 1, rng.random(), rng) - 1
        return ("R" if which == 3 else "L", k)


def mtilde_peel_step(law: TildeLaw, p: int, j: int, rng: np.random.Generator) -> tuple:
    """One h-transformed peeling event at exposed length ``p``, position ``j``."""
    return law.sample(p, j, rng)


def sum_to_one_residual(law: TildeLaw, p_max: int = 40) -> float:
    """Largest ``|total mass - 1|`` over ``1 <= p <= p_max`` and all positions."""
    worst = 0.0
    for p in range(1, p_max + 1):
        for j in range(p):
            worst = max(worst, abs(law.total(p, j) - 1))
    return worst


def face_degree_law(nu: NuMeasure, H: RenewalFunctions) -> Dict[int, float]:
    """Law of the half-degree of the first revealed face, ``nu(k-1) H_up(2k-1)``."""
    return {k + 1: to_float(v) * H.up_float(2 * k + 1) for k, v in enumerate(nu.pos) if v}


def run_A_metric(radius: float, rng: np.random.Generator, disk: DiskData, law: TildeLaw,
                 budget: int = 10**7, keep_trace: bool = False,
                 finite_law: Optional[FiniteTransitions] = None) -> Explorer:
    """Grow the h-transformed half-plane ball of radius ``radius``.

    Returns the explorer so that callers can keep growing it; ``grow`` returns
    the current :class:`PlanarMapBall`.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    ex = Explorer("halfplane-tilde", disk, rng, law=law, budget=budget, keep_trace=keep_trace,
                  finite_law=finite_law)
    ex.grow(max(radius, 1))
    return ex


# ---------------------------------------------------------------------------
# core extraction

@dataclass
class CoreDecomposition:
    """Simple core of a boundary contour and the components hanging off it.

    Attributes
    ----------
    core : core boundary vertices in contour order, starting at the root edge
    components : ``(core index, half-perimeter, first position)`` per core vertex
        (half-perimeter 0 is the vertex map)
    """

    core: List[int]
    components: List[Tuple[int, int, int]]

    @property
    def dangling(self) -> List[Tuple[int, int, int]]:
        """Components that are not the vertex map."""
        return [c for c in self.components if c[1] > 0]


def core_of_contour(contour: Sequence[int]) -> CoreDecomposition:
    """Core of a finite root-face contour with the root edge ``contour[0] -> contour[1]``.

    Every core vertex owns the stretch of contour between its first and last
    visits; that stretch is the component hanging off it.
    """
    n = len(contour)
    if n < 2 or n % 2:
        raise ValueError("contour length must be even and positive")
    s0 = contour[0]
    last: Dict[int, int] = {}
    for i in range(1, n):
        last[contour[i]] = i
    if contour[1] == s0:
        raise StructureError("root edge is a loop")
    core, comps = [], []
    x = 1
    # position n closes the cycle at the root vertex
    while x < n and contour[x] != s0:
        y = contour[x]
        if last.get(s0, 0) > x and last[y] > last[s0]:
            raise StructureError("contour is not a planar boundary walk")
        core.append(y)
        comps.append((len(core), (last[y] - x) // 2, x))
        x = last[y] + 1
    # the root vertex owns the remaining stretch up to the end of the contour
    core.insert(0, s0)
    comps.insert(0, (0, (n - x) // 2, x))
    return CoreDecomposition(core=core, components=comps)


def tree_on_digon_fixture() -> List[int]:
    """Root-face contour of a 2-gon with a 2-edge path hanging at the root origin.

    Vertices ``0`` (root tail), ``1`` (origin), ``2`` and ``3`` (the path).
    """
    return [0, 1, 2, 3, 2, 1]


class HalfPlaneCore:
    """Lazy core decomposition of a growing h-transformed half-plane ball.

    Root-face vertices are settled (their finite holes peeled away) only
    when queried, after which their positions on the root face are final.
    When a query needs more of the map, :class:`IndeterminateError` is raised
    and the caller can grow the explorer and retry; results cached so far
    stay valid.
    """

    def __init__(self, explorer: Explorer):
        if explorer.mode != "halfplane-tilde":
            raise ValueError("core extraction needs an h-transformed half-plane ball")
        self.ex = explorer
        self.m = explorer.m
        self._core: Dict[int, int] = {}        # core index -> vertex class
        self._index: Dict[int, int] = {}       # vertex class -> core index
        self._span: Dict[int, Tuple[int, int]] = {}
        self._exposed: Optional[Tuple[int, set]] = None

    # root-face sequence -------------------------------------------------------
    def position_dart(self, i: int) -> int:
        ex = self.ex
        if i == 0:
            return ex.root_chain[0]
        if i > 0:
            return ex.right_chain[i - 1]
        return ex.left_chain[-i - 1]

    def vertex_at(self, i: int) -> int:
        """Class of ``s_i``; raises when ``i`` is outside the explored window."""
        ex, m = self.ex, self.m
        if i < ex.lv + 1 or i > ex.rv:
            raise IndeterminateError(f"position {i} outside the explored root face")
        if i == ex.rv:
            return m.find(ex.right_anchor)
        return m.find(m.org[self.position_dart(i)])

    def exposed_vertices(self) -> set:
        ex, m = self.ex, self.m
        if self._exposed is not None and self._exposed[0] == ex.steps:
            return self._exposed[1]
        out = {m.find(ex.left_anchor), m.find(ex.right_anchor)}
        for d in ex.X:
            out.add(m.find(m.org[d]))
            out.add(m.find(m.hd[d]))
        # settling never touches the exposed boundary, so this is valid until
        # the explorer grows again
        self._exposed = (ex.steps, out)
        return out

    def settle(self, v: int) -> int:
        """Settle ``v``; raise when it is still on the exposed boundary."""
        ex, m = self.ex, self.m
        m.settle_vertex(v, ex.finite_law, ex.rng, budget=ex.budget)
        v = m.find(v)
        if v in self.exposed_vertices():
            raise IndeterminateError("vertex still on the exposed boundary")
        return v

    def span(self, v: int) -> Tuple[int, int]:
        """First and last root-face positions of the settled vertex ``v``."""
        v = self.settle(v)
        if v in self._span:
            return self._span[v]
        ex, m = self.ex, self.m
        find, org = m.find, m.org
        hits = [i for i in range(ex.lv + 1, ex.rv)
                if find(org[self.position_dart(i)]) == v]
        if not hits:
            raise ValueError("vertex is not on the root face")
        out = (hits[0], hits[-1])
        self._span[v] = out
        return out

    def is_root_face_vertex(self, v: int) -> bool:
        v = self.settle(v)
        ex, m = self.ex, self.m
        find, org = m.find, m.org
        return any(find(org[self.position_dart(i)]) == v for i in range(ex.lv + 1, ex.rv))

    # core walk --------------------------------------------------------------------
    def core_vertex(self, n: int) -> int:
        if n in self._core:
            return self._core[n]
        if n == 1 or n == 0:
            v = self.vertex_at(n)
            first, last = self.span(v)
            if (n == 1 and first != 1) or (n == 0 and last != 0):
                raise StructureError("root edge is not on the core")
        elif n > 1:
            _, last = self.span(self.core_vertex(n - 1))
            v = self.vertex_at(last + 1)
        else:
            first, _ = self.span(self.core_vertex(n + 1))
            v = self.vertex_at(first - 1)
        v = self.settle(v)
        self._core[n] = v
        self._index[v] = n
        return v

    def component(self, n: int) -> int:
        """Half-perimeter of the component hanging off core vertex ``n``."""
        first, last = self.span(self.core_vertex(n))
        return (last - first) // 2

    def core_index(self, v: int) -> Optional[int]:
        """Core index of a settled root-face vertex, ``None`` if ``v`` is interior."""
        v = self.settle(v)
        if v in self._index:
            return self._index[v]
        if not self.is_root_face_vertex(v):
            return None
        first, last = self.span(v)
        if first >= 1:
            n = 1
            while True:
                u = self.core_vertex(n)
                if u == v:
                    return n
                if self.span(u)[1] >= first:
                    raise StructureError("root-face vertex inside a dangling component")
                n += 1
        n = 0
        while True:
            u = self.core_vertex(n)
            if u == v:
                return n
            if self.span(u)[0] <= last:
                raise StructureError("root-face vertex inside a dangling component")
            n -= 1


def with_escalation(explorer: Explorer, query, radius: int, max_radius: int = 256,
                    log: Optional[list] = None):
    """Evaluate ``query()``, doubling the explored radius while it is indeterminate."""
    r = radius
    while True:
        try:
            return query(), r
        except IndeterminateError:
            if r >= max_radius:
                if log is not None:
                    log.append(("indeterminate", r))
                raise
            r *= 2
            explorer.grow(r)


def extract_core(ball: PlanarMapBall) -> CoreDecomposition:
    """Core decomposition of the root-face contour of a complete finite map."""
    if ball.mode != "finite":
        raise ValueError("use HalfPlaneCore for half-plane balls")
    if ball.pmap.holes:
        raise IndeterminateError("map still has unfilled holes")
    m = ball.pmap
    contour = [m.find(m.org[d]) for d in ball.root_chain]
    return core_of_contour(contour)


# ---------------------------------------------------------------------------
# one simple peeling step

@dataclass
class SimpleStepStats:
    """First simple peeling step: face half-degree, exposure and gulps."""

    k: int
    exposure: int
    gulp_left: int
    gulp_right: int

    def balance(self) -> int:
        """Change of the boundary length."""
        return self.exposure - 1 - self.gulp_left - self.gulp_right


def loop_erase(walk: Sequence[int]) -> List[int]:
    """Chronological loop erasure of a vertex walk."""
    out: List[int] = []
    where: Dict[int, int] = {}
    for v in walk:
        if v in where:
            cut = where[v]
            for u in out[cut + 1:]:
                del where[u]
            del out[cut + 1:]
        else:
            where[v] = len(out)
            out.append(v)
    return out


def first_peel_stats(face_walk: Sequence[int], core_index: Dict[int, int]) -> SimpleStepStats:
    """Gulps and exposure of the face glued on the root edge.

    Parameters
    ----------
    face_walk : vertices of the face contour from ``b_0`` to ``b_1`` going
        the long way round (not through the root edge)
    core_index : core index of every core boundary vertex of the walk
    """
    walk = list(face_walk)
    if core_index.get(walk[0]) != 0 or core_index.get(walk[-1]) != 1:
        raise ValueError("face walk must run from core vertex 0 to core vertex 1")
    idx = [core_index.get(v) for v in walk]
    on_core = [i for i in idx if i is not None]
    lo, hi = min(on_core), max(on_core)
    start = max(t for t, i in enumerate(idx) if i == lo)
    stop = min(t for t, i in enumerate(idx) if i == hi and t >= start)
    outer = loop_erase(walk[start:stop + 1])
    return SimpleStepStats(k=len(walk) // 2, exposure=len(outer) - 1,
                           gulp_left=-lo, gulp_right=hi - 1)


def figure_fixture() -> Tuple[List[int], Dict[int, int]]:
    """A face of degree 12 with exposure 4, right gulp 3 and left gulp 2.

    Core vertices are named by their index; ``z`` sits between ``b_-2`` and
    ``b_0``, ``y1, y2`` between ``b_1`` and ``b_4``, the outer path is
    ``b_4, o1, o2, o3, b_-2`` and ``x`` is a bridge hanging inside the face
    at ``o2`` (a pocket that loop erasure removes).
    """
    names = {"b0": 0, "b1": 1, "b4": 4, "b-2": -2}
    walk = ["b0", "z", "b-2", "o3", "o2", "x", "o2", "o1", "b4", "y2", "y1", "b1"]
    ids = {name: i for i, name in enumerate(dict.fromkeys(walk))}
    return [ids[v] for v in walk], {ids[k]: v for k, v in names.items()}


class SimpleStepSampler:
    """Measure first simple peeling steps on h-transformed half-plane balls."""

    def __init__(self, disk: DiskData, nu: NuMeasure, H: RenewalFunctions,
                 law: Optional[TildeLaw] = None, radius: int = 2, max_radius: int = 256,
                 budget: int = 10**7):
        self.disk = disk
        self.nu = nu
        self.H = H
        self.law = law or TildeLaw(nu, H)
        self.finite_law = FiniteTransitions(disk)
        self.radius = radius
        self.max_radius = max_radius
        self.budget = budget
        self.log: List[tuple] = []
        self.escalations = 0

    def _measure(self, core: HalfPlaneCore) -> SimpleStepStats:
        m, ex = core.m, core.ex
        f = m.faces[0]
        if m.twin[f[0]] != ex.root_chain[0]:
            raise StructureError("first face is not glued on the root edge")
        walk = [m.org[d] for d in f[1:]] + [m.hd[f[-1]]]
        walk = [core.settle(v) for v in walk]
        walk = [m.find(v) for v in walk]
        index = {}
        for v in set(walk):
            i = core.core_index(v)
            if i is not None:
                index[v] = i
        return first_peel_stats(walk, index)

    def sample(self, rng: np.random.Generator) -> SimpleStepStats:
        ex = run_A_metric(self.radius, rng, self.disk, self.law, budget=self.budget,
                          finite_law=self.finite_law)
        core = HalfPlaneCore(ex)
        stats, r = with_escalation(ex, lambda: self._measure(core), self.radius,
                                   self.max_radius, self.log)
        if r > self.radius:
            self.escalations += 1
        return stats


def simple_step_stats(sampler: SimpleStepSampler, n: int,
                      rng: np.random.Generator) -> List[SimpleStepStats]:
    """``n`` independent first simple peeling steps."""
    return [sampler.sample(rng) for _ in range(n)]


class DanglingSampler:
    """Half-perimeters of the components hanging off fixed core vertices."""

    def __init__(self, disk: DiskData, law: TildeLaw, indices: Sequence[int] = (2, -1),
                 radius: int = 2, max_radius: int = 256, budget: int = 10**7):
        self.disk = disk
        self.law = law
        self.finite_law = FiniteTransitions(disk)
        self.indices = tuple(indices)
        self.radius = radius
        self.max_radius = max_radius
        self.budget = budget
        self.log: List[tuple] = []

    def sample(self, rng: np.random.Generator) -> List[int]:
        ex = run_A_metric(self.radius, rng, self.disk, self.law, budget=self.budget,
                          finite_law=self.finite_law)
        core = HalfPlaneCore(ex)
        out, _ = with_escalation(ex, lambda: [core.component(n) for n in self.indices],
                                 self.radius, self.max_radius, self.log)
        return out


# ---------------------------------------------------------------------------
# the component at the root of a revealed face

def croot_weights(disk: DiskData, H: RenewalFunctions, k: int, lmax: int) -> np.ndarray:
    """Unnormalised law ``w(l) min(2k-1, 2l+1)`` of the root component, ``l <= lmax``."""
    if k < 1:
        raise ValueError("face half-degree must be >= 1")
    w = ScaledDisk(disk).array(lmax + 1)
    ls = np.arange(lmax + 1)
    return w * np.minimum(2 * k - 1, 2 * ls + 1)


def croot_normaliser(disk: DiskData, H: RenewalFunctions, k: int):
    """``W_c H_up(2k-1)`` (exact for rational disks)."""
    return disk.W_c * H.up(2 * k - 1)


def sample_C_root(k: int, disk: DiskData, H: RenewalFunctions, rng: np.random.Generator,
                  free: Optional[FreePerimeter] = None) -> Tuple[int, int]:
    """Sample the root component's half-perimeter and the blue-edge offset.

    The half-perimeter ``l`` has law ``w(l) min(2k-1, 2l+1) / (W_c H_up(2k-1))``;
    the offset is uniform on the ``min(2k-1, 2l+1)`` admissible slots.  By
    rejection from the free law: accept ``l`` with probability
    ``min(2k-1, 2l+1) / (2k-1)``.
    """
    if k < 1:
        raise ValueError("face half-degree must be >= 1")
    free = free or FreePerimeter(disk)
    slots_max = 2 * k - 1
    while True:
        l = free.sample(rng)
        slots = min(slots_max, 2 * l + 1)
        if rng.random() * slots_max < slots:
            return l, int(rng.integers(slots))


def prob_gulp_positive(nu: NuMeasure, hat_c=None, tol: float = 1e-8):
    """``P(right simple gulp > 0) = S^2 / (2 nu(-1))``, checked against ``1/hat_c``."""
    S = nu.S_closed
    value = S * S / (2 * nu.nu_minus_one)
    if hat_c is not None:
        ref = 1 / hat_c
        if abs(to_float(value) - to_float(ref)) > tol:
            raise ConsistencyError(f"P(gulp>0)={to_float(value)!r} differs from 1/hat_c={to_float(ref)!r}")
    return value
