"""Lazy peeling: finite Boltzmann maps, the free law, the core exploration and
explicit map construction.

Maps are stored as darts (oriented edge sides).  Every dart knows its origin
and head vertex; gluing two darts identifies their endpoints crosswise, and
vertices live in a union-find structure so that identifications are cheap.
A hole is the cyclic list of unglued darts along its contour, ordered so that
the head of each dart is the origin of the next one.

Event conventions for a hole contour ``b_0 .. b_{2L-1}`` peeled at ``b_0``:

* ``("C", k)`` glues a new ``2k``-gon on ``b_0``; its other ``2k-1`` sides
  replace ``b_0`` in the contour.
* ``("G", k1, k2)`` glues ``b_0`` to ``b_{2 k1 + 1}``, leaving holes
  ``b_1 .. b_{2 k1}`` and ``b_{2 k1 + 2} .. b_{2L-1}``.

Finite holes are filled lazily: a hole is peeled only once one of its
boundary vertices is closer to the origin than the region that still matters.
Unfilled holes keep their exact Boltzmann law, so laziness introduces no bias.
"""
from __future__ import annotations

import bisect
import heapq
import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import mpmath
import numpy as np

from .weights import DiskData, NuMeasure, to_float
from .walks import BudgetExceeded, EChain, NormalizationError

INF = 1 << 60
ROOT_FACE = -1


class TruncationError(RuntimeError):
    """A transition needed disk data beyond the configured ceiling."""


class StructureError(RuntimeError):
    """A constructed map violates a structural invariant."""


# ---------------------------------------------------------------------------
# transition laws

class ScaledDisk:
    """``w(n) = W^(n) c^{-n}`` as floats, extended with the tail model.

    ``w(n) = nu(-n-1) c / 2``, so the tail of ``nu`` gives the tail of ``w``.
    """

    def __init__(self, disk: DiskData, ceiling: int = 10**6):
        self.c = to_float(disk.c)
        self.disk = disk
        self.ceiling = ceiling
        self.values = np.array([to_float(v) for v in disk.neg_nu]) * self.c / 2
        self.Wc = to_float(disk.W_c)

    def __call__(self, n: int) -> float:
        if n < len(self.values):
            return float(self.values[n])
        if n > self.ceiling:
            raise TruncationError(f"perimeter {2 * n} exceeds the ceiling")
        return float(self.disk.tail.value(n + 1)) * self.c / 2

    def array(self, n: int) -> np.ndarray:
        """``w(0..n-1)``."""
        if n <= len(self.values):
            return self.values[:n]
        if n - 1 > self.ceiling:
            raise TruncationError(f"perimeter {2 * (n - 1)} exceeds the ceiling")
        extra = np.asarray(self.disk.tail.value(np.arange(len(self.values) + 1, n + 1)),
                           dtype=float) * self.c / 2
        self.values = np.concatenate([self.values, extra])
        return self.values[:n]


class FiniteTransitions:
    """Peeling law inside a hole of half-perimeter ``L``.

    ``C_k`` has mass ``q_k W^(L+k-1) / W^(L)`` and ``G(k1, k2)`` with
    ``k1 + k2 = L - 1`` has mass ``W^(k1) W^(k2) / W^(L)``.
    """

    def __init__(self, disk: DiskData, tol: float = 1e-9):
        self.disk = disk
        self.w = ScaledDisk(disk)
        self.pos = [(k + 1, to_float(v)) for k, v in enumerate(disk.pos_nu) if v]
        self.tol = tol
        self._cache: Dict[int, Tuple[list, list]] = {}
        self.max_residual = 0.0

    def exact_masses(self, L: int) -> Dict[tuple, object]:
        """Masses as exact Fractions (rational disks, small ``L``)."""
        W, q = self.disk.W, self.disk.q
        out = {}
        for k, v in q.items():
            out[("C", k)] = v * W[L + k - 1] / W[L]
        for k1 in range(L):
            out[("G", k1, L - 1 - k1)] = W[k1] * W[L - 1 - k1] / W[L]
        return out

    def table(self, L: int):
        t = self._cache.get(L)
        if t is not None:
            return t
        w = self.w
        wL = w(L)
        events, masses = [], []
        for k, v in self.pos:  # v = nu(k-1) = q_k c^{k-1}
            events.append(("C", k))
            masses.append(v * w(L + k - 1) / wL)
        arr = w.array(L)
        g = arr * arr[::-1] / (w.c * wL)
        masses = np.concatenate([masses, g])
        events += [("G", k1, L - 1 - k1) for k1 in range(L)]
        total = math.fsum(masses)
        self.max_residual = max(self.max_residual, abs(total - 1))
        if abs(total - 1) > self.tol:
            raise NormalizationError(f"finite peeling masses at L={L} sum to {total!r}")
        cum = (np.cumsum(masses) / total).tolist()
        t = (cum, events)
        if L <= 4096:
            self._cache[L] = t
        return t

    def sample(self, L: int, u: float) -> tuple:
        cum, events = self.table(L)
        i = bisect.bisect_right(cum, u)
        return events[min(i, len(events) - 1)]


def finite_peel_step(L: int, disk: DiskData, rng: np.random.Generator,
                     law: Optional[FiniteTransitions] = None) -> tuple:
    """Sample one peeling event in a hole of half-perimeter ``L >= 1``."""
    if L < 1:
        raise ValueError("half-perimeter must be >= 1")
    law = law or FiniteTransitions(disk)
    return law.sample(L, rng.random())


class FreePerimeter:
    """Sampler of ``P(l) = W^(l) c^{-l} / W_c`` (``l = 0`` is the vertex map)."""

    def __init__(self, disk: DiskData):
        self.disk = disk
        w = ScaledDisk(disk)
        self.probs = w.array(disk.L + 1) / w.Wc
        self.cum = np.cumsum(self.probs)
        self.tail_mass = max(0.0, 1.0 - float(self.cum[-1]))
        self.tail = disk.tail
        self.c = w.c
        self.Wc = w.Wc
        self.tail_draws = 0

    def pmf(self, l: int) -> float:
        if l < len(self.probs):
            return float(self.probs[l])
        return float(self.tail.value(l + 1)) * self.c / 2 / self.Wc

    def sample(self, rng: np.random.Generator) -> int:
        u = rng.random()
        if u < self.cum[-1]:
            return int(np.searchsorted(self.cum, u, side="right"))
        self.tail_draws += 1
        # -5/2 power tail beyond the table, inverse CDF of the continuous model
        n0 = len(self.probs)
        v = rng.random()
        return int(math.floor((n0 + 0.5) * (1 - v) ** (-2.0 / 3.0) - 0.5))


def sample_free_perimeter(disk: DiskData, rng: np.random.Generator,
                          sampler: Optional[FreePerimeter] = None) -> int:
    """Half-perimeter of a free Boltzmann map."""
    return (sampler or FreePerimeter(disk)).sample(rng)


@dataclass
class CoreRun:
    D: int
    tau: int
    trace: Optional[list] = None

    @property
    def core_half_perimeter(self) -> int:
        return (self.D + 1) // 2


def run_A_core(chain: EChain, rng: np.random.Generator, budget: int = 10**6,
               keep_trace: bool = False) -> CoreRun:
    """Core exploration of a free map conditioned not to be the vertex map.

    Simulates the exposed length from ``E = 1`` until absorption at 0 and
    counts the ``-1`` steps ``D``; the core has perimeter ``D + 1``.
    """
    trace = [] if keep_trace else None
    D, tau = chain.run(rng, start=1, budget=budget, trace=trace)
    if D % 2 != 1:
        raise StructureError(f"core exploration produced even D={D}")
    return CoreRun(D, tau, trace)


class NegativeJumps:
    """Sampler of ``k >= k0`` with probability proportional to ``nu(-k)``."""

    def __init__(self, nu: NuMeasure, table_size: int = 100000):
        K = nu.K
        ks = np.arange(1, table_size + 1)
        vals = np.asarray(nu.tail.value(ks), dtype=float)
        vals[:K] = nu.neg_float()[:K]
        self.vals = vals
        self.cum = np.concatenate([[0.0], np.cumsum(vals)])
        t = nu.tail
        with mpmath.workdps(20):
            self.beyond = float(sum(a * mpmath.zeta(-t.exponent + j, table_size + 1)
                                    for j, a in enumerate(t.coefficients)))
        self.size = table_size
        self.total = float(self.cum[-1]) + self.beyond
        self.tail_draws = 0

    def value(self, k: int) -> float:
        return float(self.vals[k - 1]) if k <= self.size else 0.0

    def suffix(self, k0: int) -> float:
        """``nu((-inf, -k0])``."""
        if k0 <= 1:
            return self.total
        if k0 > self.size:
            return self.beyond * ((self.size + 1) / k0) ** 1.5
        return self.total - float(self.cum[k0 - 1])

    def sample(self, k0: int, u: float, rng: np.random.Generator) -> int:
        k0 = max(k0, 1)
        base = float(self.cum[k0 - 1]) if k0 <= self.size else float(self.cum[-1])
        target = base + u * self.suffix(k0)
        if k0 <= self.size and target < self.cum[-1]:
            k = int(np.searchsorted(self.cum, target, side="right"))
            return max(k, k0)
        self.tail_draws += 1
        start = max(k0, self.size + 1)
        return int(math.floor((start - 0.5) * (1 - rng.random()) ** (-2.0 / 3.0) + 0.5))


class NuLaw:
    """Half-plane peeling with the plain ``nu`` transitions.

    Events: ``("C", k)`` with mass ``nu(k-1)``; ``("R", k)`` and ``("L", k)``
    (identification to the right / left enclosing a hole of perimeter
    ``2k``) with mass ``nu(-k-1)/2`` each.
    """

    exposed_only = False

    def __init__(self, nu: NuMeasure, neg: Optional[NegativeJumps] = None):
        self.nu = nu
        self.neg = neg or NegativeJumps(nu)
        self.pos = [(k + 1, to_float(v)) for k, v in enumerate(nu.pos) if v]
        self.c_mass = math.fsum(v for _, v in self.pos)
        self.c_cum = np.cumsum([v for _, v in self.pos]).tolist()

    def sample(self, p: int, j: int, rng: np.random.Generator) -> tuple:
        u = rng.random() * (self.c_mass + self.neg.total)
        if u < self.c_mass:
            i = bisect.bisect_right(self.c_cum, u)
            return ("C", self.pos[min(i, len(self.pos) - 1)][0])
        side = "R" if rng.random() < 0.5 else "L"
        k = self.neg.sample(1, rng.random(), rng) - 1
        return (side, k)


# ---------------------------------------------------------------------------
# the map structure

class PeelMap:
    """Darts, faces, vertex identifications and graph distances."""

    def __init__(self):
        self.org: List[int] = []
        self.hd: List[int] = []
        self.twin: List[int] = []
        self.face: List[int] = []
        self.faces: List[List[int]] = []
        self.parent: List[int] = []
        self.dist: List[int] = []
        self.inc: List[Optional[list]] = []
        self.holes_of: List[Optional[list]] = []
        self.root_index: Dict[int, int] = {}
        self.holes: Dict[int, deque] = {}
        self._next_hole = 0
        # entries (distance lower bound, sequence number, hole)
        self.heap: List[Tuple[int, int, int]] = []
        self._seq = 0
        self._stamp: Dict[int, int] = {}
        self.origin = -1
        self.root_dart = -1

    # vertices --------------------------------------------------------------
    def new_vertex(self, dist: int = INF) -> int:
        v = len(self.parent)
        self.parent.append(v)
        self.dist.append(dist)
        self.inc.append([])
        self.holes_of.append([])
        return v

    def find(self, v: int) -> int:
        parent = self.parent
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    def union(self, a: int, b: int) -> int:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if len(self.inc[ra]) < len(self.inc[rb]):
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.inc[ra].extend(self.inc[rb])
        self.holes_of[ra].extend(self.holes_of[rb])
        self.inc[rb] = None
        self.holes_of[rb] = None
        da, db = self.dist[ra], self.dist[rb]
        if db < da:
            self.dist[ra] = db
            self._decreased(ra)
        elif da < db:
            # vertices around rb may now be closer
            self._decreased(ra)
        return ra

    def _decreased(self, v: int):
        """Propagate a distance decrease at ``v`` (BFS relaxation)."""
        queue = deque([v])
        dist, find, org, hd = self.dist, self.find, self.org, self.hd
        holes, heap = self.holes, self.heap
        while queue:
            x = queue.popleft()
            dx = dist[x]
            for h in self.holes_of[x]:
                if h in holes:
                    self._push(dx, h)
            for d in self.inc[x]:
                o, t = find(org[d]), find(hd[d])
                w = t if o == x else o
                if dist[w] > dx + 1:
                    dist[w] = dx + 1
                    queue.append(w)

    def vdist(self, v: int) -> int:
        return self.dist[self.find(v)]

    # darts -------------------------------------------------------------------
    def new_dart(self, o: int, h: int, face: int) -> int:
        d = len(self.org)
        self.org.append(o)
        self.hd.append(h)
        self.twin.append(-1)
        self.face.append(face)
        self.inc[self.find(o)].append(d)
        self.inc[self.find(h)].append(d)
        return d

    def glue(self, d: int, e: int):
        if self.twin[d] != -1 or self.twin[e] != -1:
            raise StructureError(f"dart {d} or {e} already glued")
        self.twin[d] = e
        self.twin[e] = d
        self.union(self.org[d], self.hd[e])
        self.union(self.hd[d], self.org[e])

    def attach_face(self, b: int, k: int) -> List[int]:
        """Glue a new ``2k``-gon on the unglued dart ``b``; return its darts."""
        n = 2 * k
        a, z = self.hd[b], self.org[b]
        da, dz = self.vdist(a), self.vdist(z)
        verts = [a, z]
        for i in range(2, n):
            verts.append(self.new_vertex(min(dz + i - 1, da + n - i)))
        fid = len(self.faces)
        darts = [self.new_dart(verts[i], verts[(i + 1) % n], fid) for i in range(n)]
        self.faces.append(darts)
        self.twin[darts[0]] = b
        self.twin[b] = darts[0]
        return darts

    # holes ---------------------------------------------------------------------
    def new_hole(self, contour) -> Optional[int]:
        if not contour:
            return None
        h = self._next_hole
        self._next_hole += 1
        contour = contour if isinstance(contour, deque) else deque(contour)
        self.holes[h] = contour
        best = INF
        find, org, dist, holes_of = self.find, self.org, self.dist, self.holes_of
        for d in contour:
            v = find(org[d])
            holes_of[v].append(h)
            if dist[v] < best:
                best = dist[v]
        self._push(best, h)
        return h

    def _push(self, key: int, h: int):
        self._seq += 1
        heapq.heappush(self.heap, (key, self._seq, h))

    def _heap_top(self) -> Optional[Tuple[int, int]]:
        """Smallest valid (key, hole) entry, dropping dead or superseded ones."""
        heap, holes, stamp = self.heap, self.holes, self._stamp
        while heap:
            key, seq, h = heap[0]
            if h in holes and seq >= stamp.get(h, 0):
                return key, h
            heapq.heappop(heap)
        return None

    def min_hole_distance(self) -> int:
        top = self._heap_top()
        return top[0] if top else INF

    def _dart_low(self, d: int, target: int) -> bool:
        dist, find = self.dist, self.find
        return dist[find(self.org[d])] < target or dist[find(self.hd[d])] < target

    def low_position(self, h: int, target: int) -> Optional[int]:
        """A contour position touching a vertex at distance ``< target``.

        Looks near both ends of the contour first (where the previous peeling
        step left its low vertex) before scanning the whole contour.
        """
        contour = self.holes[h]
        n = len(contour)
        low = self._dart_low
        for i in range(min(n, 4)):
            if low(contour[i], target):
                return i
        for i in range(max(4, n - 4), n):
            if low(contour[i], target):
                return i
        for i, d in enumerate(contour):
            if low(d, target):
                return i
        return None

    def _rekey(self, h: int):
        """Replace all heap entries of ``h`` by its exact boundary distance."""
        self._stamp[h] = self._seq + 1
        self._push(self.hole_distance(h), h)

    def hole_distance(self, h: int) -> int:
        find, dist, org = self.find, self.dist, self.org
        return min(dist[find(org[d])] for d in self.holes[h])

    def peel_hole(self, h: int, law: FiniteTransitions, rng: np.random.Generator,
                  trace: Optional[list] = None, position: int = 0) -> tuple:
        """One peeling step in finite hole ``h`` at contour ``position``.

        After a swallow the larger of the two new holes keeps the id ``h``
        (and its deque), so peeling a big hole costs time proportional to the
        smaller pieces only.  Vertex-to-hole memberships may then be stale;
        readers check them.
        """
        contour = self.holes[h]
        if position:
            contour.rotate(-position)
        L = len(contour) // 2
        ev = law.sample(L, rng.random())
        if trace is not None:
            trace.append(("hole", L, ev))
        b = contour.popleft()
        if ev[0] == "C":
            darts = self.attach_face(b, ev[1])
            contour.extendleft(reversed(darts[1:]))
            find, holes_of, org = self.find, self.holes_of, self.org
            for f in darts[2:]:
                holes_of[find(org[f])].append(h)
        else:
            k1, k2 = ev[1], ev[2]
            # contour is now hole1 (2 k1 darts), partner, hole2 (2 k2 darts)
            if k1 <= k2:
                small = [contour.popleft() for _ in range(2 * k1)]
                partner = contour.popleft()
            else:
                small = [contour.pop() for _ in range(2 * k2)][::-1]
                partner = contour.pop()
            self.glue(b, partner)
            if not contour:
                del self.holes[h]
            self.new_hole(small)
        return ev

    def fill_below(self, r: int, law: FiniteTransitions, rng: np.random.Generator,
                   budget: int, trace: Optional[list] = None) -> int:
        """Peel finite holes until every hole has boundary distance ``>= r``.

        Heap keys are lower bounds; a hole whose key is stale is re-keyed with
        its true distance instead of being peeled.
        """
        steps = 0
        while True:
            top = self._heap_top()
            if top is None or top[0] >= r:
                return steps
            h = top[1]
            pos = self.low_position(h, r)
            if pos is None:
                self._rekey(h)
                continue
            self.peel_hole(h, law, rng, trace, position=pos)
            steps += 1
            if steps > budget:
                raise BudgetExceeded(f"hole filling exceeded {budget} steps")

    def fill_hole_completely(self, h: int, law: FiniteTransitions,
                             rng: np.random.Generator, budget: int) -> int:
        """Peel ``h`` and every hole it spawns until none is left."""
        stack, steps = [h], 0
        while stack:
            x = stack.pop()
            if x not in self.holes:
                continue
            before = self._next_hole
            self.peel_hole(x, law, rng)
            steps += 1
            if steps > budget:
                raise BudgetExceeded(f"hole completion exceeded {budget} steps")
            if x in self.holes:
                stack.append(x)
            stack.extend(range(before, self._next_hole))
        return steps

    def settle_vertex(self, v: int, law: FiniteTransitions, rng: np.random.Generator,
                      budget: int = 10**6) -> int:
        """Peel finite holes at darts incident to ``v`` until ``v`` lies on none.

        Afterwards every identification involving ``v`` is final, except
        through the infinite hole.
        """
        steps = 0
        find, org, hd = self.find, self.org, self.hd
        while True:
            r = find(v)
            members = self.holes_of[r]
            h = i = None
            for x in members:
                if x not in self.holes:
                    continue
                contour = self.holes[x]
                # after a C step the vertex is usually at the front
                if contour and (find(org[contour[0]]) == r or find(hd[contour[0]]) == r):
                    h, i = x, 0
                    break
                i = next((t for t, d in enumerate(contour)
                          if find(org[d]) == r or find(hd[d]) == r), None)
                if i is not None:
                    h = x
                    break
            if h is None:
                self.holes_of[r] = []
                return steps
            self.peel_hole(h, law, rng, position=i)
            steps += 1
            if steps > budget:
                raise BudgetExceeded(f"settling vertex exceeded {budget} steps")

    # views ---------------------------------------------------------------------
    def vertex_ids(self) -> List[int]:
        return sorted({self.find(v) for v in range(len(self.parent))})


# ---------------------------------------------------------------------------
# explorations

@dataclass
class PlanarMapBall:
    """A rooted map produced by a peeling exploration.

    Attributes
    ----------
    pmap : PeelMap
        Darts, faces, holes and distances.
    mode : ``"finite"``, ``"halfplane-general"`` or ``"halfplane-tilde"``
    radius : the exploration guarantees every vertex at distance
        ``<= radius - 1`` has its full neighbourhood revealed and every
        distance ``<= radius`` is exact.
    exposed : darts of the infinite hole contour (half-plane modes)
    root_chain : root-face darts in left-to-right order (half-plane modes),
        or the root polygon (finite mode)
    """

    pmap: PeelMap
    mode: str
    radius: float
    exposed: List[int] = field(default_factory=list)
    root_chain: List[int] = field(default_factory=list)
    trace: Optional[list] = None
    steps: int = 0
    perimeter: int = 0

    @property
    def origin(self) -> int:
        return self.pmap.find(self.pmap.origin)

    @property
    def root_dart(self) -> int:
        return self.pmap.root_dart

    def inner_face_degrees(self) -> List[int]:
        return [len(f) for f in self.pmap.faces]

    def check(self) -> Dict[str, object]:
        """Euler, bipartite and simple-hole checks; raises StructureError."""
        return check_structure(self)

    def to_json(self) -> str:
        return json.dumps(export_map(self), sort_keys=True)


class Explorer:
    """Metric peeling exploration that can be grown to larger radii.

    Parameters
    ----------
    mode : ``"finite"``, ``"halfplane-general"`` or ``"halfplane-tilde"``
    disk : solved disk data (finite holes)
    law : half-plane law (``NuLaw`` or the h-transformed law); ignored for
        finite mode
    perimeter : half-perimeter of the root face in finite mode
    """

    def __init__(self, mode: str, disk: DiskData, rng: np.random.Generator,
                 law=None, perimeter: int = 1, finite_law: Optional[FiniteTransitions] = None,
                 budget: int = 10**7, keep_trace: bool = False):
        if mode not in ("finite", "halfplane-general", "halfplane-tilde"):
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = mode
        self.rng = rng
        self.law = law
        self.finite_law = finite_law or FiniteTransitions(disk)
        self.budget = budget
        self.trace = [] if keep_trace else None
        self.steps = 0
        m = PeelMap()
        self.m = m
        self.X: List[int] = []
        self._level: Optional[int] = None
        self._cursor = 0
        self.perimeter = perimeter
        if mode == "finite":
            if perimeter < 1:
                raise ValueError("finite mode needs a positive half-perimeter")
            n = 2 * perimeter
            # root polygon, origin at the head of dart 0
            verts = [m.new_vertex() for _ in range(n)]
            darts = [m.new_dart(verts[i], verts[(i + 1) % n], ROOT_FACE) for i in range(n)]
            m.origin = verts[1]
            for i in range(n):
                m.dist[verts[i]] = min((i - 1) % n, (1 - i) % n)
            m.root_dart = darts[0]
            self.root_chain = darts
            m.new_hole(list(darts))
        else:
            if law is None:
                raise ValueError("half-plane modes need a transition law")
            a = m.new_vertex(1)
            b = m.new_vertex(0)
            v0 = m.new_dart(a, b, ROOT_FACE)
            m.root_index[v0] = 0
            m.origin = b
            m.root_dart = v0
            self.X = [v0]
            self.left_anchor = a
            self.right_anchor = b
            self.lv, self.rv = -1, 1
            self.left_chain: List[int] = []   # V_{-1}, V_{-2}, ...
            self.right_chain: List[int] = []  # V_1, V_2, ...
            self.root_chain = [v0]

    # root-face darts ------------------------------------------------------------
    def _new_right_v(self) -> int:
        m = self.m
        a = self.right_anchor
        v = m.new_vertex(m.vdist(a) + 1)
        d = m.new_dart(a, v, ROOT_FACE)
        m.root_index[d] = self.rv
        self.rv += 1
        self.right_anchor = v
        self.right_chain.append(d)
        return d

    def _new_left_v(self) -> int:
        m = self.m
        b = self.left_anchor
        v = m.new_vertex(m.vdist(b) + 1)
        d = m.new_dart(v, b, ROOT_FACE)
        m.root_index[d] = self.lv
        self.lv -= 1
        self.left_anchor = v
        self.left_chain.append(d)
        return d

    def root_chain_darts(self) -> List[int]:
        if self.mode == "finite":
            return list(self.root_chain)
        return self.left_chain[::-1] + [self.root_chain[0]] + self.right_chain

    # exposed boundary ------------------------------------------------------------
    def _exposed_min(self) -> Tuple[int, int]:
        """(minimal distance, position) of the peel target; position -1 / p
        stand for the root-face darts beyond the ends (general mode).

        The target is the left-most dart touching a vertex of minimal
        distance.  A cached level and cursor make repeated calls cheap: every
        exposed vertex has distance at least the level, and those left of
        the cursor exceed it.  Swallows, hole filling and growth on the left
        invalidate the cache.
        """
        m = self.m
        find, dist, org, parent = m.find, m.dist, m.org, m.parent
        X = self.X
        p = len(X)
        level, t = self._level, None
        if level is not None:
            for i in range(self._cursor, p):
                v = org[X[i]]
                if parent[v] != v:
                    v = find(v)
                if dist[v] == level:
                    t = i
                    break
            if t is None and p and dist[find(m.hd[X[-1]])] == level:
                t = p
        if t is None:
            # full scan; vertex t of the exposed path is org(X[t]) or hd(X[p-1])
            level = INF
            for i, d in enumerate(X):
                v = org[d]
                if parent[v] != v:
                    v = find(v)
                if dist[v] < level:
                    level, t = dist[v], i
            if p:
                w = dist[find(m.hd[X[-1]])]
                if w < level:
                    level, t = w, p
            self._level = level if p else None
        self._cursor = t if t is not None else 0
        if self.mode == "halfplane-general":
            ld = dist[find(self.left_anchor)]
            if ld <= level:
                return ld, -1
            if not p:
                return dist[find(self.right_anchor)], 0
        if not p:
            return INF, 0
        return level, max(t - 1, 0)

    def _invalidate(self):
        self._level = None
        self._cursor = 0

    def _peel_exposed(self, j: int):
        m = self.m
        X = self.X
        if j == -1:
            X.insert(0, self._new_left_v())
            j = 0
            self._invalidate()
        elif j == len(X):
            X.append(self._new_right_v())
        p = len(X)
        ev = self.law.sample(p, j, self.rng)
        if self.trace is not None:
            self.trace.append(("exposed", p, j, ev))
        kind, k = ev
        b = X[j]
        if kind == "C":
            darts = m.attach_face(b, k)
            # the anchors keep their vertex classes
            X[j:j + 1] = darts[1:]
        elif kind == "R":
            self._invalidate()
            t = j + 2 * k + 1
            ext = X
            if t >= p:
                extra = [self._new_right_v() for _ in range(t - p + 1)]
                ext = X + extra
            partner = ext[t]
            hole = ext[j + 1:t]
            rest = X[t + 1:] if t < p else []
            m.glue(b, partner)
            m.new_hole(hole)
            self.X = X[:j] + rest
            if not rest:
                self.right_anchor = m.hd[partner]
        else:  # "L"
            self._invalidate()
            t = j - 2 * k - 1
            if t < 0:
                extra = [self._new_left_v() for _ in range(-t)]
                ext = extra[::-1] + X
                shift = -t
            else:
                ext = X
                shift = 0
            partner = ext[t + shift]
            hole = ext[t + shift + 1:j + shift]
            rest_left = X[:t] if t >= 0 else []
            rest_right = X[j + 1:]
            m.glue(b, partner)
            m.new_hole(hole)
            self.X = rest_left + rest_right
            if not rest_left:
                self.left_anchor = m.org[partner]
            if not rest_right and not rest_left:
                self.right_anchor = m.org[partner]
        self.steps += 1
        if self.steps > self.budget:
            raise BudgetExceeded(f"exploration exceeded {self.budget} steps")

    def grow(self, r: float) -> PlanarMapBall:
        """Explore until the ball of radius ``r`` is revealed.

        ``r = inf`` in finite mode builds the whole map.
        """
        m = self.m
        law = self.finite_law
        if self.mode == "finite":
            limit = INF if math.isinf(r) else int(r)
            self.steps += m.fill_below(limit, law, self.rng, self.budget, self.trace)
            return self._ball(r)
        r = int(r)
        while True:
            em, pos = self._exposed_min()
            target = min(em, r)
            filled = m.fill_below(target, law, self.rng, self.budget, self.trace)
            self.steps += filled
            if filled:
                self._invalidate()
                continue
            if em >= r:
                break
            self._peel_exposed(pos)
        return self._ball(r)

    def _ball(self, r) -> PlanarMapBall:
        return PlanarMapBall(pmap=self.m, mode=self.mode, radius=r, exposed=list(self.X),
                             root_chain=self.root_chain_darts(), trace=self.trace,
                             steps=self.steps, perimeter=self.perimeter)


def build_ball(mode: str, disk: DiskData, r: float, rng: np.random.Generator,
               law=None, perimeter: int = 1, nu: Optional[NuMeasure] = None,
               budget: int = 10**7, keep_trace: bool = False) -> PlanarMapBall:
    """Build the ball of radius ``r`` around the root by metric peeling.

    ``mode="finite"`` explores a Boltzmann map with root half-perimeter
    ``perimeter`` (``r = inf`` builds the whole map).  The half-plane modes
    need ``law``; for ``"halfplane-general"`` a :class:`NuLaw` is built from
    ``nu`` when no law is given.
    """
    if r < 0:
        raise ValueError("radius must be >= 0")
    if mode == "halfplane-general" and law is None:
        if nu is None:
            raise ValueError("general half-plane mode needs nu or a law")
        law = NuLaw(nu)
    ex = Explorer(mode, disk, rng, law=law, perimeter=perimeter, budget=budget,
                  keep_trace=keep_trace)
    return ex.grow(r)


# ---------------------------------------------------------------------------
# structural checks and export

def closed_up_faces(ball: PlanarMapBall):
    """Face cycles of the closed-up map and the full twin involution.

    Finite holes and the infinite hole become faces made of virtual twin
    darts.  In the half-plane modes the root face and the infinite hole are
    merged into one outer face.
    """
    m = ball.pmap
    n = len(m.org)
    org = list(m.org)
    hd = list(m.hd)
    twin = list(m.twin)
    faces = [list(f) for f in m.faces]

    def virtual(d):
        v = len(org)
        org.append(hd[d])
        hd.append(org[d])
        twin.append(d)
        twin[d] = v
        return v

    for contour in m.holes.values():
        faces.append([virtual(d) for d in reversed(contour)])
    if ball.mode == "finite":
        faces.append(list(ball.root_chain))
    else:
        outer = list(ball.root_chain) + [virtual(d) for d in reversed(ball.exposed)]
        faces.append(outer)
    return org, hd, twin, faces


def check_structure(ball: PlanarMapBall) -> Dict[str, object]:
    m = ball.pmap
    org, hd, twin, faces = closed_up_faces(ball)
    find = m.find
    n = len(org)
    if any(t < 0 for t in twin):
        raise StructureError("closed-up map has unglued darts")
    nxt = [-1] * n
    for f in faces:
        for i, d in enumerate(f):
            e = f[(i + 1) % len(f)]
            if find(hd[d]) != find(org[e]):
                raise StructureError(f"face contour broken at dart {d}")
            if nxt[d] != -1:
                raise StructureError(f"dart {d} in two faces")
            nxt[d] = e
    if any(x == -1 for x in nxt):
        raise StructureError("dart outside every face")
    for d in range(n):
        t = twin[d]
        if twin[t] != d or find(org[d]) != find(hd[t]) or find(hd[d]) != find(org[t]):
            raise StructureError(f"twin mismatch at dart {d}")
    # vertices as cycles of d -> next(twin(d))
    seen = [False] * n
    cycles = 0
    rep_seen = set()
    for d in range(n):
        if seen[d]:
            continue
        cycles += 1
        rep = find(org[d])
        if rep in rep_seen:
            raise StructureError(f"vertex {rep} is pinched (two corner cycles)")
        rep_seen.add(rep)
        x = d
        while not seen[x]:
            seen[x] = True
            if find(org[x]) != rep:
                raise StructureError("corner cycle mixes vertices")
            x = nxt[twin[x]]
    V, E, F = cycles, n // 2, len(faces)
    if V - E + F != 2:
        raise StructureError(f"Euler relation fails: V-E+F = {V - E + F}")
    if any(len(f) % 2 for f in faces):
        raise StructureError("odd face degree")
    # bipartite colouring
    colour: Dict[int, int] = {}
    adj: Dict[int, list] = {}
    for d in range(n):
        adj.setdefault(find(org[d]), []).append(find(hd[d]))
    for s in adj:
        if s in colour:
            continue
        colour[s] = 0
        queue = deque([s])
        while queue:
            x = queue.popleft()
            for y in adj[x]:
                if y not in colour:
                    colour[y] = 1 - colour[x]
                    queue.append(y)
                elif colour[y] == colour[x]:
                    raise StructureError("map is not bipartite")
    for h, contour in m.holes.items():
        vs = [find(org[d]) for d in contour]
        if len(set(vs)) != len(vs):
            raise StructureError(f"hole {h} is not simple")
    if ball.mode == "finite":
        if len(ball.root_chain) != 2 * ball.perimeter:
            raise StructureError("root face degree differs from the declared perimeter")
    return {"V": V, "E": E, "F": F, "euler": V - E + F, "bipartite": True,
            "holes": len(m.holes), "inner_faces": len(m.faces)}


def export_map(ball: PlanarMapBall) -> dict:
    """JSON-ready description of a ball.

    Schema: ``vertices`` (list of ``[id, distance]``), ``edges`` (list of
    ``[u, v]``, one per glued pair or unglued dart), ``faces`` (vertex lists
    of inner faces), ``holes`` (vertex lists of unfilled finite holes),
    ``root`` (``[origin, other endpoint]`` of the root edge), ``mode``,
    ``radius``.
    """
    m = ball.pmap
    find = m.find
    ids = {v: i for i, v in enumerate(m.vertex_ids())}
    verts = [[ids[v], m.dist[v] if m.dist[v] < INF else None] for v in ids]
    edges = []
    for d in range(len(m.org)):
        t = m.twin[d]
        if t == -1 or d < t:
            edges.append([ids[find(m.org[d])], ids[find(m.hd[d])]])
    faces = [[ids[find(m.org[d])] for d in f] for f in m.faces]
    holes = [[ids[find(m.org[d])] for d in c] for c in m.holes.values()]
    rd = m.root_dart
    return {"mode": ball.mode, "radius": None if math.isinf(ball.radius) else ball.radius,
            "vertices": verts, "edges": edges, "faces": faces, "holes": holes,
            "root": [ids[find(m.hd[rd])], ids[find(m.org[rd])]]}
