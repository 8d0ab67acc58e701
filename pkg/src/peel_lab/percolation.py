"""Percolation thresholds, the site interface walk and direct Monte Carlo on
explored balls.

Colourings are coupled: every cell (vertex, edge or face) carries one
uniform mark and is black at parameter ``p`` when its mark is ``<= p``.  For
each replica this reduces the one-arm event at every ``p`` to a single
number, the smallest ``p`` at which the root cluster reaches distance ``r``,
computed by adding cells in increasing mark order to a union-find.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .peel_engine import INF, PlanarMapBall
from .weights import NuMeasure, criticality_report, to_float

KINDS = ("site", "bond", "face")


class NotCriticalError(ValueError):
    """Thresholds were requested for a non-critical or dense weight sequence."""


@dataclass
class ThresholdReport:
    """Critical parameters for site, bond and face percolation.

    Exact fractions when the weights are rational.  ``S`` is the total
    negative mass of the step measure, ``nu_minus_one`` its atom at ``-1`` and
    ``gulp`` the mean gulp (with the factor one half).
    """

    p_site: object
    p_bond: object
    p_face: object
    S: object
    nu_minus_one: object
    gulp: object

    def as_strings(self) -> Dict[str, str]:
        return {"site": str(self.p_site), "bond": str(self.p_bond), "face": str(self.p_face)}

    def as_floats(self) -> Dict[str, float]:
        return {"site": to_float(self.p_site), "bond": to_float(self.p_bond),
                "face": to_float(self.p_face)}


def thresholds(nu: NuMeasure, check: bool = True) -> ThresholdReport:
    """Closed-form percolation thresholds from the step measure.

    ``p_site = 1 - S^2 / (2 nu(-1) g)``, ``p_bond = 1 - 1/(g+1)`` and
    ``p_face = (1 + 1/(2g+1)) / 2``.

    Raises
    ------
    NotCriticalError
        When the step measure is not centred or its tail is not the dilute
        ``-5/2`` power law.
    """
    if check:
        rep = criticality_report(nu)
        if not rep.critical:
            raise NotCriticalError(f"weight sequence is not critical: {rep.as_dict()}")
    S = nu.S_closed
    g = nu.gulp_closed
    n1 = nu.nu_minus_one
    one = Fraction(1) if nu.exact else 1.0
    p_site = one - S * S / (2 * n1 * g)
    p_bond = one - one / (g + 1)
    p_face = (one + one / (2 * g + 1)) / 2
    return ThresholdReport(p_site, p_bond, p_face, S, n1, g)


# ---------------------------------------------------------------------------
# interface walk

@dataclass
class InterfaceWalkResult:
    """Black-boundary walk with increments ``eps - (1 - eps)(G - 1)``.

    Attributes
    ----------
    survival : ``survival[n]`` is the fraction of walks still alive after
        ``n`` steps (killed when the walk goes below zero)
    drift : empirical mean increment over all simulated increments
    drift_se : its standard error
    """

    survival: np.ndarray
    drift: float
    drift_se: float
    increments: int


def site_interface_walk(p: float, gulp_sampler: Callable[[np.random.Generator, int], np.ndarray],
                        steps: int, rng: np.random.Generator, walks: int = 1,
                        drift_steps: Optional[int] = None) -> InterfaceWalkResult:
    """Simulate the site-percolation interface walk.

    Parameters
    ----------
    gulp_sampler : ``(rng, n) -> n`` draws of the right gulp conditioned to be
        positive
    steps : length of each killed walk
    walks : number of independent killed walks for the survival curve
    drift_steps : number of free increments for the drift estimate (default
        ``steps * walks``)
    """
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    n_drift = drift_steps if drift_steps is not None else steps * walks
    eps = rng.random(n_drift) < p
    g = gulp_sampler(rng, n_drift)
    inc = np.where(eps, 1, -(np.asarray(g) - 1))
    drift = float(inc.mean())
    se = float(inc.std(ddof=1) / math.sqrt(n_drift)) if n_drift > 1 else float("nan")
    alive = np.ones(walks, dtype=bool)
    pos = np.zeros(walks, dtype=np.int64)
    survival = np.empty(steps + 1)
    survival[0] = 1.0
    for n in range(1, steps + 1):
        e = rng.random(walks) < p
        gg = np.asarray(gulp_sampler(rng, walks))
        pos = pos + np.where(e, 1, -(gg - 1))
        alive &= pos >= 0
        survival[n] = alive.mean()
    return InterfaceWalkResult(survival=survival, drift=drift, drift_se=se, increments=n_drift)


def pool_sampler(pool: Sequence[int]) -> Callable[[np.random.Generator, int], np.ndarray]:
    """Resample from an empirical pool of positive right gulps."""
    arr = np.asarray([g for g in pool if g > 0], dtype=np.int64)
    if arr.size == 0:
        raise ValueError("empty gulp pool")

    def draw(rng: np.random.Generator, n: int) -> np.ndarray:
        return arr[rng.integers(arr.size, size=n)]

    return draw


def interface_drift_closed_form(p: float, gulp: float, prob_positive: float) -> float:
    """Mean increment ``p - (1-p) E[G - 1 | G > 0]`` with
    ``E[G - 1 | G > 0] = (g - P(G > 0)) / P(G > 0)``."""
    return p - (1 - p) * (gulp - prob_positive) / prob_positive


# ---------------------------------------------------------------------------
# cluster analysis on balls

@dataclass
class BallGraph:
    """Cells of a ball as integer arrays.

    Vertices are renumbered ``0..V-1``; ``edges`` holds one row per edge of
    the map (multiple edges kept), ``face_adj`` one row per pair of inner
    faces sharing an edge.
    """

    dist: np.ndarray
    edges: np.ndarray
    face_dist: np.ndarray
    face_adj: np.ndarray
    origin: int
    root_face: int
    radius: int


def ball_graph(ball: PlanarMapBall) -> BallGraph:
    m = ball.pmap
    find = m.find
    ids: Dict[int, int] = {}
    dist: List[int] = []
    for v in range(len(m.parent)):
        r = find(v)
        if r not in ids:
            ids[r] = len(dist)
            dist.append(m.dist[r])
    edges = []
    face_adj = []
    twin, org, hd, face = m.twin, m.org, m.hd, m.face
    for d in range(len(org)):
        t = twin[d]
        if t == -1 or d < t:
            edges.append((ids[find(org[d])], ids[find(hd[d])]))
            if t != -1 and face[d] >= 0 and face[t] >= 0:
                face_adj.append((face[d], face[t]))
    dist_arr = np.array(dist, dtype=np.int64)
    fdist = np.array([max(dist_arr[ids[find(org[d])]] for d in f) for f in m.faces],
                     dtype=np.int64)
    origin = ids[find(m.origin)]
    rd = m.root_dart
    root_face = -1
    if twin[rd] != -1 and face[twin[rd]] >= 0:
        root_face = face[twin[rd]]
    else:
        o = find(m.origin)
        for fid, f in enumerate(m.faces):
            if any(find(org[d]) == o for d in f):
                root_face = fid
                break
    r = ball.radius
    return BallGraph(dist=dist_arr, edges=np.array(edges, dtype=np.int64).reshape(-1, 2),
                     face_dist=fdist, face_adj=np.array(face_adj, dtype=np.int64).reshape(-1, 2),
                     origin=origin, root_face=root_face,
                     radius=int(r) if not math.isinf(r) else int(dist_arr.max()))


class _UF:
    def __init__(self, n: int, reach: np.ndarray):
        self.parent = list(range(n))
        self.reach = reach.tolist()

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a: int, b: int) -> int:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        self.parent[rb] = ra
        if self.reach[rb] > self.reach[ra]:
            self.reach[ra] = self.reach[rb]
        return ra


def _record(levels: np.ndarray, reached: int, value: float, upto: int) -> int:
    """Set ``levels[r] = value`` for ``upto < r <= reached``; return the new mark."""
    if reached > upto:
        hi = min(reached, len(levels) - 1)
        levels[upto + 1:hi + 1] = value
        return reached
    return upto


def one_arm_levels(g: BallGraph, kind: str, marks: np.ndarray) -> np.ndarray:
    """Smallest ``p`` at which the root cluster reaches distance ``r``, for
    ``r = 0..radius`` (index ``r``).

    ``marks`` holds one uniform per cell: vertices (site), edges (bond) or
    inner faces (face).
    """
    R = g.radius
    levels = np.full(R + 1, np.inf)
    if kind == "site":
        n = len(g.dist)
        nbrs: List[List[int]] = [[] for _ in range(n)]
        for a, b in g.edges.tolist():
            nbrs[a].append(b)
            nbrs[b].append(a)
        uf = _UF(n, g.dist)
        active = [False] * n
        upto = -1
        o = g.origin
        for v in np.argsort(marks, kind="stable").tolist():
            active[v] = True
            for w in nbrs[v]:
                if active[w]:
                    uf.union(v, w)
            if active[o]:
                upto = _record(levels, uf.reach[uf.find(o)], marks[v], upto)
                if upto >= R:
                    break
        return levels
    if kind == "bond":
        n = len(g.dist)
        uf = _UF(n, g.dist)
        o = g.origin
        levels[0] = 0.0
        upto = _record(levels, int(g.dist[o]), 0.0, -1)
        edges = g.edges.tolist()
        for e in np.argsort(marks, kind="stable").tolist():
            a, b = edges[e]
            uf.union(a, b)
            upto = _record(levels, uf.reach[uf.find(o)], marks[e], upto)
            if upto >= R:
                break
        return levels
    if kind == "face":
        nf = len(g.face_dist)
        if g.root_face < 0 or nf == 0:
            return levels
        nbrs = [[] for _ in range(nf)]
        for a, b in g.face_adj.tolist():
            nbrs[a].append(b)
            nbrs[b].append(a)
        uf = _UF(nf, g.face_dist)
        active = [False] * nf
        o = g.root_face
        upto = -1
        for f in np.argsort(marks, kind="stable").tolist():
            active[f] = True
            for w in nbrs[f]:
                if active[w]:
                    uf.union(f, w)
            if active[o]:
                upto = _record(levels, uf.reach[uf.find(o)], marks[f], upto)
                if upto >= R:
                    break
        return levels
    raise ValueError(f"unknown percolation kind {kind!r}")


def cell_count(g: BallGraph, kind: str) -> int:
    return {"site": len(g.dist), "bond": len(g.edges), "face": len(g.face_dist)}[kind]


@dataclass
class ClusterReport:
    """Root cluster of one coloured ball."""

    kind: str
    p: float
    size: int
    one_arm: bool
    reach: int


def percolate_ball(ball: PlanarMapBall, kind: str, p: float, rng: np.random.Generator,
                   marks: Optional[np.ndarray] = None, graph: Optional[BallGraph] = None) -> ClusterReport:
    """Colour a ball and report the root cluster.

    The one-arm indicator says whether the cluster of the origin (site,
    bond) or of the face on the root edge (face) reaches distance
    ``ball.radius``.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown percolation kind {kind!r}")
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    if ball.mode != "finite" and ball.pmap.min_hole_distance() < ball.radius:
        raise RuntimeError("ball has unfilled holes inside its radius")
    g = graph or ball_graph(ball)
    n = cell_count(g, kind)
    u = marks if marks is not None else rng.random(n)
    black = u <= p
    if kind == "site":
        nodes, src, pairs, depth = len(g.dist), g.origin, g.edges, g.dist
        if not black[src]:
            return ClusterReport(kind, p, 0, False, -1)
        keep = black[pairs[:, 0]] & black[pairs[:, 1]]
    elif kind == "bond":
        nodes, src, pairs, depth = len(g.dist), g.origin, g.edges, g.dist
        keep = black
    else:
        nodes, src, pairs, depth = len(g.face_dist), g.root_face, g.face_adj, g.face_dist
        if src < 0 or not black[src]:
            return ClusterReport(kind, p, 0, False, -1)
        keep = black[pairs[:, 0]] & black[pairs[:, 1]]
    uf = _UF(nodes, depth)
    for a, b in pairs[keep].tolist():
        uf.union(a, b)
    root = uf.find(src)
    size = sum(1 for x in range(nodes) if uf.find(x) == root)
    reach = uf.reach[root]
    return ClusterReport(kind, p, size, reach >= g.radius, int(reach))


# ---------------------------------------------------------------------------
# threshold estimation

@dataclass
class ThresholdEstimate:
    """Crossing estimate of the effective one-arm exponent curves.

    Attributes
    ----------
    estimate : crossing point (mean over consecutive radius triples)
    ci : bootstrap percentile interval
    curves : ``{r: one-arm frequency over grid}``
    beta : ``{(r1, r2): effective exponent over grid}``
    warnings : quality notes (non-monotone curves, missing crossings)
    """

    kind: str
    estimate: float
    ci: Tuple[float, float]
    grid: np.ndarray
    radii: List[int]
    curves: Dict[int, np.ndarray]
    beta: Dict[Tuple[int, int], np.ndarray]
    replicas: int
    warnings: List[str] = field(default_factory=list)


def one_arm_curves(levels: np.ndarray, radii: Sequence[int], grid: np.ndarray) -> Dict[int, np.ndarray]:
    """``levels[i, r]`` per replica -> one-arm frequency at each grid point."""
    return {r: (levels[:, r][:, None] <= grid[None, :]).mean(axis=0) for r in radii}


def effective_exponents(curves: Dict[int, np.ndarray], radii: Sequence[int]):
    """``-log(P_r2 / P_r1) / log(r2 / r1)`` for consecutive radii."""
    out = {}
    for r1, r2 in zip(radii, radii[1:]):
        with np.errstate(divide="ignore", invalid="ignore"):
            out[(r1, r2)] = -np.log(curves[r2] / curves[r1]) / math.log(r2 / r1)
    return out


def _crossing(grid: np.ndarray, a: np.ndarray, b: np.ndarray) -> Optional[float]:
    """Last sign change of ``a - b`` from positive (a above) to negative,
    linearly interpolated."""
    d = a - b
    ok = np.isfinite(d)
    xs, ds = grid[ok], d[ok]
    best = None
    for i in range(len(xs) - 1):
        if ds[i] > 0 >= ds[i + 1] or ds[i] >= 0 > ds[i + 1]:
            t = ds[i] / (ds[i] - ds[i + 1]) if ds[i] != ds[i + 1] else 0.5
            best = float(xs[i] + t * (xs[i + 1] - xs[i]))
    return best


def crossing_estimate(levels: np.ndarray, radii: Sequence[int], grid: np.ndarray) -> Optional[float]:
    """Mean crossing of the effective exponents of consecutive radius pairs.

    Below the threshold the one-arm probability decays faster at larger
    scales (the exponent grows with ``r``); above it the decay flattens.  The
    crossing of the exponent curves of two consecutive radius pairs is the
    finite-size estimate.
    """
    curves = one_arm_curves(levels, radii, grid)
    beta = effective_exponents(curves, radii)
    pairs = list(zip(radii, radii[1:]))
    xs = []
    for p1, p2 in zip(pairs, pairs[1:]):
        x = _crossing(grid, beta[p2], beta[p1])
        if x is not None:
            xs.append(x)
    return float(np.mean(xs)) if xs else None


def estimate_threshold(kind: str, levels: np.ndarray, radii: Sequence[int], grid: np.ndarray,
                       rng: np.random.Generator, bootstrap: int = 200,
                       level: float = 0.95) -> ThresholdEstimate:
    """Threshold estimate from per-replica one-arm levels.

    Parameters
    ----------
    levels : array ``(replicas, R+1)`` from :func:`one_arm_levels`
    radii : at least three increasing radii ``<= R``
    grid : increasing ``p`` values
    """
    radii = sorted(int(r) for r in radii)
    if len(radii) < 3:
        raise ValueError("need at least three radii")
    grid = np.asarray(grid, dtype=float)
    if grid.size < 2:
        raise ValueError("p grid needs at least two points")
    curves = one_arm_curves(levels, radii, grid)
    beta = effective_exponents(curves, radii)
    notes = []
    for r, c in curves.items():
        if np.any(np.diff(c) < -1e-12):
            notes.append(f"one-arm curve at r={r} is not monotone")
    est = crossing_estimate(levels, radii, grid)
    if est is None:
        notes.append("no crossing of the effective exponent curves on the grid")
        est = float("nan")
    n = levels.shape[0]
    boots = []
    for _ in range(bootstrap):
        idx = rng.integers(n, size=n)
        x = crossing_estimate(levels[idx], radii, grid)
        if x is not None:
            boots.append(x)
    if boots:
        lo, hi = np.quantile(boots, [(1 - level) / 2, (1 + level) / 2])
        ci = (float(lo), float(hi))
    else:
        ci = (float("nan"), float("nan"))
    if len(boots) < 0.9 * bootstrap:
        notes.append(f"crossing missing in {bootstrap - len(boots)} of {bootstrap} bootstrap samples")
    return ThresholdEstimate(kind=kind, estimate=est, ci=ci, grid=grid, radii=radii,
                             curves=curves, beta=beta, replicas=n, warnings=notes)


def replica_levels(ball: PlanarMapBall, rng: np.random.Generator,
                   kinds: Sequence[str] = KINDS) -> Dict[str, np.ndarray]:
    """One-arm levels of one ball for several percolation kinds."""
    g = ball_graph(ball)
    return {k: one_arm_levels(g, k, rng.random(cell_count(g, k))) for k in kinds}
