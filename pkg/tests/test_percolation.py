import math
from fractions import Fraction

import numpy as np
import pytest

from peel_lab.percolation import (KINDS, NotCriticalError, ball_graph, cell_count,
                                  crossing_estimate, effective_exponents,
                                  estimate_threshold, interface_drift_closed_form,
                                  one_arm_curves, one_arm_levels, percolate_ball, pool_sampler,
                                  replica_levels, site_interface_walk, thresholds)
from peel_lab.peel_engine import build_ball
from peel_lab.weights import WeightSequence, nu_measure, solve_disk


TABLE = {2: ("5/9", "1/3", "3/4"), 3: ("76/125", "5/11", "11/16"),
         4: ("5197/8085", "11/21", "21/32")}


@pytest.mark.parametrize("p", [2, 3, 4])
def test_exact_thresholds(p):
    from peel_lab.weights import make_2p_angulation

    nu = nu_measure(solve_disk(make_2p_angulation(p), L=200))
    rep = thresholds(nu)
    assert tuple(rep.as_strings().values()) == TABLE[p]
    assert isinstance(rep.p_site, Fraction)


def test_threshold_formulas_by_hand(quad):
    # S = 1/3, nu(-1) = 1/4, g = 1/2
    rep = thresholds(quad.nu)
    assert rep.S == Fraction(1, 3) and rep.nu_minus_one == Fraction(1, 4) and rep.gulp == Fraction(1, 2)
    assert rep.p_site == 1 - Fraction(1, 9) / (2 * Fraction(1, 4) * Fraction(1, 2))


def test_not_critical():
    nu = nu_measure(solve_disk(WeightSequence({2: Fraction(1, 20)}), L=200))
    with pytest.raises(NotCriticalError):
        thresholds(nu)


def test_interface_drift_vanishes_at_site_threshold(quad):
    g = float(quad.nu.gulp_closed)
    pp = 2 / 9
    assert abs(interface_drift_closed_form(5 / 9, g, pp)) < 1e-12
    assert interface_drift_closed_form(0.7, g, pp) > 0 > interface_drift_closed_form(0.4, g, pp)


def test_interface_walk_with_synthetic_gulps():
    # positive gulps equal to 2 -> increment +1 w.p. p, -1 otherwise
    draw = pool_sampler([0, 2, 2])
    res = site_interface_walk(0.5, draw, steps=50, rng=np.random.default_rng(0), walks=200,
                              drift_steps=20000)
    assert abs(res.drift) < 4 * res.drift_se
    assert res.survival[0] == 1 and np.all(np.diff(res.survival) <= 0)
    hi = site_interface_walk(0.9, draw, 50, np.random.default_rng(1), walks=200)
    assert hi.survival[-1] > res.survival[-1]
    with pytest.raises(ValueError):
        pool_sampler([0, 0])
    with pytest.raises(ValueError):
        site_interface_walk(1.5, draw, 5, np.random.default_rng(0))


@pytest.fixture(scope="module")
def ball(quad):
    return build_ball("halfplane-general", quad.disk, 6, np.random.default_rng(3), law=quad.nu_law)


def test_ball_graph(ball):
    g = ball_graph(ball)
    assert g.dist[g.origin] == 0 and g.radius == 6
    assert g.root_face >= 0
    assert g.edges.shape[1] == 2 and len(g.face_dist) == len(ball.pmap.faces)
    for a, b in g.edges.tolist():
        assert abs(int(g.dist[a]) - int(g.dist[b])) <= 1


@pytest.mark.parametrize("kind", KINDS)
def test_levels_match_direct_percolation(ball, kind):
    """The Kruskal levels agree with colouring at fixed p."""
    g = ball_graph(ball)
    rng = np.random.default_rng(5)
    marks = rng.random(cell_count(g, kind))
    levels = one_arm_levels(g, kind, marks)
    assert np.all(np.diff(levels) >= 0)
    for p in (0.0, 0.3, 0.5, 0.7, 1.0):
        rep = percolate_ball(ball, kind, p, rng, marks=marks, graph=g)
        assert rep.one_arm == (levels[g.radius] <= p)
        if rep.reach >= 0:
            assert all(levels[r] <= p for r in range(min(rep.reach, g.radius) + 1))


def test_trivial_parameters(ball):
    rng = np.random.default_rng(0)
    for kind in KINDS:
        assert percolate_ball(ball, kind, 1.0, rng).one_arm
        assert not percolate_ball(ball, kind, 0.0, rng).one_arm
    with pytest.raises(ValueError):
        percolate_ball(ball, "plaquette", 0.5, rng)
    with pytest.raises(ValueError):
        percolate_ball(ball, "site", 1.5, rng)


def test_replica_levels(ball):
    out = replica_levels(ball, np.random.default_rng(0))
    assert set(out) == set(KINDS) and all(len(v) == 7 for v in out.values())


def toy_levels(u, radii, pc, fine):
    """Levels of a toy model with one-arm probability
    ``r^-1 exp((p - pc) r / 4)`` (capped, nonincreasing in r).

    Its effective exponent over ``(r1, r2)`` is
    ``1 - (p - pc)(r2 - r1) / (4 log(r2/r1))``, so consecutive geometric pairs
    cross exactly at ``pc``.
    """
    R = max(radii)
    rs = np.arange(1, R + 1)
    P = np.minimum(1.0, rs[:, None] ** -1.0 * np.exp((fine[None, :] - pc) * rs[:, None] / 4))
    P = np.minimum.accumulate(P, axis=0)
    levels = np.zeros((len(u), R + 1))
    for r in rs:
        idx = np.searchsorted(P[r - 1], u, side="left")
        levels[:, r] = fine[np.minimum(idx, len(fine) - 1)]
    return levels


def test_crossing_estimator_on_toy_model():
    fine = np.linspace(0, 1, 20001)
    u = (np.arange(4000) + 0.5) / 4000
    radii = [2, 4, 8]
    levels = toy_levels(u, radii, 0.6, fine)
    grid = np.linspace(0.3, 0.9, 61)
    est = crossing_estimate(levels, radii, grid)
    assert abs(est - 0.6) < 0.02
    res = estimate_threshold("site", levels, radii, grid, np.random.default_rng(0), bootstrap=50)
    assert res.ci[0] <= res.estimate <= res.ci[1] and not res.warnings


def test_one_arm_curves_and_exponents():
    levels = np.array([[0, 0.2, 0.5], [0, 0.4, 0.9], [0, 0.1, 0.3]])
    curves = one_arm_curves(levels, [1, 2], np.array([0.25, 0.5, 1.0]))
    assert curves[1].tolist() == [2 / 3, 1.0, 1.0]
    assert curves[2].tolist() == [0.0, 2 / 3, 1.0]
    beta = effective_exponents(curves, [1, 2])
    assert beta[(1, 2)][1] == pytest.approx(math.log(1.5) / math.log(2))
    assert beta[(1, 2)][2] == pytest.approx(0.0)


def test_estimate_threshold_errors():
    lv = np.zeros((5, 4))
    with pytest.raises(ValueError):
        estimate_threshold("site", lv, [1, 2], np.linspace(0, 1, 5), np.random.default_rng(0))
    with pytest.raises(ValueError):
        estimate_threshold("site", lv, [1, 2, 3], np.array([0.5]), np.random.default_rng(0))
