import math
from fractions import Fraction

import numpy as np
import pytest

from peel_lab.halfplane import (CoreDecomposition, DanglingSampler, HalfPlaneCore,
                                IndeterminateError, SimpleStepSampler, TildeLaw,
                                core_of_contour, croot_normaliser, croot_weights, extract_core,
                                face_degree_law, figure_fixture, first_peel_stats,
                                sum_to_one_residual, loop_erase, mtilde_peel_step,
                                prob_gulp_positive, run_A_metric, sample_C_root,
                                tree_on_digon_fixture, with_escalation)
from peel_lab.peel_engine import FreePerimeter, build_ball, check_structure
from peel_lab.walks import ConsistencyError, NormalizationError, RenewalFunctions


def test_tilde_law_at_length_one(quad):
    law = quad.tilde
    _, c, r, l, rb, lb, _, _ = law.masses(1, 0)
    assert abs(c[0] - 1) < 1e-14 and rb == 0 and lb == 0 and len(r) == len(l) == 0
    rng = np.random.default_rng(0)
    assert all(mtilde_peel_step(law, 1, 0, rng) == ("C", 2) for _ in range(50))


def test_tilde_law_sums_to_one(quad, hexa):
    assert sum_to_one_residual(quad.tilde, 40) < 1e-10
    assert sum_to_one_residual(hexa.tilde, 30) < 1e-10
    with pytest.raises(ValueError):
        quad.tilde.masses(3, 3)


def test_constant_h_gives_nu_step(quad):
    """With a constant renewal function the in-range masses are plain nu masses."""
    H = quad.H
    flat = RenewalFunctions([1.0] * (H.M + 1), [1.0] * (H.M + 2), quad.nu)
    law = TildeLaw(quad.nu, flat, tol=1.0)
    _, c, r, l, rb, lb, _, _ = law.masses(20, 10)
    assert abs(c[0] - 2 / 3) < 1e-14
    assert abs(r[0] - 1 / 8) < 1e-14 and abs(l[0] - 1 / 8) < 1e-14
    assert abs(c.sum() + r.sum() + l.sum() + rb + lb - 1) < 1e-6


def test_face_degree_law(quad):
    assert face_degree_law(quad.nu, quad.H) == {2: pytest.approx(1.0, abs=1e-14)}


def test_normalisation_error_on_broken_law(quad):
    law = TildeLaw(quad.nu, quad.H, tol=1e-9)
    law.pos = [(2, 0.5)]
    with pytest.raises(NormalizationError):
        law.sample(3, 1, np.random.default_rng(0))


def test_metric_balls(quad):
    rng = np.random.default_rng(3)
    for r in (0, 1, 3):
        ex = run_A_metric(r, rng, quad.disk, quad.tilde, finite_law=quad.finite_law)
        ball = ex._ball(max(r, 1))
        check_structure(ball)
        # the first revealed face sits on the root edge and is a quadrangle
        assert len(ex.m.faces[0]) == 4
    with pytest.raises(ValueError):
        run_A_metric(-1, rng, quad.disk, quad.tilde)


def test_core_of_simple_contour_is_identity():
    dec = core_of_contour([0, 1, 2, 3])
    assert dec.core == [0, 1, 2, 3] and dec.dangling == []


def test_tree_on_digon():
    dec = core_of_contour(tree_on_digon_fixture())
    assert dec.core == [0, 1]
    assert dec.dangling == [(1, 2, 1)]  # perimeter 4 hanging at the origin


def test_core_of_contour_errors():
    with pytest.raises(ValueError):
        core_of_contour([0, 1, 2])


def test_extract_core_on_finite_maps(quad):
    rng = np.random.default_rng(8)
    for _ in range(30):
        ball = build_ball("finite", quad.disk, math.inf, rng, perimeter=3)
        dec = extract_core(ball)
        assert len(dec.core) >= 2 and len(set(dec.core)) == len(dec.core)
        total = len(dec.core) + 2 * sum(c[1] for c in dec.components)
        assert total == 6
    with pytest.raises(ValueError):
        extract_core(build_ball("halfplane-general", quad.disk, 1, rng, nu=quad.nu))


def test_loop_erase():
    assert loop_erase([1, 2, 3, 2, 4]) == [1, 2, 4]
    assert loop_erase([1, 2, 1, 3]) == [1, 3]


def test_figure_fixture():
    walk, index = figure_fixture()
    s = first_peel_stats(walk, index)
    assert (s.exposure, s.gulp_right, s.gulp_left) == (4, 3, 2)
    assert s.k == 6
    assert s.balance() == 4 - 1 - 2 - 3


def test_first_peel_stats_validation():
    with pytest.raises(ValueError):
        first_peel_stats([5, 6, 7], {5: 1, 7: 0})


def test_simple_step_sampler_balance(quad):
    sampler = SimpleStepSampler(quad.disk, quad.nu, quad.H, law=quad.tilde)
    rng = np.random.default_rng(4)
    for _ in range(100):
        s = sampler.sample(rng)
        assert s.exposure >= 1 and s.gulp_left >= 0 and s.gulp_right >= 0
        assert s.k == 2
    assert not [e for e in sampler.log if e[0] == "indeterminate"]


def test_simple_step_reproducible(quad):
    def draw(seed):
        sampler = SimpleStepSampler(quad.disk, quad.nu, quad.H, law=quad.tilde)
        rng = np.random.default_rng(seed)
        return [sampler.sample(rng) for _ in range(20)]

    assert draw(6) == draw(6)


def test_half_plane_core_queries(quad):
    rng = np.random.default_rng(10)
    ex = run_A_metric(2, rng, quad.disk, quad.tilde, finite_law=quad.finite_law)
    core = HalfPlaneCore(ex)
    vals, r = with_escalation(ex, lambda: [core.core_vertex(n) for n in (-2, -1, 0, 1, 2)], 2)
    assert len(set(vals)) == 5
    assert [core.core_index(v) for v in vals] == [-2, -1, 0, 1, 2]
    with pytest.raises(ValueError):
        HalfPlaneCore(type(ex)("halfplane-general", quad.disk, rng, law=quad.nu_law))


def test_dangling_sampler_small(quad):
    sampler = DanglingSampler(quad.disk, quad.tilde, indices=(2, -1))
    rng = np.random.default_rng(1)
    out = [l for _ in range(200) for l in sampler.sample(rng)]
    assert len(out) == 400 and min(out) >= 0
    assert abs(np.mean(np.array(out) == 0) - 0.75) < 0.1


def test_croot_normaliser(quad):
    H = quad.H
    for k in range(1, 21):
        w = croot_weights(quad.disk, H, k, quad.disk.L)
        norm = float(croot_normaliser(quad.disk, H, k))
        # tail of the sum: weight ~ l^{-5/2} times the constant 2k-1
        tail = quad.disk.tail.moment(0) * float(quad.disk.c) / 2 * (2 * k - 1)
        assert abs(w.sum() + tail - norm) / norm < 1e-6
    assert croot_normaliser(quad.disk, H, 2) == 2
    with pytest.raises(ValueError):
        croot_weights(quad.disk, H, 0, 5)


def test_sample_C_root(quad):
    rng = np.random.default_rng(0)
    free = FreePerimeter(quad.disk)
    n = 20000
    draws = [sample_C_root(2, quad.disk, quad.H, rng, free) for _ in range(n)]
    vertex = np.mean([l == 0 for l, _ in draws])
    assert abs(vertex - 0.5) < 4 * math.sqrt(0.25 / n)
    assert all(0 <= o < min(3, 2 * l + 1) for l, o in draws)
    # k = 1 reduces to the free law
    ones = [sample_C_root(1, quad.disk, quad.H, rng, free)[0] for _ in range(n)]
    assert abs(np.mean(np.array(ones) == 0) - 0.75) < 4 * math.sqrt(0.75 * 0.25 / n)


def test_prob_gulp_positive(quad, hexa):
    assert prob_gulp_positive(quad.nu, quad.sdisk.hat_c) == Fraction(2, 9)
    v = prob_gulp_positive(hexa.nu, hexa.sdisk.hat_c)
    assert abs(float(v) - float(1 / hexa.sdisk.hat_c)) < 1e-8
    with pytest.raises(ConsistencyError):
        prob_gulp_positive(quad.nu, Fraction(4))


def test_prob_gulp_single_atom():
    """A single negative atom nu(-1) = S gives S/2."""

    class Stub:
        S_closed = Fraction(1, 3)
        nu_minus_one = Fraction(1, 3)

    assert prob_gulp_positive(Stub()) == Fraction(1, 6)


def test_spatial_markov_single_quadrangle(quad):
    """A quadrangle on the root edge with three new boundary edges has
    probability hat_c^{(3-1)/2} q_2 = 3/8."""
    sampler = SimpleStepSampler(quad.disk, quad.nu, quad.H, law=quad.tilde)
    rng = np.random.default_rng(0)
    n = 3000
    hits = 0
    for _ in range(n):
        s = sampler.sample(rng)
        hits += s.exposure == 3 and s.gulp_left == 0 and s.gulp_right == 0
    target = float(quad.sdisk.hat_c * quad.q[2])
    assert target == 3 / 8
    assert abs(hits / n - target) < 3 * math.sqrt(target * (1 - target) / n)
