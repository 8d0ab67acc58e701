import bisect
from fractions import Fraction

import numpy as np
import pytest

from peel_lab.walks import (EChain, NormalizationError, check_H_identities, doob_step,
                            first_face_law, h_down_nu_form, mu_kernel, mu_measure)


def test_dual_formulas_agree(quad):
    H = quad.H
    dual = h_down_nu_form(quad.nu, 100)
    assert all(H.down(l) == dual[l] for l in range(101))
    assert H.down(0) == 1
    assert all(H.up(l + 1) - H.up(l) == H.down(l) for l in range(50))


def test_known_renewal_values(quad):
    H = quad.H
    assert H.up(1) == 1
    assert H.up(3) == Fraction(3, 2)


def test_identities(quad, hexa):
    for m in (quad, hexa):
        rep = check_H_identities(m.nu, m.H, p_max=40, q=m.q, c=m.disk.c)
        assert rep.passed, rep.as_dict()


def test_identity_detector_sensitivity(quad):
    nu = quad.nu
    rep = check_H_identities(nu, quad.H, p_max=20, nu_override={-2: nu(-2) * Fraction(11, 10)})
    assert not rep.passed


def test_first_face_law(quad):
    law = first_face_law(quad.q, quad.disk.c, quad.H)
    assert law == {2: 1}


def test_echain_tables(quad):
    chain = EChain(quad.nu, quad.H)
    for E in (1, 2, 5, 40):
        probs = chain.probabilities(E)
        assert abs(sum(probs.values()) - 1) < 1e-12
        assert all(y >= 0 for y in probs)
    assert chain.max_residual < 1e-9


def test_echain_p_one_step_oracle(quad):
    """From E = 1: the -1 step has probability S/2 H_down(0)/H_down(1)."""
    chain = EChain(quad.nu, quad.H)
    p0 = chain.probabilities(1)[0]
    ref = float(quad.nu.S_closed / 2 / quad.H.down(1))
    assert abs(p0 - ref) < 1e-14


def test_echain_normalization_error(quad):
    chain = EChain(quad.nu, quad.H, tol=0.0)
    chain.S *= 1.01
    with pytest.raises(NormalizationError):
        chain.table(3)


def test_echain_run_reproducible(quad):
    chain = EChain(quad.nu, quad.H)
    a = [chain.run(np.random.default_rng(5)) for _ in range(3)]
    assert a[0] == a[1] == a[2]


def test_doob_step_matches_echain(quad):
    """The generic h-transform of the mu-kernel reproduces the E-chain law."""
    mu = mu_measure(quad.nu)
    assert abs(mu.total() - 1) < 1e-12
    kernel = mu_kernel(mu, floor=0)
    hd = lambda x: quad.H.down(x) if x >= 0 else 0
    rng = np.random.default_rng(2)
    n = 20000
    hits = sum(doob_step(hd, kernel, 3, rng) == 2 for _ in range(n))
    p = EChain(quad.nu, quad.H).probabilities(3)[2]
    assert abs(hits / n - p) < 4 * (p * (1 - p) / n) ** 0.5


def test_echain_large_state_step_matches_table(quad):
    chain = EChain(quad.nu, quad.H)
    E = chain.cache_max + 905
    cum, targets, kinds = chain.table(E)
    assert E not in chain._tables
    for u in np.random.default_rng(3).random(5000):
        i = min(bisect.bisect_right(cum, u), len(targets) - 1)
        assert chain.step(E, u) == (targets[i], kinds[i])
