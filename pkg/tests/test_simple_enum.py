from fractions import Fraction

import mpmath
import numpy as np
import pytest

from peel_lab.simple_enum import (compose_check, core_perimeter_pmf, exact_core_pmf, hat_c,
                                  invert_boundary, ratio_diagnostics)
from peel_lab.weights import WeightSequence, solve_disk, make_2p_angulation


def naive_inverse(W, L):
    """Order-by-order solution of Wh(z W^2) = W with plain Fractions."""
    # u = z W(z)^2 as a series
    def mul(a, b):
        return [sum(a[i] * b[n - i] for i in range(n + 1)) for n in range(L + 1)]

    u = [Fraction(0)] + mul(W, W)[:L]
    powers = [[Fraction(1)] + [Fraction(0)] * L]
    for _ in range(L):
        powers.append(mul(powers[-1], u))
    hat = []
    for n in range(L + 1):
        acc = W[n] - sum(hat[m] * powers[m][n] for m in range(n))
        hat.append(acc / powers[n][n])
    return hat


def test_quadrangulation_simple_series(quad):
    sd = quad.sdisk
    assert sd.hatW[:4] == [1, Fraction(4, 3), Fraction(4, 9), Fraction(16, 27)]
    assert sd.hat_c == Fraction(9, 2)
    assert compose_check(sd, 60) == 0.0


def test_inverse_matches_naive_oracle(quad):
    W = list(quad.disk.W[:13])
    assert quad.sdisk.hatW[:13] == naive_inverse(W, 12)


def test_generating_value_and_ratio(quad):
    sd = quad.sdisk
    assert abs(sd.generating_value() - 4 / 3) < 1e-6
    rat = ratio_diagnostics(sd.hatW[:201], sd.hat_c)
    assert rat.deviation < 0.1


def test_float_disk_uses_ball_arithmetic():
    q = WeightSequence({2: mpmath.mpf(1) / 12})
    d = solve_disk(q, L=40)
    assert not d.exact
    sd = invert_boundary(d, 30)
    assert abs(float(sd.hatW[3]) - 16 / 27) < 1e-12
    assert compose_check(sd, 30) < 1e-10


def test_core_perimeter_law(quad):
    law = core_perimeter_pmf(quad.sdisk, lmax=500)
    assert abs(law.pmf.sum() + law.tail_mass - 1) < 1e-8
    assert abs(law.pmf[0] - 3 / 4) < 1e-14
    exact = exact_core_pmf(quad.sdisk, 3)
    assert exact[1] == Fraction(2, 9)
    cond = law.conditioned_nonvertex()
    assert abs(cond[0] - 8 / 9) < 1e-12


def test_hat_c_general(hexa):
    assert hat_c(hexa.disk) == hexa.disk.c / hexa.disk.W_c**2


def test_truncation_warnings(quad):
    with pytest.warns(UserWarning):
        core_perimeter_pmf(quad.sdisk, lmax=3, warn_tail=0.001)
    with pytest.raises(ValueError):
        core_perimeter_pmf(quad.sdisk, lmax=10**6)
    with pytest.raises(ValueError):
        ratio_diagnostics([1, 2, 3], 1)
