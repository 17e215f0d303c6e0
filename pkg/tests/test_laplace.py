from fractions import Fraction

import numpy as np
import pytest
from scipy.special import gamma

from subheat.laplace import exponent_bounds_hold, heat_exponent, laplace_leading, laplace_oracle
from subheat.types import LaplaceForm


def one(*_):
    return 1.0


@pytest.mark.parametrize('g, form, box', [
    (lambda x: x ** 2, LaplaceForm((1,), 0, (1.0,)), [(-1, 1)]),
    (lambda x: x ** 4, LaplaceForm((2,), 0, (1.0,)), [(-1, 1)]),
    (lambda x: x ** 6, LaplaceForm((3,), 0, (1.0,)), [(-1, 1)]),
    (lambda x, y: x ** 2 + y ** 4, LaplaceForm((1, 2), 0, (1.0, 1.0)), [(-1, 1), (-1, 1)]),
    (lambda x, y: 3 * x ** 2 + 0.5 * y ** 4, LaplaceForm((1, 2), 0, (3.0, 0.5)), [(-1, 1), (-1, 1)]),
])
def test_leading_term_matches_oracle(g, form, box):
    t = 1e-4
    exact = laplace_oracle(g, one, box, t)
    _, leading = laplace_leading(1.0, form, t)
    assert leading == pytest.approx(exact, rel=0.02)


def test_leading_term_coefficients():
    leading, value = laplace_leading(2.0, LaplaceForm((1, 2), 0, (4.0, 1.0), jacobian_at_z0=0.5), 0.01)
    assert leading.t_power == Fraction(3, 4)
    assert leading.error_order == Fraction(1, 2)
    assert leading.coefficient == pytest.approx(np.sqrt(np.pi) / 2 * gamma(0.25) / 2)
    assert value == pytest.approx(leading.coefficient * 0.01 ** 0.75)


def test_flat_directions_carry_no_power():
    leading, _ = laplace_leading(1.0, LaplaceForm((1, 1), 1, (1.0, 1.0)), 1e-3)
    assert leading.t_power == 1


def test_oracle_with_offset_minimum():
    t = 1e-3
    value = laplace_oracle(lambda x: (x - 0.3) ** 2, lambda x: 1.0 + x, [(-1, 1)], t, center=[0.3])
    assert value == pytest.approx(1.3 * np.sqrt(np.pi * t), rel=1e-3)


@pytest.mark.parametrize('n, exponents, flat, alpha', [
    (2, (1, 1), 0, Fraction(1)),
    (2, (1, 2), 0, Fraction(5, 4)),
    (2, (2, 2), 0, Fraction(3, 2)),
    (3, (1, 1), 1, Fraction(2)),
    (3, (1, 1, 1), 0, Fraction(3, 2)),
    (2, (1,), 1, Fraction(3, 2)),
])
def test_heat_exponent(n, exponents, flat, alpha):
    form = LaplaceForm(exponents, flat, (1.0,) * len(exponents))
    assert heat_exponent(n, form) == alpha
    assert isinstance(heat_exponent(n, form), Fraction)


def test_heat_exponent_dimension_mismatch():
    with pytest.raises(ValueError):
        heat_exponent(3, LaplaceForm((1, 2), 0, (1.0, 1.0)))


def test_exponent_bounds():
    assert exponent_bounds_hold(2, LaplaceForm((1, 1), 0, (1.0, 1.0)))
    assert exponent_bounds_hold(2, LaplaceForm((1, 2), 0, (1.0, 1.0)))
    assert exponent_bounds_hold(3, LaplaceForm((1, 1), 1, (1.0, 1.0)))
    assert not exponent_bounds_hold(2, LaplaceForm((3, 3), 0, (1.0, 1.0)))
    assert not exponent_bounds_hold(2, LaplaceForm((2,), 1, (1.0,)))


@pytest.mark.parametrize('exponents, flat, coeffs', [
    ((0,), 0, (1.0,)),
    ((1,), 0, (0.0,)),
    ((1, 2), 0, (1.0,)),
    ((1,), -1, (1.0,)),
])
def test_invalid_forms(exponents, flat, coeffs):
    with pytest.raises(ValueError):
        LaplaceForm(exponents, flat, coeffs)
