""" Laplace integrals int f exp(-g / t) and the heat exponent """
import logging
import warnings
from fractions import Fraction
from typing import Callable, Sequence, Tuple

import numpy as np
from scipy.integrate import IntegrationWarning, nquad
from scipy.special import gamma

from subheat.errors import QuadratureError
from subheat.types import LaplaceForm, LaplaceLeading

MAX_SUBINTERVALS = 256

logger = logging.getLogger(__name__)


def t_power(form: LaplaceForm) -> Fraction:
    return sum((Fraction(1, 2 * m) for m in form.exponents), Fraction(0))


def laplace_leading(f0: float, form: LaplaceForm, t: float) -> Tuple[LaplaceLeading, float]:
    """ Leading term of int f exp(-(g - g_min) / t) for g - g_min = sum_i c_i u_i^{2 m_i}

    Each direction contributes Gamma(1/2m) / m * (t / c)^{1/2m}; the
    coefficient also carries the volume density of the u coordinates.
    Flat directions contribute no t power; the result is then per unit
    volume of the minimum set.
    """
    coefficient = float(f0) * form.jacobian_at_z0
    for m, c in zip(form.exponents, form.diag_coeffs):
        coefficient *= gamma(1.0 / (2 * m)) / m * c ** (-1.0 / (2 * m))
    leading = LaplaceLeading(coefficient=coefficient, t_power=t_power(form),
                             error_order=Fraction(1, max(form.exponents, default=1)))
    return leading, leading(t)


def laplace_oracle(g: Callable[..., float], f: Callable[..., float], box: Sequence[Tuple[float, float]],
                   t: float, tol: float = 1e-6, center: Sequence[float] | None = None) -> float:
    """ Nested adaptive Gauss-Kronrod quadrature of f exp(-g / t) over a box

    `center` is the minimum of g, passed to every axis as a breakpoint
    (default: the box centre).
    """
    box = [(float(a), float(b)) for a, b in box]
    if center is None:
        center = [0.5 * (a + b) for a, b in box]

    def integrand(*u):
        return f(*u) * np.exp(-g(*u) / t)

    opts = [{'points': [c], 'limit': MAX_SUBINTERVALS, 'epsrel': tol, 'epsabs': 0.0} for c in center]
    with warnings.catch_warnings():
        warnings.simplefilter('error', IntegrationWarning)
        try:
            value, error = nquad(integrand, box, opts=opts)
        except IntegrationWarning as exc:
            with warnings.catch_warnings():
                warnings.simplefilter('ignore', IntegrationWarning)
                estimate, error = nquad(integrand, box, opts=opts)
            raise QuadratureError(f"Laplace oracle did not converge: {exc}", estimate=estimate, abs_error=error) from exc
    logger.debug(f"Laplace oracle t={t:g}: {value:.12g} +- {error:.2g}")
    return float(value)


def heat_exponent(n: int, form: LaplaceForm) -> Fraction:
    """ alpha = n - sum_i 1/(2 m_i) over the transverse directions """
    if form.n != n:
        raise ValueError(f"Form has {len(form.exponents)} transverse and {form.flat_dims} flat directions, expected {n}")
    return Fraction(n) - t_power(form)


def exponent_bounds_hold(n: int, form: LaplaceForm) -> bool:
    """ n/2 <= alpha <= n - 1/2, and alpha >= n/2 + 1/4 when some m_i >= 2 """
    alpha = heat_exponent(n, form)
    half = Fraction(n, 2)
    ok = half <= alpha <= n - Fraction(1, 2)
    if any(m >= 2 for m in form.exponents):
        ok = ok and alpha >= half + Fraction(1, 4)
    return ok
