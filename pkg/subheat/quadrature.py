""" Quadrature engines shared by the kernel evaluators

- Fourier integrals int A(tau) exp(i omega tau) dtau of amplitudes analytic
  in a strip, evaluated on a horizontal line Im tau = sigma chosen at the
  minimum of the log-envelope, in log-space.
- Composite tensor Gauss-Legendre rules on boxes, refined by doubling.
- Stable complex helpers for z / sinh z and z coth z.
"""
import logging
import warnings
from typing import Callable, Tuple

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import minimize_scalar

from subheat.errors import QuadratureError

SMALL_Z = 1e-3
MAX_PANELS = 4000
WYNN_WINDOW = 40

logger = logging.getLogger(__name__)


def log_z_over_sinh(z):
    """ Analytic continuation of log(z / sinh z) from the real axis, Re z >= 0 """
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    small = np.abs(z) < SMALL_Z
    zs = z[small]
    out[small] = np.log1p(-zs * zs / 6 + 7 * zs ** 4 / 360)
    zb = z[~small]
    out[~small] = np.log(zb) - (zb + np.log1p(-np.exp(-2 * zb)) - np.log(2.0))
    return out


def z_coth_z(z):
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    small = np.abs(z) < SMALL_Z
    zs = z[small]
    out[small] = 1 + zs * zs / 3 - zs ** 4 / 45
    zb = z[~small]
    e = np.exp(-2 * zb)
    out[~small] = zb * (1 + e) / (1 - e)
    return out


def log_sinh(x: float) -> float:
    """ log sinh x for real x > 0 without overflow """
    return x + np.log1p(-np.exp(-2 * x)) - np.log(2.0)


def wynn_epsilon(sums) -> Tuple[complex, float]:
    """ Wynn epsilon extrapolation of a sequence of partial sums

    Returns the estimate and the gap between the last two even-column
    estimates as an error indicator.
    """
    s = [complex(v) for v in sums]
    if len(s) < 3:
        return s[-1], float('inf')
    prev = [0j] * (len(s) + 1)
    cur = list(s)
    best = [s[-1]]
    for k in range(1, len(s)):
        nxt = []
        for j in range(len(cur) - 1):
            diff = cur[j + 1] - cur[j]
            if diff == 0:
                nxt.append(complex(np.inf))
            else:
                nxt.append(prev[j + 1] + 1.0 / diff)
        prev, cur = cur, nxt
        if k % 2 == 0 and cur and np.isfinite(cur[-1]):
            best.append(cur[-1])
        if len(cur) < 2:
            break
    if len(best) < 2:
        return best[-1], float('inf')
    return best[-1], float(abs(best[-1] - best[-2]))


def _panel(fn: Callable[[np.ndarray], np.ndarray], a: float, b: float, tol: float) -> Tuple[complex, float]:
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', IntegrationWarning)
        re, e1 = quad(lambda s: fn(np.array([s]))[0].real, a, b, epsabs=0.0, epsrel=tol, limit=200)
        im, e2 = quad(lambda s: fn(np.array([s]))[0].imag, a, b, epsabs=0.0, epsrel=tol, limit=200)
    return complex(re, im), e1 + e2


def saddle_line(log_amp: Callable[[np.ndarray], np.ndarray], omega: float,
                sigma_min: float, sigma_max: float) -> float:
    """ sigma in [sigma_min, sigma_max] minimizing E(sigma) = Re log A(i sigma) - omega sigma """
    if sigma_max <= sigma_min:
        return sigma_min

    def envelope(sigma):
        return float(log_amp(np.array([1j * sigma]))[0].real) - omega * sigma

    res = minimize_scalar(envelope, bounds=(sigma_min, sigma_max), method='bounded', options={'xatol': 1e-12})
    sigma = float(res.x)
    edge = envelope(sigma_min)
    if np.isfinite(edge) and edge <= envelope(sigma):
        return sigma_min
    return sigma


def fourier_line_integral(log_amp: Callable[[np.ndarray], np.ndarray], omega: float, sigma_max: float,
                          parity: int = 1, tol: float = 1e-10, scale: float = 1.0,
                          sigma_min: float = 0.0) -> Tuple[float, float, float]:
    """ int_R A(tau) exp(i omega tau) dtau for A even (parity 1) or odd (parity -1)

    A must be real on the real axis and analytic for 0 <= Im tau <= sigma_max;
    the line is placed at the minimum of the log-envelope on [sigma_min, sigma_max].
    Returns (log|I|, sign, relative error) where I is the integral for
    parity 1 and I / i for parity -1. `scale` is the decay length of A,
    used as the panel width when the oscillation is slow.
    """
    omega = abs(float(omega))
    sigma = saddle_line(log_amp, omega, sigma_min, sigma_max)
    probe = np.array([0.0, 0.25, 0.5, 1.0, 2.0]) * scale + 1j * sigma
    height = float(np.max(log_amp(probe).real)) - omega * sigma

    def integrand(s):
        return np.exp(log_amp(s + 1j * sigma) - (height + omega * sigma) + 1j * omega * s)

    width = np.pi / omega if omega * scale > np.pi else scale
    sums = []
    total = 0j
    error = 0.0
    a = 0.0
    estimate = None
    for k in range(MAX_PANELS):
        piece, err = _panel(integrand, a, a + width, tol * 1e-2)
        total += piece
        error += err
        sums.append(total)
        a += width
        if k > 4 and abs(piece) < 1e-3 * tol * abs(total):
            estimate = total
            break
        if k >= 10:
            value, gap = wynn_epsilon(sums[-WYNN_WINDOW:])
            if gap <= tol * abs(value):
                estimate = value
                error += gap
                break
    if estimate is None:
        raise QuadratureError(f"Fourier integral did not converge after {MAX_PANELS} panels",
                              estimate=float(abs(total)), abs_error=float(error))
    part = 2 * (estimate.real if parity > 0 else estimate.imag)
    if part == 0:
        raise QuadratureError("Fourier integral cancelled to zero", estimate=0.0, abs_error=float(error))
    rel = float(error) / abs(part) * 2
    return float(np.log(abs(part)) + height), float(np.sign(part)), rel


def gauss_legendre_panels(a: float, b: float, panels: int, order: int = 8) -> Tuple[np.ndarray, np.ndarray]:
    """ Nodes and weights of the composite Gauss-Legendre rule on [a, b] """
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def tensor_rule(box, panels: int, order: int = 8) -> Tuple[np.ndarray, np.ndarray]:
    """ Tensor product of composite Gauss-Legendre rules; returns (points (N, d), weights (N,)) """
    rules = [gauss_legendre_panels(a, b, panels, order) for a, b in box]
    grids = np.meshgrid(*[r[0] for r in rules], indexing='ij')
    weights = np.ones_like(grids[0])
    for axis, (_, w) in enumerate(rules):
        shape = [1] * len(rules)
        shape[axis] = -1
        weights = weights * w.reshape(shape)
    return np.column_stack([g.ravel() for g in grids]), weights.ravel()
