""" Heat kernels of the catalogue models

Every evaluation path works in log-space and returns a `KernelSample`:

- closed forms on the vertical axis of Heisenberg and of the free (3,6) group
- Gaveau-type integrals over the dual of the vertical layer for any 2-step
  group: a shifted-contour line integral when m = 1, a tensor rule on a
  truncated box otherwise
- the radial one-dimensional reduction of the (3,6) vertical integral
- the Mehler integral for the Grushin plane
- the semigroup check p_t(x, y) = int p_{t/2}(x, z) p_{t/2}(z, y) dz
"""
import logging
from typing import Iterable, List, Sequence, Tuple

import numpy as np
from scipy.integrate import quad
from scipy.spatial import cKDTree

from subheat.abc import KernelEvaluator, SRModel
from subheat.errors import (BoxTooSmallError, InvalidModelError, QuadratureError, ToleranceUnachievableError,
                            TruncationPoleError)
from subheat.models import FREE36_B, HEISENBERG_B, Grushin, TwoStepGroup
from subheat.quadrature import (fourier_line_integral, gauss_legendre_panels, log_sinh, log_z_over_sinh,
                                tensor_rule, z_coth_z)
from subheat.types import KernelMethod, KernelSample
from subheat.workers import map_parallel

MAX_OMEGA = 1e4
POLE_MARGIN = 1e-6
BOX_CHUNK = 100_000
TAIL_LENGTH = 40.0
GLUE_HALF_WIDTH = (4.0, 3.0)

logger = logging.getLogger(__name__)


def _check_time(t: float):
    if not t > 0 or not np.isfinite(t):
        raise ValueError(f"Time must be positive and finite, got {t}")


def log_heisenberg_vertical(z: float, t: float) -> float:
    """ log of 1 / (8 t^2 (1 + cosh(pi z / t))) """
    _check_time(t)
    a = abs(np.pi * z / t)
    log_one_plus_cosh = a + 2.0 * np.log1p(np.exp(-a)) - np.log(2.0)
    return float(-2.0 * np.log(t) - np.log(8.0) - log_one_plus_cosh)


def heisenberg_vertical_closed(z: float, t: float) -> float:
    return float(np.exp(log_heisenberg_vertical(z, t)))


def log_free36_vertical(t: float, z_norm: float = 1.0) -> float:
    """ log p_t(0, (0, z)) on the free (3,6) group, rho = |z| / t:

        8 pi / (4 pi t)^{9/2} * 2 pi^3 sinh^4(pi rho / 2) / (rho sinh^3(pi rho))
    """
    _check_time(t)
    rho = abs(z_norm) / t
    base = np.log(8 * np.pi) - 4.5 * np.log(4 * np.pi * t)
    if rho < 1e-6:
        return float(base + np.log(np.pi ** 4 / 8))
    return float(base + np.log(2 * np.pi ** 3) + 4 * log_sinh(np.pi * rho / 2)
                 - np.log(rho) - 3 * log_sinh(np.pi * rho))


def free36_vertical_closed(t: float, z_norm: float = 1.0) -> float:
    return float(np.exp(log_free36_vertical(t, z_norm)))


def free36_radial(t: float, z_norm: float = 1.0, tol: float = 1e-10) -> KernelSample:
    """ (3,6) vertical kernel from the one-dimensional integral

        p = 8 pi / (4 pi t)^{9/2} / rho * int_0^inf tau^2 sin(rho tau) / sinh tau dtau
    """
    _check_time(t)
    rho = abs(z_norm) / t
    base = np.log(8 * np.pi) - 4.5 * np.log(4 * np.pi * t)
    x = np.zeros(6)
    y = np.array([0., 0., 0., abs(z_norm), 0., 0.])
    if rho < 1e-8:
        value, error = quad(lambda s: np.exp(3 * np.log(s) - log_sinh(s)) if s > 0 else 0.0, 0, np.inf,
                            epsabs=0.0, epsrel=tol)
        return KernelSample.from_log(t, x, y, base + np.log(value), KernelMethod.RADIAL_REDUCTION, error / value)

    def log_amp(tau):
        with np.errstate(divide='ignore'):
            return np.log(tau) + log_z_over_sinh(tau)

    if rho > 2:
        sigma_min, sigma_max = 0.5 * np.pi, np.pi - 0.5 / rho
    else:
        sigma_min = sigma_max = 0.0
    log_int, sign, rel = fourier_line_integral(log_amp, rho, sigma_max, parity=-1, tol=tol, sigma_min=sigma_min)
    if sign <= 0:
        raise QuadratureError(f"Radial integral is not positive at rho={rho:g}", estimate=-np.exp(log_int), abs_error=rel)
    return KernelSample.from_log(t, x, y, base - np.log(rho) + log_int - np.log(2.0),
                                 KernelMethod.RADIAL_REDUCTION, rel)


def _spectrum(model: TwoStepGroup, x: np.ndarray, tau: np.ndarray) -> Tuple[np.ndarray, np.ndarray | None]:
    """ |eigenvalues| of i B(tau) and the weights |<v_j, x>|^2, batched over rows of tau """
    mats = 1j * np.einsum('nh,hij->nij', tau, np.stack(model.bracket_matrices))
    if not np.any(x):
        return np.abs(np.linalg.eigvalsh(mats)), None
    mu, vecs = np.linalg.eigh(mats)
    weights = np.abs(np.einsum('nij,i->nj', vecs.conj(), x)) ** 2
    return np.abs(mu), weights


def _log_prefactor(model: TwoStepGroup, t: float) -> float:
    return float(np.log(2.0) - 0.5 * model.Q * np.log(4 * np.pi * t))


def _gaveau_line(model: TwoStepGroup, x: np.ndarray, z: np.ndarray, t: float, tol: float) -> Tuple[float, float]:
    lam, weights = _spectrum(model, x, np.ones((1, 1)))
    lam = lam[0]
    weights = np.zeros_like(lam) if weights is None else weights[0]
    lam_max = float(lam.max())
    if lam_max == 0:
        raise InvalidModelError("Bracket matrix vanishes; the Gaveau integral diverges")

    def log_amp(tau):
        a = np.multiply.outer(tau, lam)
        return 0.5 * log_z_over_sinh(a).sum(axis=-1) - (z_coth_z(a) @ weights) / (4 * t)

    omega = abs(float(z[0])) / t
    scale = 1.0 / (0.5 * lam.sum() + float(weights @ lam) / (4 * t))
    log_int, sign, rel = fourier_line_integral(log_amp, omega, np.pi / lam_max * (1 - 1e-9),
                                               parity=1, tol=tol, scale=scale)
    if sign <= 0:
        raise QuadratureError(f"Gaveau integral is not positive at z={z.tolist()}, t={t:g}",
                              estimate=-np.exp(log_int), abs_error=rel)
    return _log_prefactor(model, t) + log_int, rel


def _box_integrand(model: TwoStepGroup, x: np.ndarray, z: np.ndarray, t: float, tau: np.ndarray,
                   form: str) -> np.ndarray:
    out = np.empty(len(tau))
    for start in range(0, len(tau), BOX_CHUNK):
        chunk = tau[start:start + BOX_CHUNK]
        lam, weights = _spectrum(model, x, chunk)
        if form == 'sinh':
            log_v = 0.5 * log_z_over_sinh(lam).real.sum(axis=1)
            w = z_coth_z(lam).real
        else:
            sinc = np.sinc(lam / np.pi)
            log_v = -0.5 * np.log(sinc).sum(axis=1)
            w = np.cos(lam) / sinc
        quadratic = 0.0 if weights is None else (weights * w).sum(axis=1)
        out[start:start + BOX_CHUNK] = np.exp(log_v - quadratic / (4 * t)) * np.cos(chunk @ z / t)
    return out


def _gaveau_box(model: TwoStepGroup, x: np.ndarray, z: np.ndarray, t: float, tol: float, form: str,
                radius: float | None) -> Tuple[float, float]:
    m = model.m
    axis_lam = [float(np.max(np.abs(np.linalg.eigvalsh(1j * b)))) for b in model.bracket_matrices]
    lam_min = min(axis_lam)
    if lam_min == 0:
        raise InvalidModelError("A bracket matrix vanishes; the Gaveau integral diverges")
    if radius is None:
        radius = (np.log(1.0 / tol) + 10.0) / lam_min
    if form == 'sin':
        corners = radius * np.array(np.meshgrid(*[[-1.0, 1.0]] * m, indexing='ij')).reshape(m, -1).T
        lam_box, _ = _spectrum(model, np.zeros(model.k), corners)
        if lam_box.max() >= np.pi - POLE_MARGIN:
            raise TruncationPoleError(
                f"Truncation box of radius {radius:g} reaches the pole of lambda / sin lambda "
                f"(max |lambda| = {lam_box.max():.6g})")
    omega = float(np.linalg.norm(z)) / t
    panels = max(4, int(np.ceil(radius * max(omega, 1.0) / np.pi)))
    box = [(-radius, radius)] * m
    estimates = []
    for order in (8, 6):
        tau, weights = tensor_rule(box, panels, order)
        estimates.append(float(weights @ _box_integrand(model, x, z, t, tau, form)))
    value, coarse = estimates
    if value <= 0:
        raise QuadratureError(f"Gaveau box integral is not positive at z={z.tolist()}, t={t:g}",
                              estimate=value, abs_error=abs(value - coarse))
    logger.debug(f"Gaveau box integral m={m} radius={radius:.3g} panels={panels}: {value:.12g}")
    return _log_prefactor(model, t) + np.log(value), abs(value - coarse) / value


def gaveau_kernel(model: SRModel, q, t: float, tol: float = 1e-10, form: str = 'sinh',
                  radius: float | None = None) -> KernelSample:
    """ p_t(0, q) of a 2-step group, q = (x, z)

        2 / (4 pi t)^{Q/2} int_{R^m} V(tau) exp(-W(tau) x . x / 4t) cos(z . tau / t) dtau

    with V, W the matrix functions sqrt det(A / sinh A), A coth A of the
    skew matrix B(tau), evaluated per eigenvalue. `form` 'sin' uses
    lambda / sin lambda instead and refuses a truncation box reaching
    the first pole. For m = 1 with the sinh form the integral is taken
    on a shifted line in the complex tau plane.
    """
    if not isinstance(model, TwoStepGroup):
        raise InvalidModelError(f"Gaveau integral needs a 2-step group, got {model.name!r}")
    if form not in ('sinh', 'sin'):
        raise ValueError(f"Unknown Gaveau form {form!r}")
    _check_time(t)
    q = np.asarray(q, dtype=float)
    x, z = q[:model.k], q[model.k:]
    if model.m == 1 and form == 'sinh' and radius is None:
        log_value, rel = _gaveau_line(model, x, z, t, tol)
    else:
        log_value, rel = _gaveau_box(model, x, z, t, tol, form, radius)
    return KernelSample.from_log(t, np.zeros(model.n), q, log_value, KernelMethod.GAVEAU_INTEGRAL, rel)


def grushin_kernel(q, q2, t: float, tol: float = 1e-8) -> KernelSample:
    """ Grushin heat kernel from the Mehler kernel of the harmonic oscillator

        (2 pi t)^{-3/2} int_R sqrt(tau / sinh 2tau)
            exp(x x' tau / (t sinh 2tau) - (x^2 + x'^2) tau / (2t tanh 2tau)) cos((y - y') tau / t) dtau
    """
    _check_time(t)
    q = np.asarray(q, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    (x1, y1), (x2, y2) = q, q2
    omega = abs(y1 - y2) / t
    if omega > MAX_OMEGA:
        raise ToleranceUnachievableError(
            f"Oscillation frequency |y - y'| / t = {omega:.3g} exceeds {MAX_OMEGA:g}",
            achievable=min(1.0, tol * omega / MAX_OMEGA))
    square = x1 * x1 + x2 * x2
    cross = x1 * x2

    def log_amp(tau):
        u = 2.0 * tau
        lzs = log_z_over_sinh(u)
        return 0.5 * (np.log(0.5) + lzs) + cross / (2 * t) * np.exp(lzs) - square / (4 * t) * z_coth_z(u)

    sigma_max = 0.5 * np.pi - max(1e-3, 0.25 * np.sqrt(t))
    scale = 1.0 / (1.0 + square / (2 * t))
    log_int, sign, rel = fourier_line_integral(log_amp, omega, sigma_max, parity=1, tol=tol, scale=scale)
    if sign <= 0:
        raise QuadratureError(f"Mehler integral is not positive between {q.tolist()} and {q2.tolist()}",
                              estimate=-np.exp(log_int), abs_error=rel)
    return KernelSample.from_log(t, q, q2, -1.5 * np.log(2 * np.pi * t) + log_int,
                                 KernelMethod.MEHLER_INTEGRAL, rel)


class GaveauKernel(KernelEvaluator):
    """ Kernel of a 2-step group by left translation to the origin

    Vertical targets of Heisenberg and of the free (3,6) group use the
    closed forms.
    """

    def __init__(self, model: TwoStepGroup, tol: float = 1e-10, logger: logging.Logger = None):
        super().__init__(logger)
        self.model = model
        self.tol = tol

    @property
    def name(self) -> str:
        return f"gaveau:{self.model.name}"

    def _has(self, brackets) -> bool:
        mine = self.model.bracket_matrices
        return len(mine) == len(brackets) and all(np.array_equal(a, b) for a, b in zip(mine, brackets))

    def sample(self, t, a, b) -> KernelSample:
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        q = self.model.group_product(self.model.group_inverse(a), b)
        k = self.model.k
        if not np.any(q[:k]):
            if self._has(HEISENBERG_B):
                return KernelSample.from_log(t, a, b, log_heisenberg_vertical(q[k], t), KernelMethod.CLOSED_FORM)
            if self._has(FREE36_B):
                return KernelSample.from_log(t, a, b, log_free36_vertical(t, float(np.linalg.norm(q[k:]))),
                                             KernelMethod.CLOSED_FORM)
        s = gaveau_kernel(self.model, q, t, self.tol)
        s.x, s.y = a, b
        return s


class HeisenbergKernel(GaveauKernel):
    """ Heisenberg kernel with a vectorized batch path on the real tau axis """

    def batch(self, t, a, bs) -> np.ndarray:
        _check_time(t)
        q = self.model.group_product(self.model.group_inverse(np.asarray(a, dtype=float)), np.atleast_2d(bs))
        r2 = q[:, 0] ** 2 + q[:, 1] ** 2
        z = q[:, 2]
        omega = float(np.max(np.abs(z))) / t
        panels = max(20, int(np.ceil(TAIL_LENGTH * omega / np.pi)))
        tau, weights = gauss_legendre_panels(0.0, TAIL_LENGTH, panels)
        amp = np.exp(log_z_over_sinh(tau).real)
        coth = z_coth_z(tau).real
        out = np.empty(len(q))
        step = max(1, BOX_CHUNK // len(tau))
        for start in range(0, len(q), step):
            sl = slice(start, start + step)
            phase = np.cos(np.outer(z[sl], tau) / t)
            decay = np.exp(-np.outer(r2[sl], coth) / (4 * t))
            out[sl] = (decay * phase) @ (weights * amp)
        return np.maximum(2 * np.exp(_log_prefactor(self.model, t)) * out, 0.0)


class GrushinKernel(KernelEvaluator):
    def __init__(self, tol: float = 1e-8, logger: logging.Logger = None):
        super().__init__(logger)
        self.tol = tol

    @property
    def name(self) -> str:
        return 'mehler:grushin'

    def sample(self, t, a, b) -> KernelSample:
        return grushin_kernel(a, b, t, self.tol)


def make_kernel(model: SRModel, tol: float = 1e-10, logger: logging.Logger = None) -> KernelEvaluator:
    if isinstance(model, Grushin):
        return GrushinKernel(max(tol, 1e-12), logger)
    if isinstance(model, TwoStepGroup):
        if model.m == 1 and np.array_equal(model.bracket_matrices[0], HEISENBERG_B[0]):
            return HeisenbergKernel(model, tol, logger)
        return GaveauKernel(model, tol, logger)
    raise InvalidModelError(f"No heat kernel evaluator for model {model.name!r}")


def sample_kernel(evaluator: KernelEvaluator, times: Iterable[float], a, b) -> List[KernelSample]:
    """ Samples of p_t(a, b) over a time grid, evaluated in parallel """
    return map_parallel(lambda t: evaluator.sample(float(t), a, b), list(times))


def glue_box(x, y, half_width: Sequence[float] = GLUE_HALF_WIDTH, k: int | None = None) -> List[Tuple[float, float]]:
    """ Box centred between x and y: `half_width` = (horizontal, vertical) """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    k = len(x) if k is None else k
    centre = 0.5 * (x + y)
    widths = [half_width[0] if i < k else half_width[1] for i in range(len(x))]
    return [(c - w, c + w) for c, w in zip(centre, widths)]


def _face_points(box, panels: int, order: int) -> np.ndarray:
    faces = []
    for axis in range(len(box)):
        rest = [b for i, b in enumerate(box) if i != axis]
        pts, _ = tensor_rule(rest, panels, order) if rest else (np.zeros((1, 0)), None)
        for end in box[axis]:
            faces.append(np.insert(pts, axis, end, axis=1))
    return np.vstack(faces)


def _glue_integrand(evaluator: KernelEvaluator, x, y, t: float, points: np.ndarray) -> np.ndarray:
    return evaluator.batch(t / 2, x, points) * evaluator.batch(t / 2, y, points)


def semigroup_glue(evaluator: KernelEvaluator, x, y, t: float, box: Sequence[Tuple[float, float]] | None = None,
                   tol: float = 1e-3, panels: int = 4, max_doublings: int = 2, order: int = 8) -> KernelSample:
    """ p_t(x, y) as int p_{t/2}(x, z) p_{t/2}(z, y) dz over a box, Lebesgue measure

    The composite rule is refined by doubling its panels until two
    consecutive estimates agree to `tol`. The box is rejected when the
    integrand on its faces exceeds `tol` times its interior maximum.
    """
    _check_time(t)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    box = glue_box(x, y) if box is None else [(float(a), float(b)) for a, b in box]
    points, weights = tensor_rule(box, panels, order)
    values = _glue_integrand(evaluator, x, y, t, points)
    peak = float(values.max())
    if peak <= 0:
        raise QuadratureError("Glued integrand vanishes on the box", estimate=0.0, abs_error=0.0)
    faces = float(_glue_integrand(evaluator, x, y, t, _face_points(box, panels, order)).max())
    if faces > tol * peak:
        radius = 1.5 * max(0.5 * (b - a) for a, b in box)
        raise BoxTooSmallError(f"Glued integrand on the box faces is {faces / peak:.3g} of its maximum",
                               suggested_radius=radius)
    estimate = float(weights @ values)
    error = float('inf')
    for _ in range(max_doublings):
        panels *= 2
        points, weights = tensor_rule(box, panels, order)
        refined = float(weights @ _glue_integrand(evaluator, x, y, t, points))
        error = abs(refined - estimate)
        logger.debug(f"Semigroup glue t={t:g} panels={panels}: {refined:.12g} (change {error:.3g})")
        estimate = refined
        if error <= tol * abs(refined):
            return KernelSample(t=t, x=x, y=y, value=refined, log_value=float(np.log(refined)),
                                method=KernelMethod.SEMIGROUP_GLUE, est_error=error)
    raise QuadratureError(f"Semigroup glue did not converge with {panels} panels per axis",
                          estimate=estimate, abs_error=error)


def glue_mass_outside(evaluator: KernelEvaluator, x, y, t: float, centres, radius: float,
                      box: Sequence[Tuple[float, float]] | None = None, panels: int = 8, order: int = 8) -> float:
    """ Fraction of the glued integral outside the tube of `radius` around the points `centres` """
    _check_time(t)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    centres = np.atleast_2d(np.asarray(centres, dtype=float))
    box = glue_box(x, y) if box is None else box
    points, weights = tensor_rule(box, panels, order)
    mass = weights * _glue_integrand(evaluator, x, y, t, points)
    gaps, _ = cKDTree(centres).query(points)
    total = float(mass.sum())
    return float(mass[gaps > radius].sum() / total)
