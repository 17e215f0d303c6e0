""" Hinged energy h_{x,y}(z) = 1/2 (d^2(x, z) + d^2(z, y)) and its Taylor data at midpoints """
import itertools
import logging
from typing import Dict, List, Sequence, Tuple

import numpy as np

from subheat.abc import SRModel
from subheat.errors import StencilError, SubheatError, UnsupportedDegeneracyError
from subheat.flow import exp_map
from subheat.laplace import exponent_bounds_hold, heat_exponent
from subheat.shoot import Shooter
from subheat.types import (HingedOptions, InitialCovector, LaplaceForm, MidpointSet, ShootOptions,
                           TaylorCoefficient)
from subheat.workers import map_parallel

NODES = np.arange(-2, 3)
UNRELIABLE_FLOOR = 1e-6

Poly = Dict[Tuple[int, ...], float]


class HingedField:
    """ Hinged energy of the pair (x, y), expanded around a midpoint z0

    Distances at points near z0 are shot from both endpoints, seeded with
    the two halves of the minimizer through z0 (the half from y is the
    reversed geodesic, starting at y with covector -p(T)).
    """

    def __init__(self, model: SRModel, x, y, z0=None, options: HingedOptions = None,
                 shoot_options: ShootOptions = None, midpoint_set: MidpointSet = None,
                 chart=None, logger: logging.Logger = None):
        self.model = model
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.options = options or HingedOptions()
        self.shooter = Shooter(model, shoot_options, logger)
        self.__logger = logger or logging.root
        self.midpoint_set = midpoint_set or self.shooter.midpoints(self.x, self.y)
        if not len(self.midpoint_set.points):
            raise SubheatError("The pair has no minimizing geodesic")
        mids = self.midpoint_set.points
        j = 0 if z0 is None else int(np.argmin(np.linalg.norm(mids - np.asarray(z0, dtype=float), axis=1)))
        self.z0 = mids[j] if z0 is None else np.asarray(z0, dtype=float)
        self.d2 = self.midpoint_set.solutions[j].T ** 2
        self.chart = np.eye(model.n) if chart is None else np.asarray(chart, dtype=float)
        self._guess_x, self._guess_y = self._half_guesses(self.midpoint_set.solutions[j])
        self.hessian: np.ndarray | None = None
        self.kernel_dim: int | None = None
        self.taylor4: List[TaylorCoefficient] | None = None

    @property
    def logger(self) -> logging.Logger:
        """ Logger """
        return self.__logger

    def _half_guesses(self, solution):
        T = solution.T
        flow = exp_map(self.model, self.x, solution.p0, T, self.shooter.options.flow_tol)
        back = InitialCovector.from_covector(self.model, self.y, -flow.covector)
        return (solution.p0.params, T / 2), (back.params, T / 2)

    def __call__(self, z, local: bool = True) -> float:
        """ h(z); `local` seeds the shooting with the halves of the minimizer through z0 """
        z = np.asarray(z, dtype=float)
        if local:
            dx, _ = self.shooter.distance(self.x, z, guesses=[self._guess_x], multistart=False)
            dy, _ = self.shooter.distance(self.y, z, guesses=[self._guess_y], multistart=False)
        else:
            dx, _ = self.shooter.distance(self.x, z)
            dy, _ = self.shooter.distance(self.y, z)
        return 0.5 * (dx * dx + dy * dy)

    def _values(self, offsets: np.ndarray) -> np.ndarray:
        points = self.z0 + offsets @ self.chart.T

        def value(z):
            try:
                return self(z)
            except SubheatError as exc:
                raise StencilError(f"Hinged energy failed at stencil point {z.tolist()}", point=z) from exc

        return np.array(map_parallel(value, list(points)))

    def _hessian_at(self, h: float) -> np.ndarray:
        n = self.model.n
        eye = np.eye(n)
        offsets = [np.zeros(n)]
        for i in range(n):
            offsets += [h * eye[i], -h * eye[i]]
        for i, j in itertools.combinations(range(n), 2):
            offsets += [h * (eye[i] + eye[j]), h * (eye[i] - eye[j]), h * (-eye[i] + eye[j]), -h * (eye[i] + eye[j])]
        f = self._values(np.array(offsets))
        H = np.zeros((n, n))
        for i in range(n):
            H[i, i] = (f[1 + 2 * i] - 2 * f[0] + f[2 + 2 * i]) / (h * h)
        base = 1 + 2 * n
        for k, (i, j) in enumerate(itertools.combinations(range(n), 2)):
            pp, pm, mp, mm = f[base + 4 * k:base + 4 * k + 4]
            H[i, j] = H[j, i] = (pp - pm - mp + mm) / (4 * h * h)
        return H

    def compute_hessian(self) -> Tuple[np.ndarray, int]:
        """ Hessian at z0 in the chart, central differences with Richardson over {h, h/2} """
        h = self.options.hess_step
        try:
            coarse, fine = self._hessian_at(h), self._hessian_at(h / 2)
        except StencilError as exc:
            self.logger.warning(f"Shrinking the Hessian stencil after: {exc}")
            h /= 2
            coarse, fine = self._hessian_at(h), self._hessian_at(h / 2)
        H = (4 * fine - coarse) / 3
        H = 0.5 * (H + H.T)
        eig = np.linalg.eigvalsh(H)
        top = max(float(np.max(np.abs(eig))), np.finfo(float).tiny)
        if eig[0] < -1e-6 * top:
            self.logger.warning(f"Hessian at {self.z0.tolist()} is not positive semi-definite: {eig.tolist()}")
        self.hessian = H
        self.kernel_dim = int(np.sum(eig < self.options.kernel_rtol * top))
        return H, self.kernel_dim

    def _tensor_coefficients(self, s: float) -> np.ndarray:
        n = self.model.n
        grid = np.array(list(itertools.product(NODES, repeat=n)), dtype=float) * s
        values = self._values(grid).reshape((len(NODES),) * n)
        inverse = np.linalg.inv(np.vander(NODES * s, len(NODES), increasing=True))
        for axis in range(n):
            values = np.moveaxis(np.tensordot(inverse, values, axes=([1], [axis])), 0, axis)
        return values

    def compute_taylor4(self, chart=None) -> List[TaylorCoefficient]:
        """ Monomial coefficients of total degree <= 4 at z0 with Richardson over {s, s/2} """
        if chart is not None:
            self.chart = np.asarray(chart, dtype=float)
        s = self.options.taylor_step
        coarse = self._tensor_coefficients(s)
        fine = self._tensor_coefficients(s / 2)
        table = []
        for exponents in itertools.product(range(5), repeat=self.model.n):
            if sum(exponents) > 4:
                continue
            value = (4 * fine[exponents] - coarse[exponents]) / 3
            error = abs(fine[exponents] - coarse[exponents]) / 3
            reliable = not (error > self.options.unreliable_rtol * abs(value) and error > UNRELIABLE_FLOOR)
            if not reliable:
                self.logger.warning(f"Unreliable Taylor coefficient {exponents}: {value:.6g} +- {error:.2g}")
            table.append(TaylorCoefficient(exponents=tuple(exponents), coefficient=float(value),
                                           uncertainty=float(error), reliable=reliable))
        self.taylor4 = sorted(table, key=lambda c: (c.degree, tuple(-e for e in c.exponents)))
        return self.taylor4


def hinged_eval(model: SRModel, x, y, z, opts: ShootOptions = None) -> float:
    shooter = Shooter(model, opts)
    dx, _ = shooter.distance(x, z)
    dy, _ = shooter.distance(y, z)
    return 0.5 * (dx * dx + dy * dy)


def hinged_hessian(model: SRModel, x, y, z0, chart=None, options: HingedOptions = None,
                   shoot_options: ShootOptions = None) -> Tuple[np.ndarray, int]:
    field = HingedField(model, x, y, z0, options, shoot_options, chart=chart)
    return field.compute_hessian()


def hinged_taylor4(model: SRModel, x, y, z0, chart=None, options: HingedOptions = None,
                   shoot_options: ShootOptions = None) -> List[TaylorCoefficient]:
    field = HingedField(model, x, y, z0, options, shoot_options, chart=chart)
    return field.compute_taylor4()


# Polynomials as {exponent tuple: coefficient}

def _poly_mul(a: Poly, b: Poly, max_degree: int) -> Poly:
    out: Poly = {}
    for ea, ca in a.items():
        for eb, cb in b.items():
            e = tuple(i + j for i, j in zip(ea, eb))
            if sum(e) <= max_degree:
                out[e] = out.get(e, 0.0) + ca * cb
    return out


def _poly_add(*polys: Poly, scale: Sequence[float] = None) -> Poly:
    out: Poly = {}
    for k, p in enumerate(polys):
        w = 1.0 if scale is None else scale[k]
        for e, c in p.items():
            out[e] = out.get(e, 0.0) + w * c
    return out


def _poly_diff(a: Poly, i: int) -> Poly:
    out: Poly = {}
    for e, c in a.items():
        if e[i]:
            f = list(e)
            f[i] -= 1
            out[tuple(f)] = out.get(tuple(f), 0.0) + c * e[i]
    return out


def _split_off(poly: Poly, morse: int) -> List[Poly]:
    """ Write the part of poly divisible by some Morse variable as sum_i u_i D_i """
    parts: List[Poly] = [{} for _ in range(morse)]
    for e, c in poly.items():
        for i in range(morse):
            if e[i]:
                f = list(e)
                f[i] -= 1
                parts[i][tuple(f)] = parts[i].get(tuple(f), 0.0) + c
                break
    return parts


def splitting(quadratic: Sequence[float], cubic: Poly, quartic: Poly):
    """ Corank-1 splitting up to degree 4

    For h = sum_i a_i u_i^2 + C + D in variables (u_1..u_r, v) returns the
    v^4 coefficient psi of the normal form sum_i a_i u~_i^2 + psi v^4 + O(5),
    the v^3 coefficient, and the corrections {i: P_i} with u~_i = u_i + P_i(u, v).
    """
    r = len(quadratic)
    n = r + 1
    a = list(quadratic)
    second = [{e: c / (2 * a[i]) for e, c in part.items()} for i, part in enumerate(_split_off(cubic, r))]
    vcube = cubic.get((0,) * r + (3,), 0.0)
    quartic_new = _poly_add(quartic, *[_poly_mul(p, p, 4) for p in second],
                            *[_poly_mul(_poly_diff(cubic, i), second[i], 4) for i in range(r)],
                            scale=[1.0] + a + [-1.0] * r)
    third = [{e: c / (2 * a[i]) for e, c in part.items()} for i, part in enumerate(_split_off(quartic_new, r))]
    psi = quartic_new.get((0,) * r + (4,), 0.0)
    corrections = {i: {_uv(e, n): c for e, c in _poly_add(second[i], third[i]).items() if c} for i in range(r)}
    return psi, vcube, corrections


def _uv(e: Tuple[int, ...], n: int) -> Tuple[int, int]:
    return sum(e[:n - 1]), e[n - 1]


def to_laplace_form(field: HingedField) -> LaplaceForm:
    """ Laplace normal form around field.z0

    Morse directions get m = 1 with c = eigenvalue / 2. Kernel directions
    are flat when the midpoint set is a continuum of that dimension; a
    single remaining kernel direction is treated by corank-1 splitting
    (m = 2, c = quartic coefficient after eliminating mixed terms).
    """
    if field.hessian is None:
        field.compute_hessian()
    H = field.hessian
    eig, vecs = np.linalg.eigh(H)
    top = max(float(np.max(np.abs(eig))), np.finfo(float).tiny)
    kernel = eig < field.options.kernel_rtol * top
    kernel_dim = int(np.sum(kernel))
    flat = min(field.midpoint_set.dim_estimate, kernel_dim)
    corank = kernel_dim - flat
    morse = [float(e) / 2 for e in eig[~kernel]]
    directions = np.column_stack([vecs[:, ~kernel], vecs[:, kernel]])
    jacobian = abs(float(np.linalg.det(field.chart))) * field.model.volume_density(field.z0)
    substitution = {}
    if corank == 0:
        form = LaplaceForm(exponents=(1,) * len(morse), flat_dims=flat, diag_coeffs=tuple(morse),
                           jacobian_at_z0=jacobian, directions=directions)
    elif corank == 1 and flat == 0:
        base_chart = field.chart
        table = field.compute_taylor4(base_chart @ directions)
        field.chart = base_chart
        quadratic = [0.0] * len(morse)
        cubic: Poly = {}
        quartic: Poly = {}
        for coef in table:
            if coef.degree == 2 and max(coef.exponents) == 2 and coef.exponents[-1] == 0:
                quadratic[coef.exponents.index(2)] = coef.coefficient
            elif coef.degree == 3:
                cubic[coef.exponents] = coef.coefficient
            elif coef.degree == 4:
                quartic[coef.exponents] = coef.coefficient
        psi, vcube, substitution = splitting(quadratic, cubic, quartic)
        if abs(vcube) > 1e-3 * max(1.0, abs(psi)):
            field.logger.warning(f"Cubic term {vcube:.3g} along the kernel direction; z0 may not be a minimum")
        if not psi > 0:
            raise UnsupportedDegeneracyError(f"Quartic along the kernel direction vanishes ({psi:.3g})",
                                             kernel_dim=kernel_dim)
        form = LaplaceForm(exponents=(1,) * len(morse) + (2,), flat_dims=0,
                           diag_coeffs=tuple(quadratic) + (psi,), jacobian_at_z0=jacobian,
                           directions=directions, substitution=substitution)
    else:
        raise UnsupportedDegeneracyError(f"Degeneracy of corank {corank} is not supported", kernel_dim=kernel_dim)
    if not exponent_bounds_hold(field.model.n, form):
        field.logger.warning(f"Exponent {heat_exponent(field.model.n, form)} outside the general bounds")
    return form
