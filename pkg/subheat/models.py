""" Catalogue of sub-Riemannian structures

All charts are global. The reference volume is Lebesgue in the chart for
every model (Haar measure for the groups, the standard measure for Grushin).
"""
import json
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import expm
from scipy.stats import qmc

from subheat.abc import SRModel
from subheat.errors import InvalidModelError
from subheat.types import CotangentState

MODEL_IDS = ('heisenberg', 'grushin', 'free36', 'two_step')

HEISENBERG_B = (np.array([[0., 1.], [-1., 0.]]),)

FREE36_B = (
    np.array([[0., 0., 0.], [0., 0., 1.], [0., -1., 0.]]),
    np.array([[0., 0., 1.], [0., 0., 0.], [-1., 0., 0.]]),
    np.array([[0., 1., 0.], [-1., 0., 0.], [0., 0., 0.]]),
)


def _sinc(a):
    return np.sinc(np.asarray(a) / np.pi)


def _sphere_point(s: np.ndarray) -> np.ndarray:
    """ Unit vector of S^{k-1} from its chart parameters (angle or stereographic) """
    if s.size == 1:
        return np.array([np.cos(s[0]), np.sin(s[0])])
    r2 = float(s @ s)
    return np.append(2.0 * s, r2 - 1.0) / (r2 + 1.0)


def _sphere_jacobian(s: np.ndarray) -> np.ndarray:
    if s.size == 1:
        return np.array([[-np.sin(s[0])], [np.cos(s[0])]])
    d = float(s @ s) + 1.0
    top = 2.0 * np.eye(s.size) / d - 4.0 * np.outer(s, s) / d ** 2
    return np.vstack([top, 4.0 * s / d ** 2])


def _sphere_chart(u: np.ndarray) -> np.ndarray:
    if u.size == 2:
        return np.array([np.arctan2(u[1], u[0])])
    return u[:-1] / (1.0 - u[-1])


class TwoStepGroup(SRModel):
    """ 2-step Carnot group on R^k x R^m

    Coordinates q = (x, z). The frame is X_i = d/dx_i - 1/2 sum_{h,j} b^h_ij x_j d/dz_h,
    so that [X_i, X_j] = sum_h b^h_ij d/dz_h and the group law is
    (x, z) * (x', z') = (x + x', z + z' + 1/2 x^T B_h x').

    Arclength covectors are parameterized by the horizontal unit vector
    u = (<p, X_i(x)>)_i, in an angle (k = 2) or stereographic (k > 2) chart,
    followed by the vertical part w = p_z.
    """

    def __init__(self, bracket_matrices: Sequence[np.ndarray], name: str = 'two_step'):
        matrices = tuple(np.array(b, dtype=float) for b in bracket_matrices)
        if not matrices:
            raise InvalidModelError("At least one bracket matrix is required")
        k = matrices[0].shape[0]
        for b in matrices:
            if b.shape != (k, k):
                raise InvalidModelError(f"Bracket matrices must all be {k}x{k}, got {b.shape}")
            if not np.array_equal(b, -b.T):
                raise InvalidModelError(f"Bracket matrix is not skew-symmetric: {b.tolist()}")
        self._name = name
        self._B = matrices
        self._k = k
        self._m = len(matrices)
        self._stack = np.stack(matrices)  # (m, k, k)
        self._jac = np.zeros((k, self.n, self.n))
        for h, b in enumerate(matrices):
            self._jac[:, k + h, :k] = -0.5 * b
        self._jac.setflags(write=False)

    @property
    def name(self) -> str:
        return self._name

    @property
    def n(self) -> int:
        return self._k + self._m

    @property
    def k(self) -> int:
        return self._k

    @property
    def m(self) -> int:
        return self._m

    @property
    def Q(self) -> int:
        return self._k + 2 * self._m

    @property
    def bracket_matrices(self) -> tuple[np.ndarray, ...]:
        return tuple(b.copy() for b in self._B)

    def B(self, tau) -> np.ndarray:
        """ B(tau) = sum_h tau_h B_h """
        return np.tensordot(np.atleast_1d(np.asarray(tau, dtype=float)), self._stack, axes=1)

    def frame(self, q):
        q = np.asarray(q, dtype=float)
        x = q[:self._k]
        X = np.zeros((self._k, self.n))
        X[:, :self._k] = np.eye(self._k)
        X[:, self._k:] = -0.5 * np.einsum('hij,j->ih', self._stack, x)
        return X

    def frame_jacobian(self, q):
        return self._jac

    def group_product(self, a, b) -> np.ndarray:
        """ a * b; either argument may be a stack of points (..., n) """
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        k = self._k
        z = a[..., k:] + b[..., k:] + 0.5 * np.einsum('...i,hij,...j->...h', a[..., :k], self._stack, b[..., :k])
        return np.concatenate([a[..., :k] + b[..., :k], z], axis=-1)

    def group_inverse(self, a) -> np.ndarray:
        return -np.asarray(a, dtype=float)

    def covector(self, x, params):
        x = np.asarray(x, dtype=float)
        params = np.asarray(params, dtype=float)
        u = _sphere_point(params[:self._k - 1])
        w = params[self._k - 1:]
        c = self.frame(x)[:, self._k:]  # (k, m) vertical coefficients
        return np.concatenate([u - c @ w, w])

    def covector_jacobian(self, x, params):
        x = np.asarray(x, dtype=float)
        params = np.asarray(params, dtype=float)
        k, m = self._k, self._m
        J = np.zeros((self.n, self.n - 1))
        J[:k, :k - 1] = _sphere_jacobian(params[:k - 1])
        J[:k, k - 1:] = -self.frame(x)[:, k:]
        J[k:, k - 1:] = np.eye(m)
        return J

    def covector_params(self, x, p):
        u = self.frame(x) @ np.asarray(p, dtype=float)
        u = u / np.linalg.norm(u)
        return np.concatenate([_sphere_chart(u), np.asarray(p, dtype=float)[self._k:]])

    def closed_form(self, x, params, t):
        """ Exact geodesic: u' = -B(w) u, x' = u, z_h' = 1/2 x^T B_h u

        With A = B(w), the exponential of the block matrix
        [[-A, I, 0], [0, 0, B_h], [0, 0, -A]] carries e^{-tA}, int e^{-sA} ds
        and the double integral giving the area term of z_h.
        """
        x = np.asarray(x, dtype=float)
        params = np.asarray(params, dtype=float)
        k, m = self._k, self._m
        u0 = _sphere_point(params[:k - 1])
        A = self.B(params[k - 1:])
        eye = np.eye(k)
        block = np.zeros((3 * k, 3 * k))
        block[:k, :k] = -A
        block[:k, k:2 * k] = eye
        block[2 * k:, 2 * k:] = -A
        xi = None
        z = x[k:].copy()
        for h, b in enumerate(self._B):
            block[k:2 * k, 2 * k:] = b
            E = expm(t * block)
            if xi is None:
                xi = E[:k, k:2 * k] @ u0
            area = -u0 @ (E[:k, :k].T @ E[:k, 2 * k:]) @ u0
            z[h] += 0.5 * x[:k] @ b @ xi + 0.5 * area
        return np.concatenate([x[:k] + xi, z])

    def start_params(self, x, n_start, scale, seed=0):
        k, m = self._k, self._m
        w_max = 2.0 * np.pi / scale
        if k == 2 and m == 1:
            theta = 2.0 * np.pi * np.arange(n_start) / n_start
            w = w_max * np.array([0.0, 0.125, -0.125, 0.25, -0.25, 0.5, -0.5, 0.75, -0.75, 1.0, -1.0])
            tt, ww = np.meshgrid(theta, w, indexing='ij')
            return np.column_stack([tt.ravel(), ww.ravel()])
        sampler = qmc.Halton(d=2 + m if k > 2 else 1 + m, scramble=True, seed=seed)
        sample = sampler.random(n_start)
        if k == 2:
            angles = 2.0 * np.pi * sample[:, :1]
            w = w_max * (2.0 * sample[:, 1:] - 1.0)
            return np.column_stack([angles, w])
        # uniform directions on S^{k-1} restricted to the first three axes, then charted
        zc = 2.0 * sample[:, 0] - 1.0
        phi = 2.0 * np.pi * sample[:, 1]
        r = np.sqrt(1.0 - zc ** 2)
        u = np.zeros((n_start, k))
        u[:, 0] = r * np.cos(phi)
        u[:, 1] = r * np.sin(phi)
        u[:, -1] = np.clip(zc, -0.999, 0.999)
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        charts = np.array([_sphere_chart(row) for row in u])
        w = w_max * (2.0 * sample[:, 2:] - 1.0)
        return np.column_stack([charts, w])


class Heisenberg(TwoStepGroup):
    """ Heisenberg group, X_1 = dx - y/2 dz, X_2 = dy + x/2 dz """

    def __init__(self):
        super().__init__(HEISENBERG_B, name='heisenberg')

    def closed_form(self, x, params, t):
        theta, w = float(params[0]), float(params[1])
        return self.group_product(x, heisenberg_exp_origin(theta, w, t))


def heisenberg_exp_origin(theta: float, w: float, t: float) -> np.ndarray:
    """ Arclength geodesic from the origin with u(0) = (cos theta, sin theta), p_z = w

    Same curve as the classical (cos(wt + theta') - cos theta') / w form with
    theta' = theta - pi/2, written so that w -> 0 is regular.
    """
    a = w * t
    half = 0.5 * a
    s = t * _sinc(half)
    if abs(a) < 1e-3:
        zeta = a / 6.0 - a ** 3 / 120.0 + a ** 5 / 5040.0
    else:
        zeta = (a - np.sin(a)) / a ** 2
    return np.array([np.cos(theta + half) * s, np.sin(theta + half) * s, 0.5 * t * t * zeta])


class Grushin(SRModel):
    """ Grushin plane, X = dx, Y = x dy; Riemannian off the line x = 0

    At a Riemannian base point the arclength covectors are
    p = (cos theta, sin theta / |x0|). On the singular line Lambda_x is the
    pair of lines p_x = +-1, charted by p = (sign cos theta, tan theta).
    """

    SINGULAR = 1e-12

    @property
    def name(self) -> str:
        return 'grushin'

    @property
    def n(self) -> int:
        return 2

    @property
    def k(self) -> int:
        return 2

    def frame(self, q):
        return np.array([[1.0, 0.0], [0.0, float(q[0])]])

    def frame_jacobian(self, q):
        DX = np.zeros((2, 2, 2))
        DX[1, 1, 0] = 1.0
        return DX

    def _singular(self, x) -> bool:
        return abs(float(x[0])) < self.SINGULAR

    def covector(self, x, params):
        theta = float(params[0])
        if self._singular(x):
            return np.array([np.sign(np.cos(theta)) or 1.0, np.tan(theta)])
        return np.array([np.cos(theta), np.sin(theta) / abs(float(x[0]))])

    def covector_jacobian(self, x, params):
        theta = float(params[0])
        if self._singular(x):
            return np.array([[0.0], [1.0 / np.cos(theta) ** 2]])
        return np.array([[-np.sin(theta)], [np.cos(theta) / abs(float(x[0]))]])

    def covector_params(self, x, p):
        px, py = float(p[0]), float(p[1])
        if self._singular(x):
            theta = np.arctan(py / abs(px))
            return np.array([theta if px > 0 else np.pi + theta])
        return np.array([np.arctan2(abs(float(x[0])) * py, px)])

    def start_params(self, x, n_start, scale, seed=0):
        offset = 0.5 if self._singular(x) else 0.0
        return (2.0 * np.pi * (np.arange(n_start) + offset) / n_start)[:, None]

    def closed_form(self, x, params, t):
        p = self.covector(x, params)
        return grushin_flow(float(x[0]), float(x[1]), p[0], p[1], t)


def grushin_flow(x0: float, y0: float, px: float, py: float, t: float) -> np.ndarray:
    """ Exact Grushin geodesic: x'' = -py^2 x, y' = py x^2 """
    a = py * t
    x = x0 * np.cos(a) + px * t * _sinc(a)
    if abs(a) < 1e-3:
        f = a / 3.0 - a ** 3 / 15.0 + 2.0 * a ** 5 / 315.0
    else:
        f = (2.0 * a - np.sin(2.0 * a)) / (4.0 * a * a)
    y = (y0 + x0 * x0 * (2.0 * a + np.sin(2.0 * a)) / 4.0
         + px * px * t * t * f
         + x0 * px * t * np.sin(a) * _sinc(a))
    return np.array([float(x), float(y)])


def make_model(model_id: str, params: Iterable | None = None) -> SRModel:
    """ Build a catalogue model; `params` are the B matrices of `two_step` """
    if model_id == 'heisenberg':
        return Heisenberg()
    elif model_id == 'free36':
        return TwoStepGroup(FREE36_B, name='free36')
    elif model_id == 'grushin':
        return Grushin()
    elif model_id == 'two_step':
        if not params:
            raise InvalidModelError("two_step needs a non-empty list of bracket matrices")
        return TwoStepGroup([np.asarray(b, dtype=float) for b in params])
    raise InvalidModelError(f"Unknown model id {model_id!r}, expected one of {', '.join(MODEL_IDS)}")


def load_bracket_matrices(text: str) -> list[np.ndarray]:
    """ Parse a JSON array of row-major k x k matrices """
    try:
        data = json.loads(text)
        return [np.asarray(b, dtype=float) for b in data]
    except (ValueError, TypeError) as exc:
        raise InvalidModelError(f"Cannot parse bracket matrices: {exc}") from exc


def hamiltonian(model: SRModel, state: CotangentState) -> float:
    """ H(q, p) = 1/2 sum_i <p, X_i(q)>^2 """
    return model.hamiltonian(state.q, state.p)
