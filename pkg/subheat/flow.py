""" Normal Hamiltonian flow, exponential map and conjugate points """
import logging

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq, minimize_scalar

from subheat.abc import SRModel
from subheat.errors import IntegrationError
from subheat.types import ConjugateTime, FlowResult, InitialCovector

DEFAULT_TOL = 1e-10
CONJUGATE_RTOL = 1e-10
ENERGY_SAMPLES = 64

logger = logging.getLogger(__name__)


def _hamiltonian_rhs(model: SRModel):
    n = model.n

    def rhs(_, y):
        dq, dp = model.hamiltonian_vector(y[:n], y[n:2 * n])
        return np.concatenate([dq, dp])

    return rhs


def _variational_rhs(model: SRModel, cols: int):
    n = model.n

    def rhs(_, y):
        q, p = y[:n], y[n:2 * n]
        dq, dp = model.hamiltonian_vector(q, p)
        phi = y[2 * n:].reshape(2 * n, cols)
        return np.concatenate([dq, dp, (model.linearization(q, p) @ phi).ravel()])

    return rhs


def integrate(model: SRModel, x, p, t_end: float, tol: float = DEFAULT_TOL, variational=None):
    """ Integrate the Hamiltonian system from (x, p) on [0, t_end] with dense output

    With `variational` (a (2n, c) matrix of initial tangent vectors) the
    linearized flow is integrated alongside.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    y0 = np.concatenate([x, p])
    if variational is None:
        rhs = _hamiltonian_rhs(model)
    else:
        variational = np.asarray(variational, dtype=float)
        rhs = _variational_rhs(model, variational.shape[1])
        y0 = np.concatenate([y0, variational.ravel()])
    sol = solve_ivp(rhs, (0.0, float(t_end)), y0, method='RK45', rtol=tol, atol=tol, dense_output=True)
    if sol.status < 0:
        raise IntegrationError(f"Geodesic integration failed at t={sol.t[-1]:.6g}: {sol.message}",
                               last_state=sol.y[:, -1], last_time=float(sol.t[-1]))
    return sol


def energy_drift(model: SRModel, times, states) -> float:
    n = model.n
    h = np.array([model.hamiltonian(s[:n], s[n:2 * n]) for s in states.T])
    return float(np.max(np.abs(h - h[0]))) if len(times) else 0.0


def exp_map(model: SRModel, x, p0: InitialCovector, t: float, tol: float = DEFAULT_TOL,
            samples: int = 0, closed_form: bool = False) -> FlowResult:
    """ Endpoint of the normal geodesic from x with initial covector p0 at time t

    `samples` > 0 also returns the trajectory at that many equispaced times.
    `closed_form` uses the model's exact exponential map where it has one.
    """
    x = np.asarray(x, dtype=float)
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    if t == 0:
        return FlowResult(endpoint=x.copy(), covector=p0.p0.copy())
    if closed_form and not samples:
        endpoint = model.closed_form(x, p0.params, t)
        if endpoint is not None:
            return FlowResult(endpoint=np.asarray(endpoint, dtype=float), covector=None)
    sol = integrate(model, x, p0.p0, t, tol)
    n = model.n
    grid = np.linspace(0.0, t, ENERGY_SAMPLES)
    trajectory = None
    if samples:
        times = np.linspace(0.0, t, samples)
        states = sol.sol(times)
        trajectory = (times, states[:n].T.copy(), states[n:2 * n].T.copy())
    final = sol.y[:, -1]
    return FlowResult(endpoint=final[:n].copy(), covector=final[n:2 * n].copy(),
                      energy_drift=energy_drift(model, grid, sol.sol(grid)), trajectory=trajectory)


def _initial_variation(model: SRModel, p0: InitialCovector) -> np.ndarray:
    n = model.n
    phi = np.zeros((2 * n, n - 1))
    phi[n:] = model.covector_jacobian(p0.x, p0.params)
    return phi


def _square_jacobian(model: SRModel, state: np.ndarray) -> np.ndarray:
    n = model.n
    q, p = state[:n], state[n:2 * n]
    dq, _ = model.hamiltonian_vector(q, p)
    phi = state[2 * n:].reshape(2 * n, n - 1)
    return np.column_stack([phi[:n], dq])


def exp_jacobian(model: SRModel, x, p0: InitialCovector, t: float, tol: float = DEFAULT_TOL,
                 method: str = 'variational', step: float = 1e-5) -> np.ndarray:
    """ n x n derivative of (params, t) -> exp_map; last column is d/dt

    `method` is 'variational' (linearized flow) or 'fd' (central differences).
    """
    x = np.asarray(x, dtype=float)
    n = model.n
    if method == 'variational':
        if t == 0:
            dq, _ = model.hamiltonian_vector(x, p0.p0)
            return np.column_stack([np.zeros((n, n - 1)), dq])
        sol = integrate(model, x, p0.p0, t, tol, variational=_initial_variation(model, p0))
        return _square_jacobian(model, sol.y[:, -1])
    elif method == 'fd':
        columns = []
        for i in range(n - 1):
            e = np.zeros(n - 1)
            e[i] = step
            plus = exp_map(model, x, InitialCovector.from_params(model, x, p0.params + e), t, tol).endpoint
            minus = exp_map(model, x, InitialCovector.from_params(model, x, p0.params - e), t, tol).endpoint
            columns.append((plus - minus) / (2 * step))
        plus = exp_map(model, x, p0, t + step, tol).endpoint
        minus = exp_map(model, x, p0, max(t - step, 0.0), tol).endpoint
        columns.append((plus - minus) / (t + step - max(t - step, 0.0)))
        return np.column_stack(columns)
    raise ValueError(f"Unknown jacobian method {method!r}")


def first_conjugate_time(model: SRModel, x, p0: InitialCovector, t_max: float, tol: float = DEFAULT_TOL,
                         n_scan: int = 400, xtol: float = 1e-10) -> ConjugateTime | None:
    """ Smallest t in (0, t_max] where the square Jacobian of the exponential map is singular

    The determinant is scanned on the dense output of one variational
    integration; sign changes are refined with Brent's method. A value below
    the scale-free threshold without a sign change is returned flagged.
    """
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    x = np.asarray(x, dtype=float)
    sol = integrate(model, x, p0.p0, t_max, tol, variational=_initial_variation(model, p0))

    def det(s):
        return float(np.linalg.det(_square_jacobian(model, sol.sol(s))))

    grid = np.linspace(1e-3 * t_max, t_max, n_scan)
    values = np.array([det(s) for s in grid])
    running = np.maximum.accumulate(np.abs(values))
    for j in range(1, n_scan):
        a, b = grid[j - 1], grid[j]
        if values[j - 1] == 0.0:
            return ConjugateTime(float(a))
        if np.sign(values[j]) != np.sign(values[j - 1]):
            return ConjugateTime(float(brentq(det, a, b, xtol=xtol)))
        if abs(values[j]) < CONJUGATE_RTOL * running[j - 1]:
            lo, hi = grid[j - 1], grid[min(j + 1, n_scan - 1)]
            res = minimize_scalar(lambda s: abs(det(s)), bounds=(lo, hi), method='bounded',
                                  options={'xatol': xtol})
            logger.warning(f"Jacobian determinant grazes zero near t={res.x:.8g} without a sign change")
            return ConjugateTime(float(res.x), flagged=True)
    return None
