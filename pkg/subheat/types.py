from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Tuple

import numpy as np

if TYPE_CHECKING:
    from subheat.abc import SRModel


class KernelMethod(str, Enum):
    CLOSED_FORM = 'closed_form'
    GAVEAU_INTEGRAL = 'gaveau_integral'
    RADIAL_REDUCTION = 'radial_reduction'
    MEHLER_INTEGRAL = 'mehler_integral'
    SEMIGROUP_GLUE = 'semigroup_glue'


@dataclass
class CotangentState:
    """ Point of the cotangent bundle

    Attributes:
        q: base point in the chart
        p: covector at q
    """
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.p))):
            raise ValueError("Cotangent state has non-finite entries")

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])


@dataclass
class InitialCovector:
    """ Arclength initial covector, H(x, p0) = 1/2

    Attributes:
        x: base point
        params: coordinates of p0 in the model's chart of Lambda_x
        p0: the covector itself
    """
    x: np.ndarray
    params: np.ndarray
    p0: np.ndarray

    @classmethod
    def from_params(cls, model: 'SRModel', x, params) -> 'InitialCovector':
        x = np.asarray(x, dtype=float)
        params = np.atleast_1d(np.asarray(params, dtype=float))
        return cls(x=x, params=params, p0=model.covector(x, params))

    @classmethod
    def from_covector(cls, model: 'SRModel', x, p) -> 'InitialCovector':
        """ Project an arbitrary non-vanishing covector onto Lambda_x """
        x = np.asarray(x, dtype=float)
        return cls.from_params(model, x, model.covector_params(x, np.asarray(p, dtype=float)))


@dataclass
class FlowResult:
    """ Result of the exponential map

    Attributes:
        endpoint: q(t)
        covector: p(t)
        energy_drift: max |H(q_j, p_j) - H(q_0, p_0)| over the samples
        trajectory: optional samples as (times, qs, ps)
    """
    endpoint: np.ndarray
    covector: np.ndarray
    energy_drift: float = 0.0
    trajectory: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = None


@dataclass
class ConjugateTime:
    """ First conjugate time; `flagged` marks a determinant that grazes zero without changing sign """
    time: float
    flagged: bool = False


@dataclass
class GeodesicSolution:
    """ Geodesic candidate from x to y

    Attributes:
        p0: initial covector
        T: arrival time, equal to the length
        residual: chart norm of exp(p0, T) - y
        is_minimizing: T within the tie band of the distance
        conjugate_at_or_before_T: the square Jacobian of the exponential map is singular on (0, T]
    """
    p0: InitialCovector
    T: float
    residual: float
    is_minimizing: bool = False
    conjugate_at_or_before_T: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            'x': self.p0.x.tolist(),
            'params': self.p0.params.tolist(),
            'p0': self.p0.p0.tolist(),
            'T': self.T,
            'residual': self.residual,
            'is_minimizing': self.is_minimizing,
            'conjugate_at_or_before_T': self.conjugate_at_or_before_T,
        }


@dataclass
class MidpointSet:
    """ Midpoints of the minimizing geodesics

    Attributes:
        points: one midpoint per deduplicated minimizer, shape (N, n)
        dim_estimate: 0 for isolated midpoints, >= 1 when the minimizers form a continuum
        solutions: the minimizers the midpoints came from
    """
    points: np.ndarray
    dim_estimate: int = 0
    solutions: List[GeodesicSolution] = field(default_factory=list)


@dataclass
class TaylorCoefficient:
    """ Coefficient of a monomial prod z_i^e_i in a chart around the expansion point """
    exponents: Tuple[int, ...]
    coefficient: float
    uncertainty: float
    reliable: bool = True

    @property
    def degree(self) -> int:
        return sum(self.exponents)

    @property
    def monomial(self) -> str:
        parts = []
        for i, e in enumerate(self.exponents):
            if e == 1:
                parts.append(f'z{i + 1}')
            elif e > 1:
                parts.append(f'z{i + 1}^{e}')
        return '*'.join(parts) or '1'


@dataclass
class LaplaceForm:
    """ Laplace normal form of the hinged energy around a midpoint

    h = d^2/4 + sum_i c_i u_i^{2 m_i} in diagonalizing coordinates u.

    Attributes:
        exponents: transverse exponents m_i >= 1
        flat_dims: dimension of the midpoint set through z0
        diag_coeffs: c_i > 0
        jacobian_at_z0: density of the reference volume in the u coordinates at z0
        directions: columns are the chart directions of u_i, flat directions last
        substitution: cubic corrections of the corank-1 splitting map, as
            {(a, b): coefficient} for the u^a v^b terms added to the Morse coordinates
    """
    exponents: Tuple[int, ...]
    flat_dims: int
    diag_coeffs: Tuple[float, ...]
    jacobian_at_z0: float = 1.0
    directions: Optional[np.ndarray] = None
    substitution: Dict[int, Dict[Tuple[int, int], float]] = field(default_factory=dict)

    def __post_init__(self):
        self.exponents = tuple(int(m) for m in self.exponents)
        self.diag_coeffs = tuple(float(c) for c in self.diag_coeffs)
        if len(self.exponents) != len(self.diag_coeffs):
            raise ValueError("One coefficient per transverse exponent is required")
        if any(m < 1 for m in self.exponents):
            raise ValueError(f"Exponents must be >= 1, got {self.exponents}")
        if any(not c > 0 for c in self.diag_coeffs):
            raise ValueError(f"Diagonal coefficients must be positive, got {self.diag_coeffs}")
        if self.flat_dims < 0:
            raise ValueError("flat_dims must be non-negative")

    @property
    def n(self) -> int:
        return len(self.exponents) + self.flat_dims


@dataclass
class LaplaceLeading:
    """ Leading term coefficient * t^t_power, with remainder of relative order t^error_order """
    coefficient: float
    t_power: Fraction
    error_order: Fraction

    def __call__(self, t: float) -> float:
        return self.coefficient * t ** float(self.t_power)


@dataclass
class KernelSample:
    """ Heat kernel value

    Attributes:
        t: time
        x, y: endpoints
        value: p_t(x, y), may underflow to 0 while log_value stays finite
        log_value: log p_t(x, y)
        method: evaluation path
        est_error: absolute error estimate of `value`
    """
    t: float
    x: np.ndarray
    y: np.ndarray
    value: float
    log_value: float
    method: KernelMethod
    est_error: float = 0.0

    def __post_init__(self):
        if self.value < 0 or self.est_error < 0:
            raise ValueError("Kernel values and error estimates are non-negative")

    @classmethod
    def from_log(cls, t, x, y, log_value, method, rel_error=0.0) -> 'KernelSample':
        value = float(np.exp(log_value))
        return cls(t=float(t), x=np.asarray(x, dtype=float), y=np.asarray(y, dtype=float),
                   value=value, log_value=float(log_value), method=KernelMethod(method),
                   est_error=abs(float(rel_error)) * value)


@dataclass
class AsymptoticFit:
    """ p_t ~ C t^-alpha exp(-d2 / 4t) fitted on a window of samples """
    d2_hat: float
    alpha_hat: float
    C_hat: float
    residual_rms: float
    t_window: Tuple[float, float]
    log_C_hat: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'd2_hat': self.d2_hat,
            'alpha_hat': self.alpha_hat,
            'C_hat': self.C_hat,
            'log_C_hat': self.log_C_hat,
            'residual_rms': self.residual_rms,
            't_window': list(self.t_window),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'AsymptoticFit':
        return cls(d2_hat=float(data['d2_hat']), alpha_hat=float(data['alpha_hat']),
                   C_hat=float(data['C_hat']), residual_rms=float(data['residual_rms']),
                   t_window=tuple(data['t_window']), log_C_hat=float(data.get('log_C_hat', 0.0)))


@dataclass
class Verdict:
    """ Exponent checks against the heat kernel bounds

    Attributes:
        clauses: 'i' general bounds, 'ii' conjugate lower bound, 'iii' non-conjugate
            exponent; None where the clause does not apply
    """
    fit: AsymptoticFit
    n: int
    conjugacy: int
    epsilon: float
    clauses: Dict[str, Optional[bool]]
    predicted_alpha: Optional[Fraction] = None

    @property
    def passed(self) -> bool:
        return all(v is not False for v in self.clauses.values())

    def to_dict(self) -> Dict[str, Any]:
        predicted = self.predicted_alpha
        return {
            'd2_hat': self.fit.d2_hat,
            'alpha_hat': self.fit.alpha_hat,
            'C_hat': self.fit.C_hat,
            'predicted_alpha': None if predicted is None else float(predicted),
            'predicted_alpha_exact': None if predicted is None else str(predicted),
            'clauses': dict(self.clauses),
            'n': self.n,
            'conjugacy': self.conjugacy,
            'epsilon': self.epsilon,
        }


@dataclass
class ShootOptions:
    """ Multi-start shooting settings

    Attributes:
        n_start: starts per angular dimension of Lambda_x
        n_refine: starts refined by Levenberg-Marquardt after the scan
        newton_max_iter: iteration cap of the refinement
        newton_tol: endpoint residual accepted as converged
        cluster_radius: dedup radius in (p0, T)
        flow_tol: integrator tolerance
        n_scan: samples of the T grid per start
        seed: quasi-random seed
    """
    n_start: int = 64
    n_refine: int = 24
    newton_max_iter: int = 100
    newton_tol: float = 1e-10
    cluster_radius: float = 1e-4
    flow_tol: float = 1e-11
    n_scan: int = 120
    seed: int = 0

    def __post_init__(self):
        for name in ('newton_tol', 'cluster_radius', 'flow_tol'):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class HingedOptions:
    """ Finite-difference settings of the hinged energy derivatives """
    hess_step: float = 1e-3
    taylor_step: float = 5e-2
    kernel_rtol: float = 1e-6
    unreliable_rtol: float = 0.1

    def __post_init__(self):
        for name in ('hess_step', 'taylor_step', 'kernel_rtol', 'unreliable_rtol'):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class RunConfig:
    """ Settings of one CLI run: defaults, then the config file, then flags """
    model: str = 'heisenberg'
    brackets: Optional[str] = None
    source: Optional[str] = None
    target: Optional[str] = None
    midpoint: Optional[str] = None
    chart: Optional[str] = None
    params: Optional[str] = None
    t: float = 1.0
    t_grid: str = 'log:1e-3:1e-1:20'
    method: Optional[str] = None
    tol: float = 1e-8
    quad_tol: float = 1e-8
    fit_file: Optional[str] = None
    n: Optional[int] = None
    conjugacy: Optional[int] = None
    predicted_alpha: Optional[str] = None
    epsilon: float = 0.05
    box: Optional[str] = None
    glue_tol: float = 1e-3
    derive: bool = False
    output: Optional[str] = None
    shoot: ShootOptions = field(default_factory=ShootOptions)
    hinged: HingedOptions = field(default_factory=HingedOptions)

    def __post_init__(self):
        for name in ('tol', 'quad_tol', 'glue_tol', 'epsilon', 't'):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
