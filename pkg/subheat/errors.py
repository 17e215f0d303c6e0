import json

import numpy as np


class SubheatError(RuntimeError):
    """ Base class of all numeric failures raised by subheat """

    def diagnostic(self) -> dict:
        """ JSON-ready description of the failure """
        info = {key: _jsonable(value) for key, value in vars(self).items() if not key.startswith('_')}
        info.update(error=type(self).__name__, message=str(self))
        return info

    def to_json(self) -> str:
        return json.dumps(self.diagnostic(), sort_keys=True)


class InvalidModelError(SubheatError, ValueError):
    """ Model id unknown or bracket matrices not skew-symmetric """


class IntegrationError(SubheatError):
    """ The geodesic integrator gave up (step-size underflow) """

    def __init__(self, message: str, last_state=None, last_time: float | None = None):
        super().__init__(message)
        self.last_state = last_state
        self.last_time = last_time


class NoSolutionError(SubheatError):
    """ No shooting start converged """

    def __init__(self, message: str, best_residual: float):
        super().__init__(message)
        self.best_residual = best_residual


class ProbeError(SubheatError):
    """ A distance solve failed while bisecting a cut time """

    def __init__(self, message: str, probe: float):
        super().__init__(message)
        self.probe = probe


class StencilError(SubheatError):
    """ A finite-difference stencil point could not be evaluated """

    def __init__(self, message: str, point=None):
        super().__init__(message)
        self.point = point


class UnsupportedDegeneracyError(SubheatError):
    """ Degeneracy beyond corank 1 with a non-vanishing quartic """

    def __init__(self, message: str, kernel_dim: int):
        super().__init__(message)
        self.kernel_dim = kernel_dim


class QuadratureError(SubheatError):
    """ Quadrature did not reach the requested tolerance """

    def __init__(self, message: str, estimate: float | None = None, abs_error: float | None = None):
        super().__init__(message)
        self.estimate = estimate
        self.abs_error = abs_error


class TruncationPoleError(QuadratureError):
    """ The sin-form Gaveau integrand has a pole inside the truncation box """


class ToleranceUnachievableError(QuadratureError):
    """ The oscillation is too fast for the requested tolerance """

    def __init__(self, message: str, achievable: float):
        super().__init__(message)
        self.achievable = achievable


class BoxTooSmallError(QuadratureError):
    """ Integrand mass on the box boundary is above tolerance """

    def __init__(self, message: str, suggested_radius: float):
        super().__init__(message)
        self.suggested_radius = suggested_radius


class IllConditionedFitError(SubheatError):
    """ Sample window too narrow for the exponent fit """


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value
