import numpy as np
import pytest

from subheat.flow import exp_jacobian, exp_map, first_conjugate_time
from subheat.models import Grushin, TwoStepGroup, make_model
from subheat.types import InitialCovector


@pytest.mark.parametrize('params, t', [
    ([0.3, 0.0], 1.0),
    ([1.2, 0.7], 2.5),
    ([-2.0, -3.0], 1.7),
])
def test_heisenberg_flow_matches_closed_form(params, t):
    model = make_model('heisenberg')
    x = np.array([0.4, -1.0, 0.25])
    p0 = InitialCovector.from_params(model, x, params)
    numeric = exp_map(model, x, p0, t)
    exact = exp_map(model, x, p0, t, closed_form=True)
    assert np.allclose(numeric.endpoint, exact.endpoint, atol=1e-8)
    assert numeric.energy_drift < 1e-8


def test_grushin_flow_matches_closed_form():
    model = Grushin()
    x = np.array([-1.0, -np.pi / 4])
    for theta in np.linspace(0.1, 2 * np.pi, 7):
        p0 = InitialCovector.from_params(model, x, [theta])
        numeric = exp_map(model, x, p0, 2.0).endpoint
        assert np.allclose(numeric, model.closed_form(x, [theta], 2.0), atol=1e-8)


@pytest.mark.parametrize('params, t', [
    ([0.2, -0.4, 1.0, 0.5, -0.3], 3.0),
    ([1.5, 0.3, 0.0, 0.0, 0.0], 1.0),
    ([-0.7, 2.0, -2.2, 1.1, 0.4], 2.2),
])
def test_free36_flow_matches_closed_form(params, t):
    model = make_model('free36')
    x = np.array([0.3, -0.5, 0.1, 0.2, 0.0, -0.4])
    p0 = InitialCovector.from_params(model, x, params)
    numeric = exp_map(model, x, p0, t).endpoint
    assert np.allclose(numeric, model.closed_form(x, params, t), atol=1e-8)


def test_two_step_closed_form_reduces_to_heisenberg():
    generic = TwoStepGroup(make_model('heisenberg').bracket_matrices)
    heisenberg = make_model('heisenberg')
    x = np.array([0.4, -1.0, 0.25])
    for params in ([0.3, 0.0], [1.2, 0.7], [-2.0, -3.0]):
        assert np.allclose(generic.closed_form(x, params, 1.7), heisenberg.closed_form(x, params, 1.7), atol=1e-12)


def test_exp_map_at_zero_time():
    model = make_model('free36')
    x = np.arange(6, dtype=float)
    p0 = InitialCovector.from_params(model, x, model.start_params(x, 4, 1.0)[0])
    assert np.array_equal(exp_map(model, x, p0, 0.0).endpoint, x)
    with pytest.raises(ValueError):
        exp_map(model, x, p0, 1.0, tol=0.0)


def test_trajectory_samples_conserve_energy():
    model = make_model('free36')
    x = np.zeros(6)
    p0 = InitialCovector.from_params(model, x, [0.2, -0.4, 1.0, 0.5, -0.3])
    result = exp_map(model, x, p0, 3.0, samples=50)
    times, qs, ps = result.trajectory
    assert len(times) == 50 and qs.shape == (50, 6) and ps.shape == (50, 6)
    energies = [model.hamiltonian(q, p) for q, p in zip(qs, ps)]
    assert np.allclose(energies, 0.5, atol=1e-8)


@pytest.mark.parametrize('name', ['heisenberg', 'free36', 'grushin'])
def test_jacobian_variational_matches_finite_differences(name):
    model = make_model(name)
    x = np.full(model.n, 0.5)
    p0 = InitialCovector.from_params(model, x, model.start_params(x, 8, 1.0)[5])
    variational = exp_jacobian(model, x, p0, 1.3, tol=1e-12)
    fd = exp_jacobian(model, x, p0, 1.3, tol=1e-12, method='fd', step=1e-4)
    assert variational.shape == (model.n, model.n)
    assert np.allclose(variational, fd, atol=1e-6)


def test_unknown_jacobian_method():
    model = make_model('heisenberg')
    p0 = InitialCovector.from_params(model, np.zeros(3), [0.0, 1.0])
    with pytest.raises(ValueError):
        exp_jacobian(model, np.zeros(3), p0, 1.0, method='spline')


def test_grushin_first_conjugate_time():
    model = Grushin()
    x = np.array([-1.0, -np.pi / 4])
    p0 = InitialCovector.from_params(model, x, [np.pi / 2])
    conjugate = first_conjugate_time(model, x, p0, 4.0)
    assert conjugate is not None
    assert conjugate.time == pytest.approx(np.pi, abs=1e-6)


def test_heisenberg_first_conjugate_time():
    model = make_model('heisenberg')
    p0 = InitialCovector.from_params(model, np.zeros(3), [0.4, 1.0])
    conjugate = first_conjugate_time(model, np.zeros(3), p0, 8.0)
    assert conjugate.time == pytest.approx(2 * np.pi, abs=1e-6)
    assert first_conjugate_time(model, np.zeros(3), p0, 6.0) is None


def test_straight_lines_have_no_conjugate_point():
    model = make_model('heisenberg')
    p0 = InitialCovector.from_params(model, np.zeros(3), [0.4, 0.0])
    assert first_conjugate_time(model, np.zeros(3), p0, 10.0) is None
