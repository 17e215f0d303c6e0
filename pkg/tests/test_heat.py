import numpy as np
import pytest
from scipy.integrate import quad

from subheat.errors import BoxTooSmallError, InvalidModelError, ToleranceUnachievableError, TruncationPoleError
from subheat.heat import (GaveauKernel, GrushinKernel, HeisenbergKernel, free36_radial, free36_vertical_closed,
                          gaveau_kernel, glue_box, glue_mass_outside, grushin_kernel, heisenberg_vertical_closed,
                          log_free36_vertical, log_heisenberg_vertical, make_kernel, sample_kernel, semigroup_glue)
from subheat.models import make_model
from subheat.types import KernelMethod


@pytest.fixture(scope='module')
def heisenberg():
    return make_model('heisenberg')


def heisenberg_direct(x1, x2, z, t):
    """ 2 / (4 pi t)^2 * 2 int_0^inf tau / sinh tau exp(-r^2 tau coth tau / 4t) cos(z tau / t) """
    r2 = x1 * x1 + x2 * x2

    def f(s):
        return s / np.sinh(s) * np.exp(-r2 * s / np.tanh(s) / (4 * t)) * np.cos(z * s / t)

    value, _ = quad(f, 0.0, 60.0, limit=400, epsabs=0.0, epsrel=1e-12)
    return 4.0 / (4 * np.pi * t) ** 2 * value


def test_heisenberg_closed_form_values():
    assert heisenberg_vertical_closed(1.0, 1.0) == pytest.approx(9.9271e-3, rel=1e-4)
    for t in (0.1, 1.0, 7.0):
        assert heisenberg_vertical_closed(0.0, t) == pytest.approx(1 / (16 * t * t))
    assert log_heisenberg_vertical(-2.0, 0.5) == log_heisenberg_vertical(2.0, 0.5)
    assert np.isfinite(log_heisenberg_vertical(1.0, 1e-5))
    with pytest.raises(ValueError):
        log_heisenberg_vertical(1.0, 0.0)


def test_heisenberg_varadhan_limit():
    t = 1e-4
    assert abs(4 * t * log_heisenberg_vertical(1.0, t) + 4 * np.pi) <= 0.05


def test_free36_varadhan_limit():
    gaps = {t: 4 * t * log_free36_vertical(t, 1.0) + 4 * np.pi for t in (1e-2, 1e-3, 1e-4)}
    log_c = np.log(8 * np.pi ** 4) - 4.5 * np.log(4 * np.pi)
    assert gaps[1e-3] == pytest.approx(4e-3 * (log_c - 3.5 * np.log(1e-3)), rel=1e-9)
    assert gaps[1e-2] > gaps[1e-3] > gaps[1e-4] > 0
    assert gaps[1e-4] <= 0.05


def test_free36_closed_form_values():
    assert free36_vertical_closed(1.0, 1.0) == pytest.approx(3.211e-4, rel=1e-3)
    for t in (0.3, 1.0, 2.0):
        direct = np.sinh(np.pi / (2 * t)) ** 4 / (32 * np.sqrt(np.pi) * t ** 3.5 * np.sinh(np.pi / t) ** 3)
        assert free36_vertical_closed(t) == pytest.approx(direct, rel=1e-12)
    limit = np.log(8 * np.pi) - 4.5 * np.log(4 * np.pi) + np.log(np.pi ** 4 / 8)
    assert log_free36_vertical(1.0, 0.0) == pytest.approx(limit)


@pytest.mark.parametrize('t', np.geomspace(0.2, 2.0, 7))
def test_free36_radial_matches_closed_form(t):
    sample = free36_radial(t, 1.0)
    assert sample.method == KernelMethod.RADIAL_REDUCTION
    assert sample.log_value == pytest.approx(log_free36_vertical(t, 1.0), abs=1e-6)


def test_free36_radial_at_the_origin():
    assert free36_radial(1.0, 0.0).log_value == pytest.approx(log_free36_vertical(1.0, 0.0), abs=1e-8)


@pytest.mark.parametrize('z', [0.0, 0.25, 0.5, 1.0, 2.0])
@pytest.mark.parametrize('t', [0.1, 0.3, 1.0, 2.0, 5.0])
def test_gaveau_line_matches_heisenberg_closed_form(heisenberg, z, t):
    sample = gaveau_kernel(heisenberg, [0.0, 0.0, z], t)
    assert sample.method == KernelMethod.GAVEAU_INTEGRAL
    assert sample.log_value == pytest.approx(log_heisenberg_vertical(z, t), abs=1e-8)


@pytest.mark.parametrize('q, t', [
    ([0.5, -0.3, 0.4], 1.0),
    ([1.0, 0.0, 0.0], 0.5),
    ([0.2, 0.7, -1.0], 2.0),
])
def test_gaveau_line_off_axis(heisenberg, q, t):
    assert gaveau_kernel(heisenberg, q, t).value == pytest.approx(heisenberg_direct(*q, t), rel=1e-7)


def test_heisenberg_scaling(heisenberg):
    rng = np.random.default_rng(5)
    kernel = HeisenbergKernel(heisenberg)
    for _ in range(12):
        x1, x2, z = rng.uniform(-1, 1, size=3)
        t = float(rng.uniform(0.2, 3.0))
        scaled = kernel.log(1.0, np.zeros(3), [x1 / np.sqrt(t), x2 / np.sqrt(t), z / t]) - 2 * np.log(t)
        assert kernel.log(t, np.zeros(3), [x1, x2, z]) == pytest.approx(scaled, abs=1e-8)


def test_heisenberg_left_invariance(heisenberg):
    kernel = HeisenbergKernel(heisenberg)
    g = np.array([0.4, -0.1, 0.3])
    b = np.array([0.2, 0.5, -0.6])
    moved = kernel.sample(0.7, g, heisenberg.group_product(g, b))
    assert moved.log_value == pytest.approx(kernel.log(0.7, np.zeros(3), b), abs=1e-10)
    assert np.array_equal(moved.x, g)


def test_heisenberg_batch_matches_samples(heisenberg):
    kernel = HeisenbergKernel(heisenberg)
    a = np.array([0.1, 0.2, -0.3])
    bs = np.random.default_rng(9).uniform(-1, 1, size=(8, 3))
    batch = kernel.batch(0.6, a, bs)
    assert batch.shape == (8,)
    assert np.allclose(batch, [kernel(0.6, a, b) for b in bs], rtol=1e-7, atol=0.0)


def test_vertical_targets_use_closed_forms(heisenberg):
    sample = HeisenbergKernel(heisenberg).sample(1.0, np.zeros(3), [0.0, 0.0, 1.0])
    assert sample.method == KernelMethod.CLOSED_FORM
    free36 = GaveauKernel(make_model('free36'))
    sample = free36.sample(1.0, np.zeros(6), [0.0, 0.0, 0.0, 0.0, 1.0, 0.0])
    assert sample.method == KernelMethod.CLOSED_FORM
    assert sample.log_value == pytest.approx(log_free36_vertical(1.0, 1.0))


def test_scaled_bracket_matches_heisenberg(heisenberg):
    doubled = GaveauKernel(make_model('two_step', [np.array([[0.0, 2.0], [-2.0, 0.0]])]))
    q = np.array([0.3, 0.1, 0.8])
    expected = HeisenbergKernel(heisenberg).log(0.9, np.zeros(3), [0.3, 0.1, 0.4]) - np.log(2.0)
    assert doubled.log(0.9, np.zeros(3), q) == pytest.approx(expected, abs=1e-8)


@pytest.mark.slow
def test_free36_box_matches_closed_form():
    sample = gaveau_kernel(make_model('free36'), [0.0, 0.0, 0.0, 1.0, 0.0, 0.0], 1.0, tol=1e-6)
    assert sample.value == pytest.approx(free36_vertical_closed(1.0), rel=1e-4)


def test_sin_form_refuses_the_pole(heisenberg):
    with pytest.raises(TruncationPoleError):
        gaveau_kernel(heisenberg, [0.1, 0.0, 0.5], 1.0, form='sin')
    with pytest.raises(ValueError):
        gaveau_kernel(heisenberg, [0.1, 0.0, 0.5], 1.0, form='tan')


def test_gaveau_needs_a_group():
    with pytest.raises(InvalidModelError):
        gaveau_kernel(make_model('grushin'), [0.0, 1.0], 1.0)


def test_grushin_is_symmetric():
    a, b = np.array([-1.0, -np.pi / 4]), np.array([0.5, 0.3])
    assert grushin_kernel(a, b, 0.4).log_value == pytest.approx(grushin_kernel(b, a, 0.4).log_value, abs=1e-9)


def test_grushin_riemannian_diagonal():
    t = 1e-3
    value = grushin_kernel([-1.0, 0.0], [-1.0, 0.0], t).value
    assert value * 4 * np.pi * t == pytest.approx(1.0, rel=0.02)


def test_grushin_degenerate_diagonal_scaling():
    ratio = grushin_kernel([0.0, 0.0], [0.0, 0.0], 1e-3).value / grushin_kernel([0.0, 0.0], [0.0, 0.0], 1e-2).value
    assert ratio == pytest.approx(10 ** 1.5, rel=1e-6)


def test_grushin_refuses_fast_oscillation():
    with pytest.raises(ToleranceUnachievableError) as info:
        grushin_kernel([0.0, 0.0], [0.0, 1.0], 1e-5)
    assert 0 < info.value.achievable <= 1.0


def test_make_kernel_dispatch():
    assert isinstance(make_kernel(make_model('heisenberg')), HeisenbergKernel)
    assert isinstance(make_kernel(make_model('grushin')), GrushinKernel)
    doubled = make_kernel(make_model('two_step', [np.array([[0.0, 2.0], [-2.0, 0.0]])]))
    assert type(doubled) is GaveauKernel
    assert doubled.name == 'gaveau:two_step'


def test_sample_kernel_keeps_time_order(heisenberg):
    times = [0.5, 0.1, 0.3]
    samples = sample_kernel(HeisenbergKernel(heisenberg), times, np.zeros(3), np.array([0.0, 0.0, 1.0]))
    assert [s.t for s in samples] == times


def test_glue_box():
    box = glue_box([0.0, 0.0, 0.0], [1.0, 0.0, 2.0], k=2)
    assert box == [(-3.5, 4.5), (-4.0, 4.0), (-2.0, 4.0)]


def test_glue_rejects_a_small_box(heisenberg):
    kernel = HeisenbergKernel(heisenberg)
    with pytest.raises(BoxTooSmallError) as info:
        semigroup_glue(kernel, np.zeros(3), np.array([0.3, 0.0, 0.0]), 0.5, box=[(-0.2, 0.5), (-0.2, 0.2), (-0.2, 0.2)])
    assert info.value.suggested_radius == pytest.approx(1.5 * 0.35)


@pytest.mark.slow
def test_glue_reproduces_the_kernel(heisenberg):
    kernel = HeisenbergKernel(heisenberg)
    x, y = np.zeros(3), np.array([0.3, 0.0, 0.2])
    box = [(-2.35, 2.65), (-2.5, 2.5), (-1.4, 1.6)]
    glued = semigroup_glue(kernel, x, y, 0.5, box=box, panels=6)
    assert glued.method == KernelMethod.SEMIGROUP_GLUE
    assert glued.value == pytest.approx(kernel(0.5, x, y), rel=2e-3)


@pytest.mark.slow
def test_glue_mass_concentrates_at_the_midpoint(heisenberg):
    kernel = HeisenbergKernel(heisenberg)
    x, y = np.zeros(3), np.array([1.0, 0.0, 0.0])
    box = [(-0.5, 1.5), (-1.0, 1.0), (-0.6, 0.6)]
    fractions = [glue_mass_outside(kernel, x, y, t, [[0.5, 0.0, 0.0]], 0.4, box=box) for t in (0.5, 0.1)]
    assert 0.0 <= fractions[1] < fractions[0] <= 1.0


@pytest.mark.slow
def test_glue_at_the_vertical_pair(heisenberg):
    kernel = HeisenbergKernel(heisenberg)
    x, y = np.zeros(3), np.array([0.0, 0.0, 1.0])
    glued = semigroup_glue(kernel, x, y, 0.5)
    assert glued.value == pytest.approx(heisenberg_vertical_closed(1.0, 0.5), rel=1e-3)
