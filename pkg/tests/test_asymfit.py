from fractions import Fraction

import numpy as np
import pytest

from subheat.asymfit import (GRUSHIN_CELLS, Q0, Q1, conjugate_exponent, corollary_verdict, fit_exponential,
                             grushin_summary, window)
from subheat.errors import IllConditionedFitError
from subheat.heat import GrushinKernel, log_free36_vertical, log_heisenberg_vertical, sample_kernel
from subheat.types import AsymptoticFit, KernelMethod, KernelSample, LaplaceForm

TIMES = np.geomspace(1e-3, 1e-1, 20)


def synthetic(log_c, alpha, d2, a=0.0, times=TIMES):
    return [(t, log_c - alpha * np.log(t) - d2 / (4 * t) + np.log1p(a * t)) for t in times]


def make_fit(alpha, d2=1.0):
    return AsymptoticFit(d2_hat=d2, alpha_hat=alpha, C_hat=1.0, residual_rms=0.0, t_window=(1e-3, 1e-1))


def test_exact_synthetic_data():
    fit = fit_exponential(synthetic(np.log(3.0), 2.0, 5.0))
    assert fit.d2_hat == pytest.approx(5.0, abs=1e-8)
    assert fit.alpha_hat == pytest.approx(2.0, abs=1e-6)
    assert fit.C_hat == pytest.approx(3.0, rel=1e-5)
    assert fit.residual_rms < 1e-8
    assert fit.t_window == pytest.approx((1e-3, 1e-1))


@pytest.mark.parametrize('a', [-1.0, -0.5, 0.5, 1.0])
def test_perturbed_synthetic_data(a):
    fit = fit_exponential(synthetic(0.0, 1.25, 5.0, a))
    assert fit.d2_hat == pytest.approx(5.0, abs=0.02)
    assert fit.alpha_hat == pytest.approx(1.25, abs=0.05)


def test_shrinking_the_window_does_not_hurt():
    samples = synthetic(0.0, 1.25, 5.0, 1.0)
    wide = fit_exponential(samples)
    narrow = fit_exponential(window(samples, 5e-2))
    assert abs(narrow.alpha_hat - 1.25) <= abs(wide.alpha_hat - 1.25) + 1e-3


def test_heisenberg_closed_form_fit():
    fit = fit_exponential([(t, log_heisenberg_vertical(1.0, t)) for t in TIMES])
    assert fit.d2_hat == pytest.approx(4 * np.pi, abs=0.01)
    assert fit.alpha_hat == pytest.approx(2.0, abs=0.01)


def test_free36_closed_form_fit():
    samples = [KernelSample.from_log(t, np.zeros(6), np.zeros(6), log_free36_vertical(t), KernelMethod.CLOSED_FORM)
               for t in TIMES]
    fit = fit_exponential(samples)
    assert fit.d2_hat == pytest.approx(4 * np.pi, abs=0.01)
    assert fit.alpha_hat == pytest.approx(3.5, abs=0.01)


def test_fit_refusals():
    with pytest.raises(IllConditionedFitError):
        fit_exponential(synthetic(0.0, 1.0, 1.0, times=TIMES[:5]))
    with pytest.raises(IllConditionedFitError):
        fit_exponential(synthetic(0.0, 1.0, 1.0, times=np.linspace(0.01, 0.02, 10)))
    with pytest.raises(IllConditionedFitError):
        fit_exponential([(t, -np.inf) for t in TIMES])
    with pytest.raises(IllConditionedFitError):
        fit_exponential(synthetic(0.0, 1.0, -1.0))
    with pytest.raises(ValueError):
        fit_exponential([(-t, 0.0) for t in TIMES])


def test_window():
    samples = synthetic(0.0, 1.0, 1.0)
    assert all(t <= 0.01 for t, _ in window(samples, 0.01))
    assert len(window(samples, 1.0)) == len(samples)


@pytest.mark.parametrize('alpha, n, conjugacy, clauses', [
    (1.25, 2, 1, {'i': True, 'ii': True, 'iii': None}),
    (2.0, 3, 1, {'i': True, 'ii': True, 'iii': None}),
    (1.0, 2, 0, {'i': True, 'ii': None, 'iii': True}),
    (1.0, 2, 1, {'i': True, 'ii': False, 'iii': None}),
    (1.25, 2, 0, {'i': True, 'ii': None, 'iii': False}),
    (2.5, 2, 1, {'i': False, 'ii': True, 'iii': None}),
])
def test_corollary_verdict(alpha, n, conjugacy, clauses):
    verdict = corollary_verdict(make_fit(alpha), n, conjugacy)
    assert verdict.clauses == clauses
    assert verdict.passed == all(v is not False for v in clauses.values())


def test_verdict_prediction():
    form = LaplaceForm((1, 2), 0, (4.0, 1.0))
    verdict = corollary_verdict(make_fit(1.25), 2, 1, form=form)
    assert verdict.predicted_alpha == Fraction(5, 4)
    data = verdict.to_dict()
    assert data['predicted_alpha'] == 1.25 and data['predicted_alpha_exact'] == '5/4'
    assert corollary_verdict(make_fit(1.0), 2, 0).predicted_alpha is None
    with pytest.raises(ValueError):
        corollary_verdict(make_fit(1.0), 0, 0)


def test_summary_cells():
    assert len(GRUSHIN_CELLS) == 8
    conjugate = [c for c in GRUSHIN_CELLS if c[1] == 'cut_conjugate']
    assert conjugate[0][4] == Fraction(5, 4)
    assert conjugate[1][2] is None


@pytest.mark.slow
def test_grushin_conjugate_pair_fit():
    samples = sample_kernel(GrushinKernel(), np.geomspace(0.05, 0.4, 12), np.array(Q0), np.array(Q1))
    fit = fit_exponential(samples)
    assert fit.d2_hat == pytest.approx(np.pi ** 2, rel=0.05)
    assert fit.alpha_hat == pytest.approx(1.25, abs=0.05)
    verdict = corollary_verdict(fit, 2, 1, epsilon=0.1)
    assert verdict.clauses['i'] and verdict.clauses['ii']


@pytest.mark.slow
def test_conjugate_exponent_from_hinged_energy():
    assert conjugate_exponent() == Fraction(5, 4)


@pytest.mark.slow
def test_grushin_summary_rows():
    rows = grushin_summary(np.geomspace(0.01, 0.1, 8))
    assert [(r['base'], r['column']) for r in rows] == [c[:2] for c in GRUSHIN_CELLS]
    assert rows[-1]['status'] == 'n/a'
    for row in rows[:-1]:
        assert row['status'] == 'ok'
        assert row['alpha_hat'] is not None
    diagonal = rows[0]
    assert diagonal['d2_hat'] == pytest.approx(0.0, abs=0.05)


@pytest.mark.parametrize('a', [-1.0, 1.0])
def test_linear_correction_does_not_bias_the_exponent(a):
    fit = fit_exponential(synthetic(np.log(2.0), 2.0, np.pi ** 2, a))
    assert fit.alpha_hat == pytest.approx(2.0, abs=0.01)
    assert fit.d2_hat == pytest.approx(np.pi ** 2, abs=0.005)
    assert fit.C_hat == pytest.approx(2.0, rel=0.05)
