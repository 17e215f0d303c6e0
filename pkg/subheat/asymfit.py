""" Exponent extraction p_t ~ C t^-alpha exp(-d2 / 4t) and verdicts on the result """
import logging
from fractions import Fraction
from typing import Iterable, Sequence, Tuple

import numpy as np

from subheat.errors import IllConditionedFitError, SubheatError
from subheat.heat import GrushinKernel, sample_kernel
from subheat.hinged import HingedField, to_laplace_form
from subheat.laplace import heat_exponent
from subheat.models import Grushin
from subheat.types import AsymptoticFit, KernelSample, LaplaceForm, Verdict

MIN_SAMPLES = 6
MIN_DECADES = 0.5
EPSILON = 0.05
D2_FLOOR = -1e-3

logger = logging.getLogger(__name__)


def _as_pairs(samples: Iterable) -> Tuple[np.ndarray, np.ndarray]:
    ts, logs = [], []
    for s in samples:
        if isinstance(s, KernelSample):
            ts.append(s.t)
            logs.append(s.log_value)
        else:
            t, log_p = s
            ts.append(float(t))
            logs.append(float(log_p))
    return np.asarray(ts, dtype=float), np.asarray(logs, dtype=float)


def _lstsq(design: np.ndarray, target: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(design, axis=0)
    coef, _, rank, _ = np.linalg.lstsq(design / norms, target, rcond=None)
    if rank < design.shape[1]:
        raise IllConditionedFitError(f"Fit design has rank {rank} < {design.shape[1]}")
    return coef / norms


def fit_exponential(samples: Iterable) -> AsymptoticFit:
    """ Two-stage least squares on samples (t, log p_t) or `KernelSample`s

    Stage 1 fits -4t log p on (1, t, t log t, t^2); its intercept is d2.
    Stage 2 fits log p + d2 / 4t on (1, log t, t); slope -alpha, intercept log C.
    The t^2 and t columns absorb a first-order correction C t^-alpha e^(-d2/4t) (1 + a t).
    """
    ts, logs = _as_pairs(samples)
    if len(ts) < MIN_SAMPLES:
        raise IllConditionedFitError(f"Need at least {MIN_SAMPLES} samples, got {len(ts)}")
    if np.any(ts <= 0) or not np.all(np.isfinite(ts)):
        raise ValueError("Sample times must be positive and finite")
    if not np.all(np.isfinite(logs)):
        raise IllConditionedFitError("Samples contain non-finite log values")
    decades = float(np.log10(ts.max() / ts.min()))
    if decades < MIN_DECADES:
        raise IllConditionedFitError(f"Time window spans {decades:.2f} decades, need at least {MIN_DECADES}")
    if decades < 1:
        logger.warning(f"Time window spans only {decades:.2f} decades")

    stage1 = np.column_stack([np.ones_like(ts), ts, ts * np.log(ts), ts * ts])
    d2 = float(_lstsq(stage1, -4 * ts * logs)[0])
    if d2 < 0:
        if d2 < D2_FLOOR:
            raise IllConditionedFitError(f"Fitted squared distance is negative ({d2:.3g})")
        d2 = 0.0

    stage2 = np.column_stack([np.ones_like(ts), np.log(ts), ts])
    target = logs + d2 / (4 * ts)
    coef = _lstsq(stage2, target)
    log_c, slope, linear = coef
    residual = target - stage2 @ coef
    fit = AsymptoticFit(d2_hat=d2, alpha_hat=float(-slope), C_hat=float(np.exp(log_c)),
                        residual_rms=float(np.sqrt(np.mean(residual ** 2))),
                        t_window=(float(ts.min()), float(ts.max())), log_C_hat=float(log_c))
    logger.info(f"Fit on [{fit.t_window[0]:g}, {fit.t_window[1]:g}]: d2={fit.d2_hat:.8g} "
                f"alpha={fit.alpha_hat:.6g} C={fit.C_hat:.6g} a={linear:.3g} rms={fit.residual_rms:.2g}")
    return fit


def corollary_verdict(fit: AsymptoticFit, n: int, conjugacy: int, epsilon: float = EPSILON,
                      predicted_alpha: Fraction | None = None, form: LaplaceForm | None = None) -> Verdict:
    """ Check the fitted exponent against the heat kernel bounds

    (i)   n/2 - eps <= alpha <= n - 1/2 + eps
    (ii)  conjugate pairs: alpha >= n/2 + 1/4 - eps
    (iii) non-conjugate pairs: |alpha - n/2| <= eps

    The predicted exponent is taken from `predicted_alpha`, or computed
    from a Laplace normal form.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if predicted_alpha is None and form is not None:
        predicted_alpha = heat_exponent(n, form)
    alpha = fit.alpha_hat
    half = n / 2
    clauses = {
        'i': bool(half - epsilon <= alpha <= n - 0.5 + epsilon),
        'ii': bool(alpha >= half + 0.25 - epsilon) if conjugacy > 0 else None,
        'iii': bool(abs(alpha - half) <= epsilon) if conjugacy == 0 else None,
    }
    verdict = Verdict(fit=fit, n=n, conjugacy=conjugacy, epsilon=epsilon, clauses=clauses,
                      predicted_alpha=None if predicted_alpha is None else Fraction(predicted_alpha))
    if not verdict.passed:
        logger.warning(f"Exponent {alpha:.4g} fails {[k for k, v in clauses.items() if v is False]} for n={n}")
    return verdict


def window(samples: Sequence, t_max: float) -> list:
    """ Samples with t <= t_max """
    return [s for s in samples if (s.t if isinstance(s, KernelSample) else s[0]) <= t_max]


Q0 = (-1.0, -np.pi / 4)
Q1 = (1.0, np.pi / 4)
ORIGIN = (0.0, 0.0)

# (base, column, source, target, predicted alpha); the degenerate base has no conjugate cut point
GRUSHIN_CELLS = (
    ('riemannian', 'diagonal', Q0, Q0, Fraction(1)),
    ('riemannian', 'off_cut', Q0, (0.0, -np.pi / 4), Fraction(1)),
    ('riemannian', 'cut_non_conjugate', Q0, (1.0, np.pi / 4 + 1.0), Fraction(1)),
    ('riemannian', 'cut_conjugate', Q0, Q1, Fraction(5, 4)),
    ('degenerate', 'diagonal', ORIGIN, ORIGIN, Fraction(3, 2)),
    ('degenerate', 'off_cut', ORIGIN, (1.0, 0.0), Fraction(1)),
    ('degenerate', 'cut_non_conjugate', ORIGIN, (0.0, 1.0), Fraction(1)),
    ('degenerate', 'cut_conjugate', None, None, None),
)


def conjugate_exponent() -> Fraction:
    """ Heat exponent of the pair q0 -> q1 from its hinged energy normal form """
    model = Grushin()
    field = HingedField(model, Q0, Q1, z0=ORIGIN)
    return heat_exponent(model.n, to_laplace_form(field))


def grushin_summary(times: Sequence[float], tol: float = 1e-8, derive: bool = False) -> list:
    """ Rows of the Grushin summary table: predicted and fitted exponents per cell

    With `derive` the conjugate cell's prediction is computed from the
    hinged energy instead of taken from the table.
    """
    kernel = GrushinKernel(tol)
    rows = []
    for base, column, source, target, predicted in GRUSHIN_CELLS:
        row = {'base': base, 'column': column, 'source': source, 'target': target,
               'predicted_alpha': predicted, 'd2_hat': None, 'alpha_hat': None, 'status': 'n/a'}
        if source is not None:
            if derive and column == 'cut_conjugate':
                row['predicted_alpha'] = conjugate_exponent()
            try:
                fit = fit_exponential(sample_kernel(kernel, times, np.array(source), np.array(target)))
                row.update(d2_hat=fit.d2_hat, alpha_hat=fit.alpha_hat, status='ok')
            except SubheatError as exc:
                logger.warning(f"Grushin table cell {base}/{column} failed: {exc}")
                row['status'] = type(exc).__name__
        rows.append(row)
    return rows
