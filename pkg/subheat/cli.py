""" Command line front end

    subheat COMMAND [options]

Exit codes: 0 success, 1 usage error, 2 numeric failure (JSON diagnostic
on standard error).
"""
import getopt
import logging
import sys
from typing import Callable, Dict, Tuple

import numpy as np

from subheat.abc import SRModel
from subheat.asymfit import Q0, Q1, corollary_verdict, fit_exponential, grushin_summary
from subheat.errors import InvalidModelError, SubheatError
from subheat.flow import exp_map
from subheat.heat import (free36_radial, gaveau_kernel, grushin_kernel, log_free36_vertical, log_heisenberg_vertical,
                          make_kernel, semigroup_glue)
from subheat.hinged import HingedField
from subheat.models import Grushin, TwoStepGroup, load_bracket_matrices, make_model
from subheat.shoot import Shooter
from subheat.types import AsymptoticFit, InitialCovector, KernelMethod, KernelSample, RunConfig
from subheat.utils import (apply_settings, parse_box, parse_fraction, parse_matrix, parse_point, parse_t_grid,
                           read_config, read_json, sample_rows, taylor_rows, trajectory_rows, write_csv, write_json)
from subheat.workers import map_parallel

USAGE = """Usage: subheat COMMAND [options]

Commands:
  geodesic         trajectory CSV of exp_map from --from with covector --params up to --t
  distance         distance and geodesics between --from and --to (JSON)
  midpoints        midpoints of the minimizers (JSON)
  hessian          hinged energy Hessian at a midpoint and its kernel dimension (JSON)
  taylor           hinged energy Taylor coefficients up to degree 4 (CSV)
  heat-eval        heat kernel samples over --t-grid (CSV)
  glue             semigroup check of the kernel at --t (JSON)
  fit              exponent fit of kernel samples over --t-grid (JSON)
  verdict          exponent checks of a prior --fit file (JSON)
  reproduce-table  Grushin summary table (CSV)

Options:
  -h, --help              show this message
  -v, --verbose           debug logging
  -c, --config FILE       key=value settings, overridden by flags
  -o, --output FILE       output file (default: standard output)
  --model ID              heisenberg | grushin | free36 | two_step
  --brackets FILE         JSON bracket matrices of two_step
  --from, --source POINT  comma-separated coordinates
  --to, --target POINT
  --midpoint POINT        expansion point of hessian / taylor
  --chart MATRIX          chart of hessian / taylor, rows separated by ';'
  --params P              covector parameters of geodesic
  --t T                   time of geodesic / glue
  --t-grid GRID           log:a:b:N | lin:a:b:N | t1,t2,...
  --method M              closed | gaveau | radial | mehler (heat-eval, fit)
  --tol, --quad-tol, --glue-tol, --epsilon X
  --fit FILE              AsymptoticFit JSON of verdict
  --n N, --conjugacy K, --predicted-alpha P/Q
  --box a:b,c:d,...       glue box
  --seed S, --n-start N   shooting settings
  --derive                derive conjugacy of verdict from the hinged Hessian, and the
                          conjugate prediction of reproduce-table
"""

LONG_OPTIONS = ["help", "verbose", "config=", "output=", "model=", "brackets=", "from=", "source=", "to=", "target=",
                "midpoint=", "chart=", "params=", "t=", "t-grid=", "method=", "tol=", "quad-tol=", "glue-tol=",
                "epsilon=", "fit=", "n=", "conjugacy=", "predicted-alpha=", "box=", "seed=", "n-start=", "derive"]

ALIASES = {'from': 'source', 'to': 'target', 'fit': 'fit_file', 'seed': 'shoot.seed', 'n-start': 'shoot.n_start'}

GRUSHIN_CHART = '1,1;1,-1'

logger = logging.getLogger('subheat')


class UsageError(ValueError):
    pass


def _model(config: RunConfig) -> SRModel:
    params = None
    if config.brackets:
        with open(config.brackets) as f:
            params = load_bracket_matrices(f.read())
    return make_model(config.model, params)


def _default_pair(model: SRModel) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(model, Grushin):
        return np.array(Q0), np.array(Q1)
    target = np.zeros(model.n)
    target[model.k] = 1.0
    return np.zeros(model.n), target


def _pair(config: RunConfig, model: SRModel) -> Tuple[np.ndarray, np.ndarray]:
    source, target = _default_pair(model)
    if config.source:
        source = parse_point(config.source)
    if config.target:
        target = parse_point(config.target)
    for point in (source, target):
        if len(point) != model.n:
            raise UsageError(f"Points of {model.name} have {model.n} coordinates, got {point.tolist()}")
    return source, target


def _hinged_field(config: RunConfig, model: SRModel, chart=None) -> HingedField:
    x, y = _pair(config, model)
    z0 = parse_point(config.midpoint) if config.midpoint else None
    if config.chart:
        chart = parse_matrix(config.chart)
    return HingedField(model, x, y, z0, config.hinged, config.shoot, chart=chart)


def _sampler(config: RunConfig, model: SRModel, x, y) -> Callable[[float], KernelSample]:
    method = config.method
    if method in (None, 'auto'):
        kernel = make_kernel(model, config.quad_tol)
        return lambda t: kernel.sample(t, x, y)
    if method == 'mehler':
        return lambda t: grushin_kernel(x, y, t, config.quad_tol)
    q = model.group_product(model.group_inverse(x), y) if isinstance(model, TwoStepGroup) else None
    if method == 'gaveau' and q is not None:
        return lambda t: gaveau_kernel(model, q, t, config.quad_tol)
    if q is not None and not np.any(q[:model.k]):
        if method == 'radial' and model.name == 'free36':
            return lambda t: free36_radial(t, float(np.linalg.norm(q[model.k:])), config.quad_tol)
        if method == 'closed' and model.name == 'heisenberg':
            return lambda t: KernelSample.from_log(t, x, y, log_heisenberg_vertical(q[2], t), KernelMethod.CLOSED_FORM)
        if method == 'closed' and model.name == 'free36':
            return lambda t: KernelSample.from_log(t, x, y, log_free36_vertical(t, float(np.linalg.norm(q[model.k:]))),
                                                   KernelMethod.CLOSED_FORM)
    raise UsageError(f"Method {method!r} is not available for {model.name} between {x.tolist()} and {y.tolist()}")


def _samples(config: RunConfig, model: SRModel):
    x, y = _pair(config, model)
    sampler = _sampler(config, model, x, y)
    return map_parallel(lambda t: sampler(float(t)), list(parse_t_grid(config.t_grid)))


def cmd_geodesic(config: RunConfig):
    model = _model(config)
    x = parse_point(config.source) if config.source else np.zeros(model.n)
    if not config.params:
        raise UsageError("geodesic needs --params")
    p0 = InitialCovector.from_params(model, x, parse_point(config.params))
    result = exp_map(model, x, p0, config.t, config.tol, samples=201)
    write_csv(config.output, *trajectory_rows(result, model.hamiltonian))


def cmd_distance(config: RunConfig):
    model = _model(config)
    x, y = _pair(config, model)
    d, solutions = Shooter(model, config.shoot).distance(x, y, check_conjugate=True)
    write_json(config.output, {'d': d, 'd2': d * d, 'solutions': [s.to_dict() for s in solutions]})


def cmd_midpoints(config: RunConfig):
    model = _model(config)
    x, y = _pair(config, model)
    mids = Shooter(model, config.shoot).midpoints(x, y)
    write_json(config.output, {'points': mids.points, 'dim_estimate': mids.dim_estimate,
                               'lengths': [s.T for s in mids.solutions]})


def cmd_hessian(config: RunConfig):
    model = _model(config)
    field = _hinged_field(config, model)
    H, kernel_dim = field.compute_hessian()
    write_json(config.output, {'z0': field.z0, 'd2': field.d2, 'hessian': H,
                               'eigenvalues': np.linalg.eigvalsh(H), 'kernel_dim': kernel_dim})


def cmd_taylor(config: RunConfig):
    model = _model(config)
    chart = parse_matrix(GRUSHIN_CHART) if isinstance(model, Grushin) else None
    field = _hinged_field(config, model, chart)
    write_csv(config.output, *taylor_rows(field.compute_taylor4()))


def cmd_heat_eval(config: RunConfig):
    write_csv(config.output, *sample_rows(_samples(config, _model(config))))


def cmd_glue(config: RunConfig):
    model = _model(config)
    x, y = _pair(config, model)
    kernel = make_kernel(model, config.quad_tol)
    box = parse_box(config.box) if config.box else None
    glued = semigroup_glue(kernel, x, y, config.t, box, tol=config.glue_tol)
    direct = kernel.sample(config.t, x, y)
    write_json(config.output, {'t': config.t, 'glued': glued.value, 'glued_error': glued.est_error,
                               'direct': direct.value, 'direct_method': direct.method.value,
                               'rel_error': abs(glued.value / direct.value - 1.0)})


def cmd_fit(config: RunConfig):
    fit = fit_exponential(_samples(config, _model(config)))
    write_json(config.output, fit.to_dict())


def cmd_verdict(config: RunConfig):
    if not config.fit_file:
        raise UsageError("verdict needs --fit")
    fit = AsymptoticFit.from_dict(read_json(config.fit_file))
    model = _model(config)
    n = config.n if config.n is not None else model.n
    conjugacy = config.conjugacy
    if conjugacy is None:
        if not config.derive:
            raise UsageError("verdict needs --conjugacy or --derive")
        _, conjugacy = _hinged_field(config, model).compute_hessian()
        logger.info(f"Derived conjugacy {conjugacy} from the hinged Hessian")
    predicted = parse_fraction(config.predicted_alpha) if config.predicted_alpha else None
    verdict = corollary_verdict(fit, n, conjugacy, config.epsilon, predicted)
    write_json(config.output, verdict.to_dict())


def cmd_reproduce_table(config: RunConfig):
    rows = grushin_summary(parse_t_grid(config.t_grid), config.quad_tol, derive=config.derive)

    def point(p):
        return '' if p is None else ';'.join(format(float(v), '.17g') for v in p)

    header = ['base', 'column', 'source', 'target', 'predicted_alpha', 'alpha_hat', 'd2_hat', 'status']
    write_csv(config.output, header, [
        [r['base'], r['column'], point(r['source']), point(r['target']),
         '' if r['predicted_alpha'] is None else str(r['predicted_alpha']),
         '' if r['alpha_hat'] is None else r['alpha_hat'],
         '' if r['d2_hat'] is None else r['d2_hat'], r['status']] for r in rows])


COMMANDS: Dict[str, Callable[[RunConfig], None]] = {
    'geodesic': cmd_geodesic,
    'distance': cmd_distance,
    'midpoints': cmd_midpoints,
    'hessian': cmd_hessian,
    'taylor': cmd_taylor,
    'heat-eval': cmd_heat_eval,
    'glue': cmd_glue,
    'fit': cmd_fit,
    'verdict': cmd_verdict,
    'reproduce-table': cmd_reproduce_table,
}


def _report(exc: Exception, message: str):
    if logger.isEnabledFor(logging.DEBUG):
        logger.exception(message)
    else:
        logger.error(f"{message}: {exc}")


def run(argv) -> int:
    try:
        opts, args = getopt.gnu_getopt(list(argv), "hvc:o:", LONG_OPTIONS)
    except getopt.GetoptError as err:
        print(err, file=sys.stderr)
        print(USAGE, file=sys.stderr)
        return 1

    verbose = False
    config_path = None
    settings: Dict[str, str] = {}
    for opt, value in opts:
        if opt in ("-h", "--help"):
            print(USAGE)
            return 0
        elif opt in ("-v", "--verbose"):
            verbose = True
        elif opt in ("-c", "--config"):
            config_path = value
        elif opt in ("-o", "--output"):
            settings['output'] = value
        elif opt == "--derive":
            settings['derive'] = 'true'
        else:
            name = opt[2:]
            settings[ALIASES.get(name, name.replace('-', '_'))] = value
    if len(args) != 1:
        print("Wrong number of arguments", file=sys.stderr)
        print(USAGE, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')

    command = COMMANDS.get(args[0])
    if command is None:
        print(f"Unknown command {args[0]!r}", file=sys.stderr)
        print(USAGE, file=sys.stderr)
        return 1
    try:
        config = RunConfig()
        if config_path:
            config = apply_settings(config, read_config(config_path))
        config = apply_settings(config, settings)
    except (OSError, ValueError) as exc:
        _report(exc, "Bad configuration")
        return 1

    try:
        command(config)
    except InvalidModelError as exc:
        _report(exc, f"{args[0]} failed")
        print(exc.to_json(), file=sys.stderr)
        return 1
    except SubheatError as exc:
        _report(exc, f"{args[0]} failed")
        print(exc.to_json(), file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        _report(exc, f"{args[0]} failed")
        return 1
    return 0


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == '__main__':
    main()
