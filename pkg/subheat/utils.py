""" Config files, argument parsers and CSV / JSON writers of the command line """
import csv
import dataclasses
import io
import json
import sys
import typing
from fractions import Fraction
from typing import Any, Dict, Iterable, List, Sequence, Tuple

import numpy as np

from subheat.types import FlowResult, KernelSample, RunConfig, TaylorCoefficient

FLOAT_FORMAT = '.17g'


def parse_point(text: str) -> np.ndarray:
    """ '1,0.5,-2' -> array """
    try:
        return np.array([float(v) for v in text.split(',')], dtype=float)
    except ValueError as exc:
        raise ValueError(f"Cannot parse point {text!r}") from exc


def parse_matrix(text: str) -> np.ndarray:
    """ Row-major matrix, rows separated by ';': '1,1;1,-1' """
    rows = [parse_point(row) for row in text.split(';')]
    if len({len(r) for r in rows}) != 1:
        raise ValueError(f"Ragged matrix {text!r}")
    return np.array(rows)


def parse_box(text: str) -> List[Tuple[float, float]]:
    """ 'a:b,c:d,...' -> [(a, b), (c, d), ...] """
    box = []
    for item in text.split(','):
        try:
            a, b = (float(v) for v in item.split(':'))
        except ValueError as exc:
            raise ValueError(f"Cannot parse box interval {item!r}") from exc
        if not a < b:
            raise ValueError(f"Empty box interval {item!r}")
        box.append((a, b))
    return box


def parse_t_grid(text: str) -> np.ndarray:
    """ 'log:a:b:N', 'lin:a:b:N' or a comma-separated list of times """
    kind, _, rest = text.partition(':')
    if kind in ('log', 'lin'):
        try:
            a, b, n = rest.split(':')
            a, b, n = float(a), float(b), int(n)
        except ValueError as exc:
            raise ValueError(f"Cannot parse time grid {text!r}") from exc
        if not 0 < a < b or n < 2:
            raise ValueError(f"Time grid {text!r} needs 0 < a < b and N >= 2")
        return np.geomspace(a, b, n) if kind == 'log' else np.linspace(a, b, n)
    ts = parse_point(text)
    if np.any(ts <= 0):
        raise ValueError("Times must be positive")
    return ts


def parse_fraction(text: str) -> Fraction:
    return Fraction(text.strip())


def read_config(path: str) -> Dict[str, str]:
    """ Plain-text key=value lines; blank lines and '#' comments are skipped """
    settings = {}
    with open(path) as f:
        for number, line in enumerate(f, 1):
            line = line.split('#', 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition('=')
            if not sep:
                raise ValueError(f"{path}:{number}: expected key=value")
            settings[key.strip().replace('-', '_')] = value.strip()
    return settings


def _convert(field_type: Any, value: str) -> Any:
    kinds = typing.get_args(field_type) or (field_type,)
    if bool in kinds:
        return value.lower() in ('1', 'true', 'yes', 'on')
    for kind in (int, float):
        if kind in kinds:
            return kind(value)
    return value


def apply_settings(config: RunConfig, settings: Dict[str, str]) -> RunConfig:
    """ New RunConfig with `settings` applied; 'shoot.*' and 'hinged.*' keys reach the nested options """
    top: Dict[str, Any] = {}
    nested: Dict[str, Dict[str, Any]] = {'shoot': {}, 'hinged': {}}
    fields = {f.name: f for f in dataclasses.fields(config)}
    for key, value in settings.items():
        group, dot, name = key.partition('.')
        if dot:
            if group not in nested:
                raise ValueError(f"Unknown setting {key!r}")
            options = getattr(config, group)
            sub = {f.name: f for f in dataclasses.fields(options)}
            if name not in sub:
                raise ValueError(f"Unknown setting {key!r}")
            nested[group][name] = _convert(sub[name].type, value)
        else:
            if key not in fields or key in nested:
                raise ValueError(f"Unknown setting {key!r}")
            top[key] = _convert(fields[key].type, value)
    for group, values in nested.items():
        if values:
            top[group] = dataclasses.replace(getattr(config, group), **values)
    return dataclasses.replace(config, **top)


def _cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return format(float(value), FLOAT_FORMAT)
    return str(value)


def write_csv(path: str | None, header: Sequence[str], rows: Iterable[Sequence[Any]]):
    """ CSV with 17 significant digits; `path` None writes to standard output """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    _emit(path, buffer.getvalue())


def _plain(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def write_json(path: str | None, data: Any):
    _emit(path, json.dumps(_plain(data), indent=2, sort_keys=True) + '\n')


def read_json(path: str) -> Any:
    with open(path) as f:
        return json.load(f)


def _emit(path: str | None, text: str):
    if path is None or path == '-':
        sys.stdout.write(text)
    else:
        with open(path, 'w') as f:
            f.write(text)


def trajectory_rows(result: FlowResult, hamiltonian) -> Tuple[List[str], List[List[float]]]:
    """ Header and rows t, q..., p..., H of a sampled exp_map result """
    times, qs, ps = result.trajectory
    n = qs.shape[1]
    header = ['t'] + [f'q{i}' for i in range(n)] + [f'p{i}' for i in range(n)] + ['H']
    rows = [[t, *q, *p, hamiltonian(q, p)] for t, q, p in zip(times, qs, ps)]
    return header, rows


def taylor_rows(coefficients: Sequence[TaylorCoefficient]):
    return ['monomial', 'coefficient', 'uncertainty', 'reliable'], \
        [[c.monomial, c.coefficient, c.uncertainty, int(c.reliable)] for c in coefficients]


def sample_rows(samples: Sequence[KernelSample]):
    return ['t', 'value', 'log_value', 'method', 'est_error'], \
        [[s.t, s.value, s.log_value, s.method.value, s.est_error] for s in samples]
