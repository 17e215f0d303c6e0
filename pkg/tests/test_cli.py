import csv
import json

import numpy as np
import pytest

from subheat.cli import run
from subheat.types import AsymptoticFit


def read_rows(path):
    with open(path) as f:
        return list(csv.reader(f))


def test_usage_errors(capsys):
    assert run([]) == 1
    assert run(['fit', 'extra']) == 1
    assert run(['teleport']) == 1
    assert run(['fit', '--no-such-flag']) == 1
    assert 'Usage' in capsys.readouterr().err


def test_help():
    assert run(['-h']) == 0


def test_bad_settings():
    assert run(['fit', '--tol=-1']) == 1
    assert run(['fit', '--t-grid=log:1:0.1:5']) == 1


def test_unknown_model_reports_json(capsys):
    assert run(['fit', '--model=engel']) == 1
    diagnostic = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert diagnostic['error'] == 'InvalidModelError'


def test_numeric_failure_exit_code(capsys):
    code = run(['heat-eval', '--model=grushin', '--method=mehler', '--from=0,0', '--to=0,1', '--t-grid=1e-5,1e-4'])
    assert code == 2
    diagnostic = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert diagnostic['error'] == 'ToleranceUnachievableError'
    assert 'achievable' in diagnostic


def test_fit_heisenberg(tmp_path):
    out = tmp_path / 'fit.json'
    assert run(['fit', '--model=heisenberg', '--target=0,0,1', '--t-grid=log:1e-3:1e-1:20', '-o', str(out)]) == 0
    with open(out) as f:
        data = json.load(f)
    assert data['alpha_hat'] == pytest.approx(2.0, abs=0.01)
    assert data['d2_hat'] == pytest.approx(4 * np.pi, abs=0.01)


def test_verdict_from_fit_file(tmp_path, capsys):
    path = tmp_path / 'fit.json'
    fit = AsymptoticFit(d2_hat=np.pi ** 2, alpha_hat=1.26, C_hat=0.1, residual_rms=1e-4, t_window=(0.01, 0.1))
    path.write_text(json.dumps(fit.to_dict()))
    assert run(['verdict', '--model=grushin', f'--fit={path}', '--conjugacy=1', '--predicted-alpha=5/4']) == 0
    verdict = json.loads(capsys.readouterr().out)
    assert verdict['clauses'] == {'i': True, 'ii': True, 'iii': None}
    assert verdict['n'] == 2
    assert verdict['predicted_alpha_exact'] == '5/4'


def test_verdict_needs_an_existing_fit(tmp_path):
    assert run(['verdict', f'--fit={tmp_path / "missing.json"}', '--conjugacy=0']) == 1
    assert run(['verdict', '--conjugacy=0']) == 1


def test_heat_eval_csv(tmp_path):
    out = tmp_path / 'samples.csv'
    assert run(['heat-eval', '--model=heisenberg', '--to=0,0,1', '--t-grid=0.5,1', '-o', str(out)]) == 0
    header, *rows = read_rows(out)
    assert header == ['t', 'value', 'log_value', 'method', 'est_error']
    assert [float(r[0]) for r in rows] == [0.5, 1.0]
    assert float(rows[1][1]) == pytest.approx(9.9271e-3, rel=1e-4)
    assert rows[1][1] == format(float(rows[1][1]), '.17g')
    assert rows[1][3] == 'closed_form'


def test_config_file_is_overridden_by_flags(tmp_path):
    config = tmp_path / 'run.conf'
    config.write_text("# vertical pair\nmodel = heisenberg\ntarget = 0,0,1\nt-grid = lin:0.1:1:4\n")
    first = tmp_path / 'first.csv'
    second = tmp_path / 'second.csv'
    assert run(['heat-eval', '-c', str(config), '-o', str(first)]) == 0
    assert run(['heat-eval', '-c', str(config), '--t-grid=0.5', '-o', str(second)]) == 0
    assert len(read_rows(first)) == 5
    assert len(read_rows(second)) == 2


def test_bad_config_file(tmp_path):
    config = tmp_path / 'run.conf'
    config.write_text("colour = blue\n")
    assert run(['fit', '-c', str(config)]) == 1
    assert run(['fit', '-c', str(tmp_path / 'absent.conf')]) == 1


def test_runs_are_deterministic(tmp_path):
    outputs = []
    for name in ('a.csv', 'b.csv'):
        out = tmp_path / name
        assert run(['heat-eval', '--model=heisenberg', '--to=0.3,-0.2,0.5', '--t-grid=log:0.1:1:5', '-o', str(out)]) == 0
        outputs.append(out.read_text())
    assert outputs[0] == outputs[1]


def test_geodesic_trajectory(tmp_path):
    out = tmp_path / 'geodesic.csv'
    assert run(['geodesic', '--model=heisenberg', '--params=0,1', '--t=2', '-o', str(out)]) == 0
    header, *rows = read_rows(out)
    assert header == ['t', 'q0', 'q1', 'q2', 'p0', 'p1', 'p2', 'H']
    assert len(rows) == 201
    assert all(float(r[-1]) == pytest.approx(0.5, abs=1e-6) for r in rows)
    assert run(['geodesic', '--model=heisenberg']) == 1


def test_grushin_distance(capsys):
    assert run(['distance', '--model=grushin', '--n-start=32']) == 0
    data = json.loads(capsys.readouterr().out)
    assert data['d'] == pytest.approx(np.pi, abs=1e-6)
    assert data['solutions'][0]['conjugate_at_or_before_T']


def test_wrong_point_dimension():
    assert run(['heat-eval', '--model=heisenberg', '--to=0,1']) == 1


def test_verdict_derives_conjugacy(tmp_path, capsys):
    path = tmp_path / 'fit.json'
    fit = AsymptoticFit(d2_hat=np.pi ** 2, alpha_hat=1.25, C_hat=0.1, residual_rms=1e-4, t_window=(0.01, 0.1))
    path.write_text(json.dumps(fit.to_dict()))
    assert run(['verdict', '--model=grushin', f'--fit={path}']) == 1
    capsys.readouterr()
    assert run(['verdict', '--model=grushin', f'--fit={path}', '--derive', '--n-start=32']) == 0
    verdict = json.loads(capsys.readouterr().out)
    assert verdict['conjugacy'] == 1
    assert verdict['clauses'] == {'i': True, 'ii': True, 'iii': None}
