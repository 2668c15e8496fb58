import json

import pytest
from scipy.linalg import LinAlgError

from ddrplates import ddr_core
from ddrplates.errors import ConfigError
from ddrplates.mesh import read_polymesh
from ddrplates.utils.config import build_config, read_config_file
from plates import main

FAMILY = ['--mesh', 'tri 1', '--mesh', 'tri 2', '--mesh', 'tri 3']


def run(*argv):
    return main(list(argv) + ['--db', 'none'])


def test_verify_passes(capsys):
    assert run('verify', '--mesh', 'cell triangle', '--k', '3', '--samples', '3') == 0
    out = capsys.readouterr().out
    assert '# mesh=cell triangle cell=0 k=3 seed=0 pass=yes' in out
    assert 'cell=0 k=3 d_ucsym_rank residual=' in out
    assert '# 1/1 certificates passed' in out


def test_verify_report_file(tmp_path, capsys):
    target = tmp_path / 'certificates.txt'
    assert run('verify', '--mesh', 'cell square', '--k', '3', '--k', '4', '--samples', '2', '--out', str(target)) == 0
    assert f'certificate report written to {target}' in capsys.readouterr().out
    text = target.read_text()
    assert 'k=3' in text and 'k=4' in text
    assert text.rstrip().endswith('# 2/2 certificates passed')


def test_injected_fault_names_check_c(capsys):
    code = run('verify', '--mesh', 'cell square', '--k', '3', '--samples', '2', '--inject-fault')
    assert code == 1
    out = capsys.readouterr().out
    assert 'verification failed: cell square cell 0 k=3: check (c) dd_ucsym_zero' in out


@pytest.mark.parametrize('argv', [
    ('solve', '--mesh', 'tri 1', '--degree', '1'),
    ('verify', '--mesh', 'cell triangle', '--k', '2'),
    ('convergence', '--mesh', 'tri 1', '--mesh', 'tri 2'),
    ('solve', '--mesh', 'tri 1', '--nu', '1.0'),
    ('solve', '--mesh', 'hex 3'),
    ('mesh', '--mesh', 'missing.polymesh'),
])
def test_input_errors_exit_2(argv, capsys):
    assert run(*argv) == 2
    assert 'Error' in capsys.readouterr().err


def test_bad_flag_is_a_usage_error():
    with pytest.raises(SystemExit) as exc:
        run('solve', '--solution', 'parabola')
    assert exc.value.code == 2


def test_mesh_to_stdout(capsys):
    assert run('mesh', '--mesh', 'cart 2') == 0
    captured = capsys.readouterr()
    assert captured.out.startswith('polymesh 1\n9 4\n')
    assert '# euler           1' in captured.err


def test_mesh_to_file(tmp_path, capsys):
    target = tmp_path / 'k4.polymesh'
    assert run('mesh', '--mesh', 'kershaw 4 0.5', '--out', str(target)) == 0
    assert 'euler' in capsys.readouterr().out
    assert len(read_polymesh(target).cells) == 16


def test_mesh_directory(tmp_path):
    assert run('mesh', '--mesh', 'tri 2', '--mesh', 'cell dart', '--out', str(tmp_path / 'meshes')) == 0
    assert sorted(p.name for p in (tmp_path / 'meshes').iterdir()) == ['cell_dart.polymesh', 'tri_2.polymesh']


def test_json_config_is_overridden_by_flags(tmp_path):
    path = tmp_path / 'run.json'
    path.write_text(json.dumps({'mesh': ['cell square'], 'k': [3], 'samples': 3, 'nu': 0.3, 'colour': 'red'}))
    config = build_config('verify', {'ks': [4], 'seed': 7}, config_path=path)
    assert config.meshes == ('cell square',)
    assert config.ks == (4,)
    assert config.samples == 3
    assert config.seed == 7
    assert config.nu == pytest.approx(0.3)
    assert config.extra == {'colour': 'red'}


def test_key_value_config(tmp_path):
    path = tmp_path / 'family.cfg'
    path.write_text('# triangular family\nl = 3\nmesh = tri 2, tri 4, tri 8  # coarse\ntimings = off\n')
    config = build_config('convergence', config_path=path)
    assert config.degree == 3
    assert config.mesh_sources == ('tri 2', 'tri 4', 'tri 8')
    assert config.timings is False
    assert config.db_url.startswith('sqlite:///')


@pytest.mark.parametrize('text, message', [
    ('degree = two\n', 'degree'),
    ('mesh = tri 2\nparallel\n', 'line 2'),
    ('timings = maybe\n', 'boolean'),
])
def test_bad_config_file(tmp_path, text, message):
    path = tmp_path / 'bad.cfg'
    path.write_text(text)
    with pytest.raises(ConfigError, match=message):
        build_config('solve', config_path=path)


def test_bad_json(tmp_path):
    path = tmp_path / 'bad.json'
    path.write_text('{"mesh": ["tri 2"],\n "degree": }')
    with pytest.raises(ConfigError, match='line 2'):
        read_config_file(path)


def test_default_meshes():
    assert build_config('verify').mesh_sources == ('suite',)
    assert len(build_config('convergence').mesh_sources) == 4
    assert build_config('history', {'db': 'none'}).db_url is None


def test_solve_prints_report(capsys):
    assert run('solve', '--mesh', 'tri 2', '--no-timings', '--samples', '3') == 0
    out = capsys.readouterr().out
    assert 'mesh            tri 2' in out
    assert 'inf-sup' in out
    assert 'coercivity      0 violations' in out
    assert 'solve seconds' not in out


def test_solve_with_exactness_check(capsys):
    assert run('solve', '--mesh', 'tri 1', '--check-exactness', '--samples', '2', '--no-condensation') == 0
    assert 'error Sigma x L' in capsys.readouterr().out


def test_convergence_csv_is_reproducible(tmp_path, capsys):
    first, second = tmp_path / 'a.csv', tmp_path / 'b.csv'
    codes = [run('convergence', *FAMILY, '--no-timings', '--out', str(target)) for target in (first, second)]
    assert codes[0] == codes[1]
    assert first.read_bytes() == second.read_bytes()
    rows = first.read_text().splitlines()
    assert rows[0] == 'mesh_id,h,ndof_retained,err_total,err_sigma,err_u,rate_total,gamma,solve_seconds'
    assert len(rows) == 4
    assert rows[1].split(',')[6] == 'nan'
    assert rows[1].endswith(',0.000000000000e+00')
    assert 'fitted slope' in capsys.readouterr().out


def test_convergence_csv_records_timings_by_default(tmp_path):
    target = tmp_path / 'timed.csv'
    run('convergence', *FAMILY, '--solution', 'zero', '--out', str(target))
    seconds = [float(row.split(',')[-1]) for row in target.read_text().splitlines()[1:]]
    assert len(seconds) == 3
    assert all(s > 0 for s in seconds)


def test_parallel_matches_sequential(tmp_path):
    sequential, parallel = tmp_path / 'seq.csv', tmp_path / 'par.csv'
    run('convergence', *FAMILY, '--no-timings', '--out', str(sequential))
    run('convergence', *FAMILY, '--no-timings', '--parallel', '--workers', '2', '--out', str(parallel))
    assert sequential.read_bytes() == parallel.read_bytes()


def test_zero_solution_convergence(capsys):
    assert run('convergence', *FAMILY, '--solution', 'zero') == 0
    out = capsys.readouterr().out
    assert 'zero solution: max error' in out
    assert out.rstrip().endswith('PASS')


def test_results_are_stored(tmp_path, capsys):
    db = str(tmp_path / 'results.sqlite3')
    assert main(['verify', '--mesh', 'cell triangle', '--k', '3', '--samples', '2', '--db', db]) == 0
    assert main(['verify', '--mesh', 'cell square', '--k', '3', '--samples', '2', '--inject-fault', '--db', db]) == 1
    assert main(['convergence', *FAMILY, '--solution', 'zero', '--db', db]) == 0
    capsys.readouterr()

    assert main(['history', '--db', db]) == 0
    out = capsys.readouterr().out
    assert 'certificates (2)' in out
    assert 'cell triangle cell 0 k=3 seed=0: PASS' in out
    assert 'convergence runs (1)' in out
    assert '3 meshes' in out

    assert main(['history', '--failures', '--db', db]) == 0
    out = capsys.readouterr().out
    assert 'certificates (1)' in out
    assert 'FAIL (dd_ucsym_zero)' in out

    assert main(['history', '--show', '1', '--db', db]) == 0
    out = capsys.readouterr().out
    assert out.startswith('#1 ')
    assert '# mesh=cell triangle cell=0 k=3 seed=0 pass=yes' in out

    assert main(['history', '--delete-run', '1', '--db', db]) == 0
    assert 'and 3 points' in capsys.readouterr().out
    assert main(['history', '--db', db]) == 0
    assert 'convergence runs (0)' in capsys.readouterr().out

    assert main(['history', '--show', '99', '--db', db]) == 2
    assert 'No stored certificate' in capsys.readouterr().err


def test_history_needs_a_store(capsys):
    assert run('history') == 2
    assert 'results store' in capsys.readouterr().err


def test_singular_local_system_exits_3(monkeypatch, capsys):
    def singular(matrix, rhs):
        raise LinAlgError('Matrix is singular.')

    monkeypatch.setattr(ddr_core, 'solve', singular)
    assert run('solve', '--mesh', 'tri 1', '--samples', '2') == 3
    assert 'DDRError' in capsys.readouterr().err
