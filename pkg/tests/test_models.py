import math
from types import SimpleNamespace

import pytest

from ddrplates.exactness import CheckResult, ExactnessCertificate
from ddrplates.kl_solver import ErrorReport
from ddrplates.models.certificate_model import CertificateDB
from ddrplates.models.convergence_model import ConvergenceDB
from ddrplates.models.core import DBConnector, DBError, ModelError
from ddrplates.utils.config import RunConfig


@pytest.fixture
def driver():
    return SimpleNamespace(state=DBConnector('sqlite://'))


def _certificate(cell_id=0, failing=None):
    checks = tuple(CheckResult(key, 0.0 if key != failing else 1.0, 1e-9, key != failing) for key in 'abcdefg')
    return ExactnessCertificate(mesh='cell square', cell_id=cell_id, k=4, seed=0, checks=checks)


def _report(mesh, h, err):
    return ErrorReport(mesh=mesh, h=h, ndof_retained=100, err_sigma=err, err_u=err / 10, gamma=5 ** -0.5,
                       solve_seconds=0.0, residual=1e-14)


def test_store_certificates(driver):
    certificates = CertificateDB(driver)
    stored = certificates.create_new(_certificate(), '2024-01-01')
    certificates.create_new(_certificate(cell_id=1, failing='c'), '2024-01-01')

    assert stored.id is not None
    assert stored.passed
    again = certificates.query_one(id=stored.id)
    assert again.report.startswith('# mesh=cell square cell=0 k=4')
    assert again.summary().endswith('PASS')

    failures = certificates.failures()
    assert len(failures) == 1
    assert failures[0].first_failure == 'dd_ucsym_zero'
    assert failures[0].summary().endswith('FAIL (dd_ucsym_zero)')
    assert len(certificates.query_all()) == 2


def test_duplicate_certificate(driver):
    certificates = CertificateDB(driver)
    certificates.create_new(_certificate(), '2024-01-01')
    with pytest.raises(DBError, match='already exists'):
        certificates.create_new(_certificate(), '2024-01-01')
    certificates.create_new(_certificate(), '2024-01-02')


def test_convergence_run_with_points(driver):
    runs = ConvergenceDB(driver)
    run = runs.create_new('tri family', '2024-01-01', RunConfig(command='convergence'), 3.0, 2.98, math.nan, True)
    rates = (math.nan, 2.9)
    for report, rate in zip((_report('tri 4', 0.35, 1e-2), _report('tri 8', 0.18, 1.3e-3)), rates):
        run.add_point(report, rate)

    stored = runs.query_one(label='tri family')
    assert stored.slope == pytest.approx(2.98)
    assert stored.slope_u is None
    points = stored.points
    assert [p.mesh for p in points] == ['tri 4', 'tri 8']
    assert points[0].rate_total is None
    assert points[1].rate_total == pytest.approx(2.9)
    assert points[0].err_total == pytest.approx(math.hypot(1e-2, 1e-3))
    assert '2 meshes, slope 2.980' in stored.summary()

    stored.delete()
    assert runs.query_all() is None
    assert stored.PointDB.query_all() is None


def test_point_needs_stored_run(driver):
    run = ConvergenceDB(driver).create_new('family', '2024-01-01', RunConfig(), 3.0, 3.1, 3.0, True)
    run.data.id = None
    with pytest.raises(ModelError):
        run.add_point(_report('tri 4', 0.35, 1e-2), math.nan)


def test_missing_rows(driver):
    assert CertificateDB(driver).query_one(id=99) is None
    assert ConvergenceDB(driver).query_all() is None
