import math

import numpy as np
import pytest

from ddrplates.exactness import (
    CHECK_NAMES, assemble_local_matrices, check_commutation_consistency, check_exactness, expected_dimensions,
)
from ddrplates.mesh import SUITE_CELLS, Mesh


def _certificate(ops, **kwargs):
    matrices = assemble_local_matrices(ops.mesh, ops.cell, ops.k, operators=ops, **kwargs)
    return check_exactness(matrices, samples=5, mesh_label='test')


def test_expected_dimensions():
    assert expected_dimensions(3, 3) == (24, 24, 3)
    assert expected_dimensions(4, 4) == (44, 47, 6)
    assert expected_dimensions(5, 6) == (80, 87, 10)


@pytest.mark.parametrize('k', [3, 4, 5])
@pytest.mark.parametrize('name', SUITE_CELLS)
def test_suite_is_certified(cell_operators, name, k):
    ops = cell_operators(name, k)
    certificate = _certificate(ops)
    assert certificate.passed, certificate.report()
    assert [c.key for c in certificate.checks] == list(CHECK_NAMES)
    dim_v, dim_s, dim_p = expected_dimensions(k, ops.nverts)
    assert (ops.v_layout.dim, ops.s_layout.dim) == (dim_v, dim_s)
    assert certificate.check('d').rank == dim_v - 3
    assert certificate.check('b').rank == dim_p
    assert certificate.check('e').rank == dim_s - dim_p


@pytest.mark.parametrize('name, k, rank', [('triangle', 3, 21), ('hexagon', 4, 57), ('hexagon', 5, 77)])
def test_ucsym_rank(cell_operators, name, k, rank):
    check = _certificate(cell_operators(name, k)).check('d')
    assert check.rank == check.expected == rank
    assert check.gap > 1e3


def test_fault_is_caught_by_dd_ucsym(cell_operators):
    certificate = _certificate(cell_operators('square', 4), inject_fault=True)
    assert not certificate.passed
    assert certificate.first_failure.key == 'c'
    assert certificate.check('a').passed
    assert certificate.check('b').passed
    assert 'c_dd_ucsym_zero' in certificate.report()
    assert certificate.lines()[0].endswith('pass=no')


def test_certificate_lines(cell_operators):
    certificate = _certificate(cell_operators('triangle', 3))
    lines = certificate.lines()
    assert lines[0] == '# mesh=test cell=0 k=3 seed=0 pass=yes'
    assert lines[4].startswith('cell=0 k=3 d_ucsym_rank ')
    assert 'rank=21 expected=21' in lines[4]
    assert all(line.endswith('pass=yes') for line in lines)


@pytest.mark.parametrize('name, k', [('triangle', 3), ('pentagon', 4), ('dart', 5)])
def test_identities_hold(cell_operators, name, k):
    report = check_commutation_consistency(cell_operators(name, k), samples=5, seed=3)
    assert report.passed(), '\n'.join(report.lines())
    assert set(report.residuals) >= {'commutation', 'potential_curl', 'tensor_potential', 'stabilization'}


def test_consistency_report_is_reused(cell_operators):
    ops = cell_operators('square', 3)
    report = check_commutation_consistency(ops, samples=2, seed=1)
    matrices = assemble_local_matrices(ops.mesh, ops.cell, 3, operators=ops)
    certificate = check_exactness(matrices, consistency=report)
    assert certificate.check('f').residual == report.residuals['commutation']
    assert certificate.check('g').residual == report.residuals['potential_curl']


def test_certificate_is_scale_and_rotation_invariant():
    angle = 0.4
    rotation = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    corners = 1e-3 * np.array([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]) @ rotation.T + (5.0, -2.0)
    mesh = Mesh(corners, [(0, 1, 2)])
    certificate = check_exactness(assemble_local_matrices(mesh, 0, 3), samples=5)
    assert certificate.passed, certificate.report()
    assert certificate.check('d').rank == 21
