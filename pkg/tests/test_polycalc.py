import math

import numpy as np
import pytest

from ddrplates.errors import BasisError, DDRError, QuadratureError
from ddrplates.mesh import Mesh, builtin_cell
from ddrplates.polycalc import (
    EdgeBasis, FunctionField, PolyFamily, ScaledMonomials, build_bases, build_quadrature, diffop_apply,
    gram_matrix, l2_project, poly_dim, split_holy_choly, vector_family,
)


def _origin_monomials(degree):
    return ScaledMonomials((0.0, 0.0), 1.0, degree)


def _field(mono, components):
    """One-member family from {component: {(a1, a2): coefficient}}."""
    ncomp = len(components)
    coeffs = np.zeros((1, ncomp, mono.size))
    for c, terms in enumerate(components):
        for exponent, value in terms.items():
            coeffs[0, c, mono.index(*exponent)] = value
    return PolyFamily(mono, coeffs)


def test_poly_dim():
    assert [poly_dim(m) for m in range(-2, 4)] == [0, 0, 1, 3, 6, 10]


def test_square_basis(unit_square):
    cell = unit_square.cells[0]
    basis = build_bases(cell, 1)
    assert len(basis) == 3
    quad = build_quadrature(cell, 4)
    np.testing.assert_allclose(gram_matrix(basis, basis, quad), np.eye(3), atol=1e-10)
    constant = basis.values(np.array([[0.3, 0.7], [0.9, 0.1]]))[0, 0]
    np.testing.assert_allclose(np.abs(constant), 1.0)


@pytest.mark.parametrize('name', ['triangle', 'hexagon', 'dart', 'slab'])
@pytest.mark.parametrize('kind, ncomp', [('scalar', 1), ('vector', 2), ('sym', 3)])
def test_bases_are_orthonormal(name, kind, ncomp):
    cell = builtin_cell(name).cells[0]
    basis = build_bases(cell, 4, kind=kind)
    assert len(basis) == ncomp * poly_dim(4)
    quad = build_quadrature(cell, 10)
    np.testing.assert_allclose(gram_matrix(basis, basis, quad), np.eye(len(basis)), atol=1e-10)


def test_edge_basis_of_length_two():
    mesh = Mesh([(0.0, 0.0), (2.0, 0.0), (0.0, 2.0)], [(0, 1, 2)])
    edge = mesh.edges[0]
    assert edge.length == pytest.approx(2.0)
    basis = build_bases(edge, 0)
    np.testing.assert_allclose(basis.values([-1.0, 0.0, 0.5]), [[1.0 / math.sqrt(2.0)] * 3])


def test_empty_bases(unit_square):
    cell = unit_square.cells[0]
    assert len(build_bases(cell, -1)) == 0
    assert len(build_bases(unit_square.edges[0], -1)) == 0


def test_quadrature_on_square(unit_square):
    quad = build_quadrature(unit_square.cells[0], 2)
    assert quad.integrate(quad.points[:, 0] * quad.points[:, 1]) == pytest.approx(0.25, abs=1e-14)
    assert np.all(quad.weights > 0)


def test_gauss_legendre_on_edge():
    mesh = Mesh([(-1.0, 0.0), (1.0, 0.0), (0.0, 1.0)], [(0, 1, 2)])
    quad = build_quadrature(mesh.edges[0], 3)
    assert len(quad.weights) == 2
    assert quad.integrate(quad.params ** 2) == pytest.approx(2.0 / 3.0, abs=1e-14)


def test_triangle_rule_degree_14():
    quad = build_quadrature(builtin_cell('triangle').cells[0], 14)
    x, y = quad.points[:, 0], quad.points[:, 1]
    for total in range(15):
        for a in range(total + 1):
            b = total - a
            exact = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
            assert quad.integrate(x ** a * y ** b) == pytest.approx(exact, rel=1e-13)


def test_quadrature_errors(unit_square):
    with pytest.raises(QuadratureError):
        build_quadrature(unit_square.cells[0], -1)
    with pytest.raises(QuadratureError):
        build_quadrature('cell', 2)


def test_symcurl_example():
    mono = _origin_monomials(2)
    v = _field(mono, [{(0, 1): 1.0}, {}])
    tau = diffop_apply('SYMCURL', v).values(np.array([[0.3, -0.2]]))[0, :, 0]
    np.testing.assert_allclose(tau, [1.0, 0.0, 0.0], atol=1e-14)


def test_c_of_constant_tensors():
    mono = _origin_monomials(0)
    identity = _field(mono, [{(0, 0): 1.0}, {}, {}, {(0, 0): 1.0}])
    swap = _field(mono, [{}, {(0, 0): 1.0}, {(0, 0): 1.0}, {}])
    point = np.array([[0.1, 0.2]])
    np.testing.assert_allclose(diffop_apply('C', identity).values(point)[0, :, 0], [0.0, 0.0, 0.0])
    np.testing.assert_allclose(diffop_apply('C', swap).values(point)[0, :, 0], [1.0, 0.0, -1.0])


def test_vrot_example():
    mono = _origin_monomials(1)
    tau = _field(mono, [{(0, 1): 1.0}, {}, {}])
    np.testing.assert_allclose(diffop_apply('VROT', tau).values(np.array([[0.4, 0.6]]))[0, :, 0], [1.0, 0.0])


def test_symcurl_is_c_grad():
    mono = ScaledMonomials((0.2, -0.1), 0.7, 4)
    rng = np.random.default_rng(3)
    family = PolyFamily(mono, rng.uniform(-1.0, 1.0, (5, 2, mono.size)))
    np.testing.assert_allclose(diffop_apply('SYMCURL', family).coeffs,
                               diffop_apply('C', diffop_apply('GRAD', family)).coeffs, atol=1e-12)


def test_divdiv_of_hessian_is_bilaplacian():
    mono = _origin_monomials(4)
    q = _field(mono, [{(4, 0): 1.0, (2, 2): 1.0}])
    value = diffop_apply('DIVDIV', diffop_apply('HESS', q)).values(np.array([[0.5, 0.5]]))[0, 0, 0]
    # d^4/dx^4 x^4 + 2 d^4/dx^2dy^2 x^2y^2
    assert value == pytest.approx(24.0 + 8.0)


def test_operator_shape_mismatch():
    scalar = _field(_origin_monomials(1), [{(1, 0): 1.0}])
    with pytest.raises(BasisError):
        diffop_apply('VDIV', scalar)
    with pytest.raises(BasisError):
        diffop_apply('LAPLACE', scalar)


@pytest.mark.parametrize('name', ['triangle', 'square', 'hexagon', 'dart'])
def test_holy_choly_dimensions(name):
    cell = builtin_cell(name).cells[0]
    for m in range(0, 7):
        split = split_holy_choly(cell, m)
        holy, choly = split.dimensions
        assert holy == (m + 4) * (m + 3) // 2 - 3
        assert choly == m * (m + 1)
        assert holy + choly == 3 * (m + 1) * (m + 2) // 2


def test_holy_choly_degree_two(unit_square):
    assert split_holy_choly(unit_square.cells[0], 2).dimensions == (12, 6)
    assert split_holy_choly(unit_square.cells[0], -1).dimensions == (0, 0)


def test_hessian_lies_in_holy(unit_square):
    cell = unit_square.cells[0]
    split = split_holy_choly(cell, 1)
    # HESS of x1^2 x2
    hess = FunctionField(3, lambda p: np.stack([2.0 * p[:, 1], 2.0 * p[:, 0], np.zeros(len(p))]))
    coeffs = split.project_holy(hess)
    points = split.quad.points
    np.testing.assert_allclose(split.holy.combine(coeffs).value(points), hess.value(points), atol=1e-11)


@pytest.mark.parametrize('name', ['triangle', 'pentagon', 'slab'])
def test_projectors_reproduce_their_summand(name):
    cell = builtin_cell(name).cells[0]
    split = split_holy_choly(cell, 3)
    rng = np.random.default_rng(0)
    for family, project in ((split.holy, split.project_holy), (split.choly, split.project_choly)):
        coeffs = rng.uniform(-1.0, 1.0, len(family))
        np.testing.assert_allclose(project(family.combine(coeffs)), coeffs, atol=1e-11)


@pytest.mark.parametrize('name', ['triangle', 'square', 'hexagon', 'dart'])
def test_vrot_is_injective_on_choly(name):
    cell = builtin_cell(name).cells[0]
    for m in range(1, 5):
        split = split_holy_choly(cell, m)
        vrot = diffop_apply('VROT', split.choly)
        target = build_bases(cell, m - 1, kind='vector', mono=split.choly.mono, quad=split.quad)
        coords = gram_matrix(vrot, target, split.quad) * cell.diameter
        assert np.linalg.svd(coords, compute_uv=False).min() > 1e-8


def test_projection_of_x1(unit_square):
    cell = unit_square.cells[0]
    basis = build_bases(cell, 0)
    quad = build_quadrature(cell, 2)
    coeffs = l2_project(basis, FunctionField(1, lambda p: p[:, 0]), quad)
    assert basis.combine(coeffs).value(np.array([[0.2, 0.9]]))[0, 0] == pytest.approx(0.5)


def test_galerkin_orthogonality():
    cell = builtin_cell('pentagon').cells[0]
    quad = build_quadrature(cell, 16)
    basis = build_bases(cell, 3, kind='vector', quad=quad)
    f = FunctionField(2, lambda p: np.stack([np.sin(3 * p[:, 0]), np.exp(p[:, 1])]))
    coeffs = l2_project(basis, f, quad)
    residual = f.value(quad.points) - basis.combine(coeffs).value(quad.points)
    moments = np.einsum('icq,cq,q->i', basis.values(quad.points), residual, quad.weights)
    assert np.abs(moments).max() < 1e-11 * np.linalg.norm(coeffs)


def test_edge_projection_of_sine(unit_square):
    edge = unit_square.edges[0]
    basis = EdgeBasis(edge, 7)
    quad = build_quadrature(edge, 20)
    coeffs = l2_project(basis, FunctionField(1, lambda p: np.sin(np.pi * p[:, 0])), quad)
    s = np.linspace(-1.0, 1.0, 401)
    approx = basis.values(s).T @ coeffs
    assert np.abs(approx - np.sin(np.pi * 0.5 * (s + 1.0))).max() < 1e-4


def test_vector_family_layout():
    mono = _origin_monomials(1)
    scalar = PolyFamily(mono, np.eye(mono.size)[:, None, :])
    family = vector_family(scalar)
    assert len(family) == 6
    assert family.ncomp == 2


def test_missing_derivative():
    f = FunctionField(1, lambda p: p[:, 0], name='x1')
    with pytest.raises(DDRError, match='x1'):
        f.gradient(np.zeros((1, 2)))
