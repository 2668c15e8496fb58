"""Polynomial calculus on polygonal cells and their edges.

Cell polynomials are stored as coefficients over scaled monomials
((x - x_T)/h_T)^alpha, ordered by total degree. A PolyFamily holds several
polynomial fields at once with shape (members, components, monomials); the
component count fixes the kind of field:

    1   scalar
    2   vector (v1, v2)
    3   symmetric tensor (11, 12, 22)
    4   full tensor (11, 12, 21, 22)

Inner products of tensor families use the Frobenius product, so the 12 entry
of a symmetric tensor counts twice.

Edge polynomials are Legendre series in s in [-1, 1], s = -1 at the tail.
"""
import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.polynomial import legendre
from scipy.linalg import cho_factor, cho_solve, cholesky, qr, solve_triangular

from .errors import BasisError, DDRError, QuadratureError
from .mesh import Cell, Edge

logger = logging.getLogger(__name__)

FROBENIUS = {
    1: np.array([1.0]),
    2: np.array([1.0, 1.0]),
    3: np.array([1.0, 2.0, 1.0]),
    4: np.array([1.0, 1.0, 1.0, 1.0]),
}
REORTHOGONALIZE_COND = 1e10
MAX_GRAM_COND = 1e14


def poly_dim(m):
    """Dimension of P^m in two variables, 0 for m < 0."""
    return 0 if m < 0 else (m + 1) * (m + 2) // 2


def frobenius(tau, upsilon):
    """Frobenius product of symmetric tensors stored as (11, 12, 22) along axis 0."""
    return tau[0] * upsilon[0] + 2.0 * tau[1] * upsilon[1] + tau[2] * upsilon[2]


# ----------------------------------------------
# Scaled monomials
# ----------------------------------------------
class ScaledMonomials:
    def __init__(self, center, diameter, degree):
        self.center = np.asarray(center, dtype=float)
        self.diameter = float(diameter)
        self.degree = int(degree)
        self.exponents = np.array([(d - j, j) for d in range(self.degree + 1) for j in range(d + 1)], dtype=int)
        self.size = len(self.exponents)
        self._index = {tuple(e): i for i, e in enumerate(self.exponents)}

    def index(self, a1, a2):
        return self._index[(a1, a2)]

    def scaled(self, points):
        return (np.atleast_2d(points) - self.center) / self.diameter

    def values(self, points):
        y = self.scaled(points)
        return (np.power(y[None, :, 0], self.exponents[:, 0:1])
                * np.power(y[None, :, 1], self.exponents[:, 1:2]))

    def _derivative(self, axis):
        d = np.zeros((self.size, self.size))
        for i, alpha in enumerate(self.exponents):
            if alpha[axis] > 0:
                lower = list(alpha)
                lower[axis] -= 1
                d[i, self._index[tuple(lower)]] = alpha[axis] / self.diameter
        return d

    @cached_property
    def d1(self):
        return self._derivative(0)

    @cached_property
    def d2(self):
        return self._derivative(1)

    def _shift(self, axis):
        s = np.zeros((self.size, self.size))
        for i, alpha in enumerate(self.exponents):
            raised = list(alpha)
            raised[axis] += 1
            j = self._index.get(tuple(raised))
            if j is not None:
                s[i, j] = 1.0
        return s

    @cached_property
    def y1(self):
        """Multiplication by (x_1 - x_T,1)/h_T, truncated at the top degree."""
        return self._shift(0)

    @cached_property
    def y2(self):
        return self._shift(1)


# ----------------------------------------------
# Polynomial families
# ----------------------------------------------
class PolyFamily:
    def __init__(self, mono, coeffs, degree=None):
        self.mono = mono
        self.coeffs = np.asarray(coeffs, dtype=float).reshape(-1, np.shape(coeffs)[1], mono.size)
        self.degree = degree

    @classmethod
    def empty(cls, mono, ncomp, degree=None):
        return cls(mono, np.zeros((0, ncomp, mono.size)), degree)

    @property
    def ncomp(self):
        return self.coeffs.shape[1]

    def __len__(self):
        return self.coeffs.shape[0]

    def __getitem__(self, item):
        return PolyFamily(self.mono, self.coeffs[item], self.degree)

    def values(self, points):
        return np.einsum('fcm,mp->fcp', self.coeffs, self.mono.values(points))

    def derivative(self, axis):
        d = self.mono.d1 if axis == 0 else self.mono.d2
        return PolyFamily(self.mono, self.coeffs @ d, self.degree)

    def gradients(self, points):
        """Gradients of every component, shape (members, components, 2, points)."""
        return np.stack([self.derivative(0).values(points), self.derivative(1).values(points)], axis=2)

    def transform(self, matrix):
        return PolyFamily(self.mono, np.einsum('ij,jcm->icm', matrix, self.coeffs), self.degree)

    def concat(self, other):
        return PolyFamily(self.mono, np.concatenate([self.coeffs, other.coeffs]), self.degree)

    def combine(self, weights):
        """The single field sum_i weights[i] * member_i."""
        return PolynomialField(self.mono, np.einsum('i,icm->cm', np.asarray(weights, dtype=float), self.coeffs))


def _stack(mono, components):
    return PolyFamily(mono, np.stack(components, axis=1))


def diffop_apply(op, family):
    """Apply one of the differential operators to every member of a family."""
    c = family.coeffs
    mono = family.mono
    nc = family.ncomp
    op = op.upper()

    def d(axis, arr=c):
        return arr @ (mono.d1 if axis == 0 else mono.d2)

    if op == 'GRAD' and nc == 1:
        return _stack(mono, [d(0)[:, 0], d(1)[:, 0]])
    if op == 'GRAD' and nc == 2:
        return _stack(mono, [d(0)[:, 0], d(1)[:, 0], d(0)[:, 1], d(1)[:, 1]])
    if op == 'CURL' and nc == 1:
        return _stack(mono, [d(1)[:, 0], -d(0)[:, 0]])
    if op == 'DIV' and nc == 2:
        return _stack(mono, [d(0)[:, 0] + d(1)[:, 1]])
    if op == 'SYMCURL' and nc == 2:
        return _stack(mono, [d(1)[:, 0], 0.5 * (-d(0)[:, 0] + d(1)[:, 1]), -d(0)[:, 1]])
    if op == 'VDIV' and nc == 3:
        return _stack(mono, [d(0)[:, 0] + d(1)[:, 1], d(0)[:, 1] + d(1)[:, 2]])
    if op == 'VDIV' and nc == 4:
        return _stack(mono, [d(0)[:, 0] + d(1)[:, 1], d(0)[:, 2] + d(1)[:, 3]])
    if op == 'VROT' and nc == 3:
        return _stack(mono, [d(1)[:, 0] - d(0)[:, 1], d(1)[:, 1] - d(0)[:, 2]])
    if op == 'VROT' and nc == 4:
        return _stack(mono, [d(1)[:, 0] - d(0)[:, 1], d(1)[:, 2] - d(0)[:, 3]])
    if op == 'HESS' and nc == 1:
        c1 = d(0)
        return _stack(mono, [d(0, c1)[:, 0], d(1, c1)[:, 0], d(1, d(1))[:, 0]])
    if op == 'C' and nc == 4:
        return _stack(mono, [c[:, 1], 0.5 * (-c[:, 0] + c[:, 3]), -c[:, 2]])
    if op == 'C' and nc == 3:
        return _stack(mono, [c[:, 1], 0.5 * (-c[:, 0] + c[:, 2]), -c[:, 1]])
    if op == 'DIVDIV' and nc == 3:
        return diffop_apply('DIV', diffop_apply('VDIV', family))
    raise BasisError(f'Operator {op} does not apply to fields with {nc} components')


# ----------------------------------------------
# Fields
# ----------------------------------------------
class PolynomialField:
    """One polynomial field over scaled monomials; coeffs has shape (components, monomials)."""

    def __init__(self, mono, coeffs):
        self.mono = mono
        self.coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))

    @property
    def ncomp(self):
        return self.coeffs.shape[0]

    def value(self, points):
        return self.coeffs @ self.mono.values(points)

    def gradient(self, points):
        vals = self.mono.values(points)
        return np.stack([self.coeffs @ self.mono.d1 @ vals, self.coeffs @ self.mono.d2 @ vals], axis=1)

    def hessian(self, points):
        vals = self.mono.values(points)
        d1, d2 = self.mono.d1, self.mono.d2
        h11 = self.coeffs @ d1 @ d1 @ vals
        h12 = self.coeffs @ d1 @ d2 @ vals
        h22 = self.coeffs @ d2 @ d2 @ vals
        return np.stack([np.stack([h11, h12], axis=1), np.stack([h12, h22], axis=1)], axis=1)


class FunctionField:
    """Closed-form field; value, gradient and hessian map points (n, 2) to arrays
    of shape (components, n), (components, 2, n) and (components, 2, 2, n)."""

    def __init__(self, ncomp, value, gradient=None, hessian=None, name='field'):
        self.ncomp = ncomp
        self.name = name
        self._value = value
        self._gradient = gradient
        self._hessian = hessian

    def value(self, points):
        return np.asarray(self._value(np.atleast_2d(points)), dtype=float).reshape(self.ncomp, -1)

    def gradient(self, points):
        if self._gradient is None:
            raise DDRError(f'{self.name}: first derivatives are required but not provided')
        return np.asarray(self._gradient(np.atleast_2d(points)), dtype=float).reshape(self.ncomp, 2, -1)

    def hessian(self, points):
        if self._hessian is None:
            raise DDRError(f'{self.name}: second derivatives are required but not provided')
        return np.asarray(self._hessian(np.atleast_2d(points)), dtype=float).reshape(self.ncomp, 2, 2, -1)


def _evaluate(f, points):
    if hasattr(f, 'value'):
        return f.value(points)
    return np.atleast_2d(np.asarray(f(points), dtype=float))


# ----------------------------------------------
# Quadrature
# ----------------------------------------------
@dataclass(frozen=True, eq=False)
class QuadRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int
    params: np.ndarray = None

    def integrate(self, values):
        return np.asarray(values) @ self.weights


def _gauss01(n):
    x, w = legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def triangle_rule(a, b, c, degree):
    """Collapsed Gauss rule on the triangle (a, b, c), exact to the given degree."""
    n = max(1, math.ceil((degree + 2) / 2))
    u, wu = _gauss01(n)
    v, wv = _gauss01(n)
    uu, vv = np.meshgrid(u, v, indexing='ij')
    ww = np.outer(wu, wv)
    twice_area = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    points = (a[None] + uu.reshape(-1, 1) * (b - a)[None]
              + (uu * vv).reshape(-1, 1) * (c - b)[None])
    weights = (twice_area * uu * ww).reshape(-1)
    return points, weights, twice_area


def build_quadrature(element, degree):
    """Quadrature on a cell (fan of triangles from x_T) or an edge (Gauss-Legendre)."""
    if degree < 0:
        raise QuadratureError(f'Quadrature degree must be non-negative, got {degree}')
    if isinstance(element, Edge):
        n = max(1, math.ceil((degree + 1) / 2))
        s, w = legendre.leggauss(n)
        half = 0.5 * element.length
        points = element.midpoint[None] + (half * s)[:, None] * element.tangent[None]
        return QuadRule(points=points, weights=half * w, degree=degree, params=s)
    if isinstance(element, Cell):
        coords = element.coordinates
        m = len(coords)
        points, weights = [], []
        for i in range(m):
            p, w, twice_area = triangle_rule(element.center, coords[i], coords[(i + 1) % m], degree)
            if twice_area <= 0:
                raise QuadratureError(
                    f'Cell {element.id}: fan triangle {i} from x_T has non-positive area; '
                    f'run mesh diagnostics to check star-shapedness'
                )
            points.append(p)
            weights.append(w)
        return QuadRule(points=np.concatenate(points), weights=np.concatenate(weights), degree=degree)
    raise QuadratureError(f'Cannot build quadrature on {type(element).__name__}')


# ----------------------------------------------
# Orthonormal bases
# ----------------------------------------------
def gram_matrix(fa, fb, quad):
    """Frobenius L2 products between the members of two families."""
    if len(fa) == 0 or len(fb) == 0:
        return np.zeros((len(fa), len(fb)))
    va, vb = fa.values(quad.points), fb.values(quad.points)
    return np.einsum('icq,jcq,c,q->ij', va, vb, FROBENIUS[fa.ncomp], quad.weights)


def orthonormalize(family, quad, label='basis', return_transform=False):
    """Return an L2-orthonormal family spanning the same space.

    Householder QR on the weighted values after Jacobi scaling, with a second
    Cholesky pass when the Gram matrix is poorly conditioned.
    """
    n = len(family)
    if n == 0:
        return (family, np.zeros((0, 0))) if return_transform else family
    weights = np.sqrt(quad.weights)[None, None, :] * np.sqrt(FROBENIUS[family.ncomp])[None, :, None]
    a = (family.values(quad.points) * weights).reshape(n, -1).T
    norms = np.linalg.norm(a, axis=0)
    if np.any(norms == 0):
        raise BasisError(f'{label}: a spanning member vanishes on the cell')
    a = a / norms
    r = qr(a, mode='r')[0][:n]
    cond = np.linalg.cond(r) ** 2
    if not np.isfinite(cond) or cond > MAX_GRAM_COND:
        raise BasisError(f'{label}: Gram condition number {cond:.3e} exceeds {MAX_GRAM_COND:.0e}, degenerate cell?')
    t = solve_triangular(r, np.eye(n)).T / norms[None, :]
    basis = family.transform(t)
    if cond > REORTHOGONALIZE_COND:
        logger.debug('%s: Gram condition %.3e, re-orthogonalizing', label, cond)
        g = gram_matrix(basis, basis, quad)
        t = solve_triangular(cholesky(g, lower=True), np.eye(n), lower=True) @ t
        basis = family.transform(t)
    return (basis, t) if return_transform else basis


class EdgeBasis:
    """L2(E)-orthonormal Legendre basis psi_j = sqrt((2j+1)/h_E) L_j(s)."""

    def __init__(self, edge, degree):
        self.edge = edge
        self.length = edge.length
        self.degree = degree

    def __len__(self):
        return max(self.degree + 1, 0)

    @property
    def scale(self):
        j = np.arange(len(self))
        return np.sqrt((2 * j + 1) / self.length)

    @property
    def moment_scale(self):
        """Integral of L_j against psi_j: maps Legendre coefficients to psi-coefficients."""
        j = np.arange(len(self))
        return np.sqrt(self.length / (2 * j + 1))

    def values(self, s):
        s = np.atleast_1d(s)
        if len(self) == 0:
            return np.zeros((0, len(s)))
        return legendre.legvander(s, self.degree).T * self.scale[:, None]


def scalar_monomials(mono, m):
    n = poly_dim(m)
    coeffs = np.zeros((n, 1, mono.size))
    coeffs[np.arange(n), 0, np.arange(n)] = 1.0
    return PolyFamily(mono, coeffs, m)


def vector_family(scalar):
    n, mono = len(scalar), scalar.mono
    coeffs = np.zeros((2 * n, 2, mono.size))
    coeffs[:n, 0] = scalar.coeffs[:, 0]
    coeffs[n:, 1] = scalar.coeffs[:, 0]
    return PolyFamily(mono, coeffs, scalar.degree)


def symmetric_family(scalar):
    n, mono = len(scalar), scalar.mono
    coeffs = np.zeros((3 * n, 3, mono.size))
    coeffs[:n, 0] = scalar.coeffs[:, 0]
    coeffs[n:2 * n, 1] = scalar.coeffs[:, 0] / math.sqrt(2.0)
    coeffs[2 * n:, 2] = scalar.coeffs[:, 0]
    return PolyFamily(mono, coeffs, scalar.degree)


def build_bases(element, degree, kind='scalar', mono=None, quad=None):
    """Orthonormal basis of P^degree on an edge, or of P^degree(T), P^degree(T;R2)
    or P^degree(T;S) on a cell."""
    if isinstance(element, Edge):
        return EdgeBasis(element, degree)
    if mono is None:
        mono = ScaledMonomials(element.center, element.diameter, max(degree, 0))
    if degree > mono.degree:
        raise BasisError(f'Degree {degree} exceeds the monomial degree {mono.degree} of cell {element.id}')
    if quad is None:
        quad = build_quadrature(element, 2 * max(degree, 0) + 2)
    scalar = orthonormalize(scalar_monomials(mono, degree), quad, label=f'cell {element.id} P^{degree}')
    if kind == 'scalar':
        return scalar
    if kind == 'vector':
        return vector_family(scalar)
    if kind == 'sym':
        return symmetric_family(scalar)
    raise BasisError(f'Unknown basis kind {kind!r}')


# ----------------------------------------------
# Holy / cHoly
# ----------------------------------------------
def hessian_potentials(mono, m):
    """Scaled monomials with 2 <= |alpha| <= m + 2, a complement of P^1 in P^{m+2}."""
    first, last = poly_dim(1), poly_dim(m + 2)
    n = max(last - first, 0)
    coeffs = np.zeros((n, 1, mono.size))
    coeffs[np.arange(n), 0, first + np.arange(n)] = 1.0
    return PolyFamily(mono, coeffs, m + 2)


def koszul_family(mono, m):
    """sym((x - x_T)^perp (x) p) for p over the vector monomials of degree m - 1."""
    n = poly_dim(m - 1)
    h = mono.diameter
    coeffs = np.zeros((2 * n, 3, mono.size))
    for i in range(n):
        e = np.zeros(mono.size)
        e[i] = 1.0
        y1e, y2e = e @ mono.y1, e @ mono.y2
        coeffs[i, 0] = -h * y2e
        coeffs[i, 1] = 0.5 * h * y1e
        coeffs[n + i, 1] = -0.5 * h * y2e
        coeffs[n + i, 2] = h * y1e
    return PolyFamily(mono, coeffs, m)


@dataclass(frozen=True, eq=False)
class HolyCholySplit:
    degree: int
    holy: PolyFamily
    holy_potentials: PolyFamily
    choly: PolyFamily
    quad: QuadRule

    def project_holy(self, f):
        return l2_project(self.holy, f, self.quad)

    def project_choly(self, f):
        return l2_project(self.choly, f, self.quad)

    @property
    def dimensions(self):
        return len(self.holy), len(self.choly)


def orthonormal_holy(mono, quad, m, label='Holy'):
    """Orthonormal basis of HESS P^{m+2} and the matching potentials."""
    potentials = hessian_potentials(mono, m)
    if len(potentials) == 0:
        return PolyFamily.empty(mono, 3, m), potentials
    basis, t = orthonormalize(diffop_apply('HESS', potentials), quad, label=label, return_transform=True)
    # the same change of basis carries over to the potentials
    return PolyFamily(mono, basis.coeffs, m), potentials.transform(t)


def split_holy_choly(cell, m, mono=None, quad=None, sym_basis=None):
    if mono is None:
        mono = ScaledMonomials(cell.center, cell.diameter, max(m + 2, 0))
    if m + 2 > mono.degree and m >= -1:
        raise BasisError(f'Holy^{m} needs monomials of degree {m + 2}, have {mono.degree}')
    if quad is None:
        quad = build_quadrature(cell, 2 * max(m + 2, 0) + 2)
    holy, potentials = orthonormal_holy(mono, quad, m, label=f'cell {cell.id} Holy^{m}')
    raw_choly = koszul_family(mono, m)
    choly = orthonormalize(raw_choly, quad, label=f'cell {cell.id} cHoly^{m}') if len(raw_choly) else raw_choly
    if len(holy) + len(choly):
        if sym_basis is None:
            sym_basis = build_bases(cell, m, kind='sym', mono=mono, quad=quad)
        coords = gram_matrix(holy.concat(choly), sym_basis, quad)
        smallest = np.linalg.svd(coords, compute_uv=False).min()
        if smallest < 1e-8:
            raise BasisError(f'cell {cell.id}: Holy^{m} + cHoly^{m} is rank deficient (sigma_min {smallest:.3e})')
    return HolyCholySplit(degree=m, holy=holy, holy_potentials=potentials, choly=choly, quad=quad)


# ----------------------------------------------
# Projections
# ----------------------------------------------
def solve_gram(gram, rhs, label='Gram'):
    if gram.shape[0] == 0:
        return np.zeros((0,) + np.shape(rhs)[1:])
    try:
        return cho_solve(cho_factor(gram), rhs)
    except np.linalg.LinAlgError as e:
        raise DDRError(f'{label}: Gram matrix is not positive definite') from e


def l2_project(basis, f, quad):
    """Coefficients of the L2-orthogonal projection of f onto span(basis)."""
    if isinstance(basis, EdgeBasis):
        psi = basis.values(quad.params)
        vals = _evaluate(f, quad.points).reshape(-1, len(quad.weights))
        gram = (psi * quad.weights) @ psi.T
        rhs = (psi * quad.weights) @ vals.T
        out = solve_gram(gram, rhs, label='edge projection')
        return out[:, 0] if out.ndim == 2 and out.shape[1] == 1 else out
    if len(basis) == 0:
        return np.zeros(0)
    vals = _evaluate(f, quad.points).reshape(basis.ncomp, -1)
    bvals = basis.values(quad.points)
    rhs = np.einsum('icq,cq,c,q->i', bvals, vals, FROBENIUS[basis.ncomp], quad.weights)
    return solve_gram(gram_matrix(basis, basis, quad), rhs, label='cell projection')
