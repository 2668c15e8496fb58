"""Local discrete spaces V_T^k and Sigma_T^l (l = k - 1) and their reconstructions.

Dof layouts on a cell with n vertices (edge i joins local vertices i and i+1):

    V_T^k      [v_T in P^{k-2}(T;R2)]
               [v_E in P^{k-4}(E;R2), component-major] x n edges
               [v_V (2), G_V row-major (4)] x n vertices
    Sigma_T^l  [Holy^{l-3}] [cHoly^l]
               [tau_E in P^{l-2}(E), D_E in P^{l-1}(E)] x n edges
               [tau_V as (11, 12, 22)] x n vertices

Cell blocks are coefficients in L2-orthonormal bases, edge blocks
coefficients in the orthonormal Legendre basis of the globally oriented edge.
Every reconstruction is a matrix acting on these vectors and is built once
per cell by LocalOperatorSet.
"""
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.polynomial import legendre
from scipy.linalg import LinAlgError, eigh, solve

from .errors import DDRError
from .polycalc import (
    FROBENIUS, EdgeBasis, PolyFamily, ScaledMonomials, build_quadrature, diffop_apply, gram_matrix,
    hessian_potentials, koszul_family, l2_project, orthonormal_holy, orthonormalize, poly_dim,
    scalar_monomials, solve_gram, symmetric_family, vector_family,
)

logger = logging.getLogger(__name__)

COMPATIBILITY_TOL = 1e-10
MAX_SYSTEM_COND = 1e13


def pair(a, b):
    """Coefficients c with tau a.b = c . (tau_11, tau_12, tau_22) for symmetric tau."""
    return np.array([a[0] * b[0], a[0] * b[1] + a[1] * b[0], a[1] * b[1]])


def tensor_dot(values, vec):
    """(tau vec) for symmetric values of shape (..., 3, q); returns (..., 2, q)."""
    return np.stack([values[..., 0, :] * vec[0] + values[..., 1, :] * vec[1],
                     values[..., 1, :] * vec[0] + values[..., 2, :] * vec[1]], axis=-2)


# ----------------------------------------------
# Layouts
# ----------------------------------------------
@dataclass(frozen=True)
class VSpaceLayout:
    k: int
    nverts: int

    @property
    def cell_size(self):
        return self.k * (self.k - 1)

    @property
    def edge_moments(self):
        return max(self.k - 3, 0)

    @property
    def dim(self):
        return self.cell_size + 2 * self.edge_moments * self.nverts + 6 * self.nverts

    def cell(self):
        return slice(0, self.cell_size)

    def edge(self, i):
        start = self.cell_size + 2 * self.edge_moments * i
        return slice(start, start + 2 * self.edge_moments)

    def edge_component(self, i, c):
        start = self.edge(i).start + c * self.edge_moments
        return slice(start, start + self.edge_moments)

    def vertex(self, i):
        start = self.cell_size + 2 * self.edge_moments * self.nverts + 6 * i
        return slice(start, start + 6)

    def vertex_value(self, i, c):
        return self.vertex(i).start + c

    def vertex_gradient(self, i, a, b):
        return self.vertex(i).start + 2 + 2 * a + b


@dataclass(frozen=True)
class SigmaSpaceLayout:
    ell: int
    nverts: int

    @property
    def holy_size(self):
        return max(poly_dim(self.ell - 1) - 3, 0)

    @property
    def choly_size(self):
        return self.ell * (self.ell + 1)

    @property
    def interior_size(self):
        return self.holy_size + self.choly_size

    @property
    def edge_size(self):
        return 2 * self.ell - 1

    @property
    def dim(self):
        return self.interior_size + self.edge_size * self.nverts + 3 * self.nverts

    def holy(self):
        return slice(0, self.holy_size)

    def choly(self):
        return slice(self.holy_size, self.interior_size)

    def interior(self):
        return slice(0, self.interior_size)

    def edge(self, i):
        start = self.interior_size + self.edge_size * i
        return slice(start, start + self.edge_size)

    def edge_tau(self, i):
        start = self.edge(i).start
        return slice(start, start + self.ell - 1)

    def edge_d(self, i):
        start = self.edge(i).start + self.ell - 1
        return slice(start, start + self.ell)

    def vertex(self, i):
        start = self.interior_size + self.edge_size * self.nverts + 3 * i
        return slice(start, start + 3)


@dataclass(frozen=True, eq=False)
class DofVector:
    layout: object
    values: np.ndarray

    def __post_init__(self):
        if np.shape(self.values) != (self.layout.dim,):
            raise DDRError(f'Dof vector of length {np.shape(self.values)} does not match layout dimension {self.layout.dim}')

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __len__(self):
        return self.layout.dim


def _values(dofs):
    return np.asarray(getattr(dofs, 'values', dofs), dtype=float)


def _solve(matrix, rhs, label):
    try:
        return solve(matrix, rhs)
    except LinAlgError as e:
        raise DDRError(f'{label}: local system is singular') from e


@dataclass(frozen=True)
class _EdgeData:
    params: np.ndarray
    weights: np.ndarray
    points: np.ndarray
    psi: np.ndarray
    tail: int
    head: int


@dataclass(frozen=True)
class SigmaNorms:
    stabilization: float
    operator_norm: float
    component_norm: float


@dataclass(frozen=True)
class NormEquivalence:
    sample_min: float
    sample_max: float
    lower: float
    upper: float
    samples: int
    seed: int


# ----------------------------------------------
# Local operators
# ----------------------------------------------
class LocalOperatorSet:
    """Bases, quadrature and all local reconstruction matrices of one cell."""

    def __init__(self, mesh, cell, k):
        if k < 3:
            raise DDRError(f'The plates complex needs k >= 3, got k = {k}')
        self.mesh = mesh
        self.cell = mesh.cells[cell] if isinstance(cell, (int, np.integer)) else cell
        self.k = k
        self.ell = k - 1
        self.h = self.cell.diameter
        self.edges = [mesh.edges[e] for e in self.cell.edge_ids]
        self.omegas = np.array(self.cell.orientations, dtype=float)
        self.vertex_points = self.cell.coordinates
        self.nverts = len(self.cell.vertices)
        self.v_layout = VSpaceLayout(k, self.nverts)
        self.s_layout = SigmaSpaceLayout(self.ell, self.nverts)
        self.quad_degree = 2 * self.ell + 6
        self.mono = ScaledMonomials(self.cell.center, self.cell.diameter, k + 1)
        self.quad = build_quadrature(self.cell, self.quad_degree)

        self.edge_bases = [EdgeBasis(e, k) for e in self.edges]
        self.edge_data = []
        for i, edge in enumerate(self.edges):
            q = build_quadrature(edge, self.quad_degree)
            tail = i if edge.tail == self.cell.vertices[i] else (i + 1) % self.nverts
            head = (i + 1) % self.nverts if tail == i else i
            self.edge_data.append(_EdgeData(
                params=q.params, weights=q.weights, points=q.points,
                psi=self.edge_bases[i].values(q.params), tail=tail, head=head,
            ))

    def __repr__(self):
        return f'<LocalOperatorSet(cell={self.cell.id}, k={self.k})>'

    # ----------------------------------------------
    # Bases
    # ----------------------------------------------
    @cached_property
    def _scalar_full(self):
        family = scalar_monomials(self.mono, self.k + 1)
        return orthonormalize(family, self.quad, label=f'cell {self.cell.id} P^{self.k + 1}')

    def scalar(self, m):
        """Orthonormal basis of P^m(T); hierarchical, so lower degrees are leading slices."""
        if m > self.k + 1:
            raise DDRError(f'P^{m} exceeds the monomial degree of cell {self.cell.id}')
        return PolyFamily(self.mono, self._scalar_full.coeffs[:poly_dim(m)], m)

    def vector(self, m):
        return vector_family(self.scalar(m))

    def sym(self, m):
        return symmetric_family(self.scalar(m))

    @cached_property
    def holy(self):
        return orthonormal_holy(self.mono, self.quad, self.ell - 3, label=f'cell {self.cell.id} Holy')[0]

    @cached_property
    def choly(self):
        return orthonormalize(koszul_family(self.mono, self.ell), self.quad, label=f'cell {self.cell.id} cHoly')

    @cached_property
    def choly_potential(self):
        return orthonormalize(koszul_family(self.mono, self.k + 1), self.quad, label=f'cell {self.cell.id} cHoly^{self.k + 1}')

    @cached_property
    def complement(self):
        return hessian_potentials(self.mono, self.ell)

    def sym_field(self, coeffs):
        return self.sym(self.ell).combine(coeffs)

    # ----------------------------------------------
    # Edge helpers
    # ----------------------------------------------
    def _legvander(self, i, degree):
        return legendre.legvander(self.edge_data[i].params, degree)

    def _project_edge(self, i, degree, values):
        basis = EdgeBasis(self.edges[i], degree)
        if len(basis) == 0:
            return np.zeros(0)
        data = self.edge_data[i]
        psi = self.edge_data[i].psi[:len(basis)]
        gram = (psi * data.weights) @ psi.T
        return solve_gram(gram, (psi * data.weights) @ values, label=f'edge {self.edges[i].id}')

    def _vertex_terms(self, i, qvals_at_vertices):
        """omega_TE sum_V omega_EV (tau_V n_E.t_E) q(x_V) as rows over Sigma dofs."""
        edge, data = self.edges[i], self.edge_data[i]
        rows = np.zeros((qvals_at_vertices.shape[0], self.s_layout.dim))
        nt = pair(edge.normal, edge.tangent)
        for local, sign in ((data.tail, -1.0), (data.head, 1.0)):
            rows[:, self.s_layout.vertex(local)] += self.omegas[i] * sign * np.outer(qvals_at_vertices[:, local], nt)
        return rows

    # ----------------------------------------------
    # V_T^k reconstructions
    # ----------------------------------------------
    @cached_property
    def trace(self):
        """Per edge, Legendre coefficients (2, k+1, dim V) of the boundary trace v_ET."""
        k, lay = self.k, self.v_layout
        nmom = lay.edge_moments
        j = np.arange(k + 1)
        slopes = j * (j + 1) / 2.0
        out = []
        for i, edge in enumerate(self.edges):
            h = edge.length
            m = np.zeros((k + 1, k + 1))
            m[np.arange(nmom), np.arange(nmom)] = np.sqrt(h / (2 * np.arange(nmom) + 1))
            m[nmom] = (-1.0) ** j
            m[nmom + 1] = 1.0
            m[nmom + 2] = (2.0 / h) * (-1.0) ** (j + 1) * slopes
            m[nmom + 3] = (2.0 / h) * slopes
            if np.linalg.cond(m) > MAX_SYSTEM_COND:
                raise DDRError(f'Edge {edge.id}: trace interpolation system is singular')
            tail, head = self.edge_data[i].tail, self.edge_data[i].head
            coeffs = np.zeros((2, k + 1, lay.dim))
            for c in range(2):
                sel = np.zeros((k + 1, lay.dim))
                comp = lay.edge_component(i, c)
                sel[np.arange(nmom), np.arange(comp.start, comp.stop)] = 1.0
                sel[nmom, lay.vertex_value(tail, c)] = 1.0
                sel[nmom + 1, lay.vertex_value(head, c)] = 1.0
                for d in range(2):
                    sel[nmom + 2, lay.vertex_gradient(tail, c, d)] = edge.tangent[d]
                    sel[nmom + 3, lay.vertex_gradient(head, c, d)] = edge.tangent[d]
                coeffs[c] = _solve(m, sel, f'edge {edge.id} trace')
            out.append(coeffs)
        return out

    def _trace_values(self, i):
        """v_ET at the quadrature points of edge i, shape (2, q, dim V)."""
        return np.einsum('qj,cjd->cqd', self._legvander(i, self.k), self.trace[i])

    def _boundary_pairing(self, family):
        """sum_E omega_TE int_E v_ET . (tau t_E) for every tau in a symmetric family."""
        rhs = np.zeros((len(family), self.v_layout.dim))
        for i, edge in enumerate(self.edges):
            data = self.edge_data[i]
            tau_t = tensor_dot(family.values(data.points), edge.tangent)
            rhs += self.omegas[i] * np.einsum('icq,cqd,q->id', tau_t, self._trace_values(i), data.weights)
        return rhs

    @cached_property
    def csym(self):
        """Full symmetric curl, coefficients in sym(l)."""
        basis = self.sym(self.ell)
        vrot = diffop_apply('VROT', basis).values(self.quad.points)
        cell_basis = self.vector(self.k - 2).values(self.quad.points)
        rhs = self._boundary_pairing(basis)
        rhs[:, self.v_layout.cell()] -= np.einsum('icq,jcq,q->ij', vrot, cell_basis, self.quad.weights)
        return solve_gram(gram_matrix(basis, basis, self.quad), rhs, label=f'cell {self.cell.id} Csym')

    @cached_property
    def ucsym(self):
        """Discrete symmetric curl V_T^k -> Sigma_T^{k-1}."""
        s, lay, ell = self.s_layout, self.v_layout, self.ell
        basis = self.sym(ell)
        out = np.zeros((s.dim, lay.dim))
        for block, family in ((s.holy(), self.holy), (s.choly(), self.choly)):
            if len(family):
                projector = solve_gram(gram_matrix(family, family, self.quad), gram_matrix(family, basis, self.quad))
                out[block] = projector @ self.csym
        for i, edge in enumerate(self.edges):
            h = edge.length
            scale = self.edge_bases[i].moment_scale
            first = legendre.legder(self.trace[i], m=1, axis=1) * (2.0 / h)
            second = legendre.legder(self.trace[i], m=2, axis=1) * (2.0 / h) ** 2
            # (SYM CURL v) n.n = -d_t v.n and d_t(. n.t) + VDIV . n = -d_t^2 v.t for n = t rotated by +90 degrees
            normal = -np.einsum('c,cjd->jd', edge.normal, first)
            tangent = -np.einsum('c,cjd->jd', edge.tangent, second)
            out[s.edge_tau(i)] = normal[:ell - 1] * scale[:ell - 1, None]
            out[s.edge_d(i)] = tangent[:ell] * scale[:ell, None]
        for i in range(self.nverts):
            block = s.vertex(i).start
            out[block, lay.vertex_gradient(i, 0, 1)] = 1.0
            out[block + 1, lay.vertex_gradient(i, 0, 0)] = -0.5
            out[block + 1, lay.vertex_gradient(i, 1, 1)] = 0.5
            out[block + 2, lay.vertex_gradient(i, 1, 0)] = -1.0
        return out

    @cached_property
    def potential_v(self):
        """Vector potential, coefficients in vector(k)."""
        tests = self.choly_potential
        basis = self.vector(self.k)
        vrot = diffop_apply('VROT', tests).values(self.quad.points)
        system = np.einsum('bcq,icq,q->bi', vrot, basis.values(self.quad.points), self.quad.weights)
        if system.shape[0] != system.shape[1]:
            raise DDRError(f'cell {self.cell.id}: vector potential system is {system.shape}, not square')
        cond = np.linalg.cond(system)
        if not np.isfinite(cond) or cond > MAX_SYSTEM_COND:
            raise DDRError(f'cell {self.cell.id}: VROT on cHoly^{self.k + 1} is singular (cond {cond:.3e})')
        rhs = -gram_matrix(tests, self.sym(self.ell), self.quad) @ self.csym + self._boundary_pairing(tests)
        return _solve(system, rhs, f'cell {self.cell.id} vector potential')

    # ----------------------------------------------
    # Sigma_T^l reconstructions
    # ----------------------------------------------
    @cached_property
    def dd(self):
        """Discrete div-div Sigma_T^l -> P^{l-1}(T), coefficients in scalar(l-1)."""
        s, ell = self.s_layout, self.ell
        phi = self.scalar(ell - 1)
        rows = np.zeros((len(phi), s.dim))
        if len(self.holy):
            hess = diffop_apply('HESS', phi)
            rows[:, s.holy()] = gram_matrix(hess, self.holy, self.quad)
        phi_vertices = phi.values(self.vertex_points)[:, 0]
        for i, edge in enumerate(self.edges):
            data = self.edge_data[i]
            rows -= self._vertex_terms(i, phi_vertices)
            dn = np.einsum('jdq,d->jq', phi.gradients(data.points)[:, 0], edge.normal)
            phi_e = phi.values(data.points)[:, 0]
            rows[:, s.edge_tau(i)] -= self.omegas[i] * (dn * data.weights) @ data.psi[:ell - 1].T
            rows[:, s.edge_d(i)] += self.omegas[i] * (phi_e * data.weights) @ data.psi[:ell].T
        return solve_gram(gram_matrix(phi, phi, self.quad), rows, label=f'cell {self.cell.id} DD')

    @cached_property
    def edge_potentials(self):
        """Per edge, Legendre coefficients (l+1, dim Sigma) of P_Sigma,E."""
        s, ell = self.s_layout, self.ell
        j = np.arange(ell + 1)
        out = []
        for i, edge in enumerate(self.edges):
            data = self.edge_data[i]
            m = np.zeros((ell + 1, ell + 1))
            m[np.arange(ell - 1), np.arange(ell - 1)] = np.sqrt(edge.length / (2 * np.arange(ell - 1) + 1))
            m[ell - 1] = (-1.0) ** j
            m[ell] = 1.0
            sel = np.zeros((ell + 1, s.dim))
            tau = s.edge_tau(i)
            sel[np.arange(ell - 1), np.arange(tau.start, tau.stop)] = 1.0
            nn = pair(edge.normal, edge.normal)
            sel[ell - 1, s.vertex(data.tail)] = nn
            sel[ell, s.vertex(data.head)] = nn
            out.append(_solve(m, sel, f'edge {edge.id} potential'))
        return out

    def _potential_rhs(self, potentials):
        """Right-hand side of the tensor potential for the test functions HESS q."""
        s, ell = self.s_layout, self.ell
        rows = gram_matrix(potentials, self.scalar(ell - 1), self.quad) @ self.dd
        q_vertices = potentials.values(self.vertex_points)[:, 0]
        for i, edge in enumerate(self.edges):
            data = self.edge_data[i]
            rows += self._vertex_terms(i, q_vertices)
            dn = np.einsum('jdq,d->jq', potentials.gradients(data.points)[:, 0], edge.normal)
            q_e = potentials.values(data.points)[:, 0]
            pe_values = self._legvander(i, ell) @ self.edge_potentials[i]
            rows += self.omegas[i] * (dn * data.weights) @ pe_values
            rows[:, s.edge_d(i)] -= self.omegas[i] * (q_e * data.weights) @ data.psi[:ell].T
        return rows

    @cached_property
    def compatibility_residual(self):
        """Largest relative tensor-potential right-hand side over q in P^1(T)."""
        affine = self._potential_rhs(scalar_monomials(self.mono, 1))
        scale = max(np.abs(self._potential_rhs(self.complement)).max(), np.finfo(float).tiny)
        return float(np.abs(affine).max() / scale)

    @cached_property
    def potential_sigma(self):
        """Tensor potential Sigma_T^l -> P^l(T;S), coefficients in sym(l)."""
        s = self.s_layout
        basis = self.sym(self.ell)
        tests = diffop_apply('HESS', self.complement).concat(self.choly)
        system = gram_matrix(tests, basis, self.quad)
        if system.shape[0] != system.shape[1]:
            raise DDRError(f'cell {self.cell.id}: tensor potential system is {system.shape}, not square')
        if self.compatibility_residual > COMPATIBILITY_TOL:
            raise DDRError(f'cell {self.cell.id}: tensor potential right-hand side does not vanish on P^1 '
                           f'(relative {self.compatibility_residual:.3e})')
        rhs_choly = np.zeros((len(self.choly), s.dim))
        rhs_choly[:, s.choly()] = gram_matrix(self.choly, self.choly, self.quad)
        rhs = np.vstack([self._potential_rhs(self.complement), rhs_choly])
        cond = np.linalg.cond(system)
        if not np.isfinite(cond) or cond > MAX_SYSTEM_COND:
            raise DDRError(f'cell {self.cell.id}: tensor potential system is singular (cond {cond:.3e})')
        return _solve(system, rhs, f'cell {self.cell.id} tensor potential')

    @cached_property
    def stabilization(self):
        s, ell, h = self.s_layout, self.ell, self.h
        basis = self.sym(ell)
        pt = self.potential_sigma
        out = np.zeros((s.dim, s.dim))
        for i, edge in enumerate(self.edges):
            data = self.edge_data[i]
            n, t = edge.normal, edge.tangent
            values = np.einsum('icq,id->cqd', basis.values(data.points), pt)
            grads = np.einsum('icxq,id->cxqd', basis.gradients(data.points), pt)
            normal_jump = (np.einsum('c,cqd->qd', pair(n, n), values)
                           - self._legvander(i, ell) @ self.edge_potentials[i])
            vdiv_n = n[0] * (grads[0, 0] + grads[1, 1]) + n[1] * (grads[1, 0] + grads[2, 1])
            d_values = np.zeros((len(data.weights), s.dim))
            d_values[:, s.edge_d(i)] = data.psi[:ell].T
            flux_jump = np.einsum('c,x,cxqd->qd', pair(n, t), t, grads) + vdiv_n - d_values
            out += h * normal_jump.T @ (data.weights[:, None] * normal_jump)
            out += h ** 3 * flux_jump.T @ (data.weights[:, None] * flux_jump)
        vertex_values = basis.values(self.vertex_points)
        for i in range(self.nverts):
            jump = vertex_values[:, :, i].T @ pt
            jump[:, s.vertex(i)] -= np.eye(3)
            out += h ** 2 * jump.T @ (FROBENIUS[3][:, None] * jump)
        return 0.5 * (out + out.T)

    @cached_property
    def potential_mass(self):
        basis = self.sym(self.ell)
        return gram_matrix(basis, basis, self.quad)

    @cached_property
    def norm_matrix(self):
        """Gram matrix of the operator norm: int P:P + s."""
        pt = self.potential_sigma
        out = pt.T @ self.potential_mass @ pt + self.stabilization
        return 0.5 * (out + out.T)

    @cached_property
    def component_norm_matrix(self):
        s, h = self.s_layout, self.h
        out = np.zeros((s.dim, s.dim))
        if len(self.holy):
            out[s.holy(), s.holy()] = gram_matrix(self.holy, self.holy, self.quad)
        out[s.choly(), s.choly()] = gram_matrix(self.choly, self.choly, self.quad)
        for i in range(self.nverts):
            tau, d = s.edge_tau(i), s.edge_d(i)
            out[tau, tau] = h * np.eye(self.ell - 1)
            out[d, d] = h ** 3 * np.eye(self.ell)
            vertex = s.vertex(i)
            out[vertex, vertex] = h ** 2 * np.diag(FROBENIUS[3])
        return out

    # ----------------------------------------------
    # Scalings used for rank decisions
    # ----------------------------------------------
    @cached_property
    def sigma_weights(self):
        return np.sqrt(np.diag(self.component_norm_matrix))

    @cached_property
    def v_weights(self):
        lay, h = self.v_layout, self.h
        w = np.ones(lay.dim)
        w[lay.cell()] = 1.0 / h
        for i in range(self.nverts):
            w[lay.edge(i)] = 1.0 / np.sqrt(h)
            w[lay.vertex(i).start + 2:lay.vertex(i).stop] = h
        return w


# ----------------------------------------------
# Operations
# ----------------------------------------------
def interp_V(ops, v):
    lay = ops.v_layout
    out = np.zeros(lay.dim)
    out[lay.cell()] = l2_project(ops.vector(ops.k - 2), v, ops.quad)
    for i in range(ops.nverts):
        values = v.value(ops.edge_data[i].points)
        for c in range(2):
            out[lay.edge_component(i, c)] = ops._project_edge(i, ops.k - 4, values[c])
    values = v.value(ops.vertex_points)
    gradients = v.gradient(ops.vertex_points)
    for i in range(ops.nverts):
        block = lay.vertex(i)
        out[block.start:block.start + 2] = values[:, i]
        out[block.start + 2:block.stop] = gradients[:, :, i].reshape(-1)
    return DofVector(lay, out)


def edge_normal_derivative_data(edge, value, gradient):
    """tau n.n and d_t(tau n.t) + VDIV tau . n from values (3, q) and gradients (3, 2, q)."""
    n, t = edge.normal, edge.tangent
    nn = pair(n, n) @ value
    vdiv_n = n[0] * (gradient[0, 0] + gradient[1, 1]) + n[1] * (gradient[1, 0] + gradient[2, 1])
    flux = np.einsum('c,x,cxq->q', pair(n, t), t, gradient) + vdiv_n
    return nn, flux


def interp_Sigma(ops, tau):
    s = ops.s_layout
    out = np.zeros(s.dim)
    if len(ops.holy):
        out[s.holy()] = l2_project(ops.holy, tau, ops.quad)
    out[s.choly()] = l2_project(ops.choly, tau, ops.quad)
    for i, edge in enumerate(ops.edges):
        points = ops.edge_data[i].points
        nn, flux = edge_normal_derivative_data(edge, tau.value(points), tau.gradient(points))
        out[s.edge_tau(i)] = ops._project_edge(i, ops.ell - 2, nn)
        out[s.edge_d(i)] = ops._project_edge(i, ops.ell - 1, flux)
    values = tau.value(ops.vertex_points)
    for i in range(ops.nverts):
        out[s.vertex(i)] = values[:, i]
    return DofVector(s, out)


def edge_trace_vET(ops, vdofs):
    """Legendre coefficients (2, k+1) of the trace on each edge."""
    v = _values(vdofs)
    return [np.einsum('cjd,d->cj', coeffs, v) for coeffs in ops.trace]


def full_sym_curl(ops, vdofs):
    return ops.csym @ _values(vdofs)


def discrete_sym_curl(ops, vdofs):
    return DofVector(ops.s_layout, ops.ucsym @ _values(vdofs))


def vector_potential(ops, vdofs):
    return ops.potential_v @ _values(vdofs)


def dd_operator(ops, sdofs):
    return ops.dd @ _values(sdofs)


def edge_potential(ops, sdofs, i):
    return ops.edge_potentials[i] @ _values(sdofs)


def tensor_potential(ops, sdofs):
    return ops.potential_sigma @ _values(sdofs)


def stabilization_and_norms(ops, sdofs, other=None):
    a = _values(sdofs)
    b = a if other is None else _values(other)
    return SigmaNorms(
        stabilization=float(a @ ops.stabilization @ b),
        operator_norm=float(np.sqrt(max(a @ ops.norm_matrix @ a, 0.0))),
        component_norm=float(np.sqrt(max(a @ ops.component_norm_matrix @ a, 0.0))),
    )


def norm_equivalence(ops, samples=200, seed=0):
    """Sampled and exact bounds of component norm / operator norm on one cell."""
    nc, n = ops.component_norm_matrix, ops.norm_matrix
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(np.diag(nc))
    x = rng.uniform(-1.0, 1.0, size=(samples, len(scale))) * scale[None]
    ratios = np.sqrt(np.einsum('si,ij,sj->s', x, nc, x) / np.einsum('si,ij,sj->s', x, n, x))
    try:
        eigenvalues = eigh(nc, n, eigvals_only=True)
    except LinAlgError as e:
        raise DDRError(f'cell {ops.cell.id}: operator norm matrix is not positive definite') from e
    return NormEquivalence(
        sample_min=float(ratios.min()), sample_max=float(ratios.max()),
        lower=float(np.sqrt(eigenvalues[0])), upper=float(np.sqrt(eigenvalues[-1])),
        samples=samples, seed=seed,
    )
