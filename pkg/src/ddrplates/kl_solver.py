"""Mixed Kirchhoff-Love plate solver on Sigma_h^l x P^{l-1}(T_h).

The discrete problem is assembled in the symmetric saddle-point form

    [ A  B^T ] [sigma]   [ g ]
    [ B  0   ] [  u  ] = [-F ]

with A the a_h Gram matrix, B the matrix of b_h, g the boundary load from a
non-homogeneous normal derivative and F the moments of the load against the
orthonormal basis of P^{l-1}(T). Global Sigma dofs are numbered edges first,
then vertices, then the cell moments; the deflection dofs follow.
"""
import logging
import math
import time
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigh
from scipy.sparse.linalg import splu, spsolve

from .ddr_core import LocalOperatorSet, interp_Sigma
from .errors import ConfigError, SolverError
from .polycalc import FROBENIUS, l2_project

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10
COERCIVITY_SLACK = 1e-12
PLATEAU_RATIO = 1.2
EXACT_INF_SUP_LIMIT = 1500


# ----------------------------------------------
# Material
# ----------------------------------------------
@dataclass(frozen=True)
class Material:
    """Constant isotropic plate material; tensors act on (tau_11, tau_12, tau_22)."""
    D: float
    nu: float

    @cached_property
    def stiffness(self):
        d, nu = self.D, self.nu
        return d * np.array([[1.0, 0.0, nu], [0.0, 1.0 - nu, 0.0], [nu, 0.0, 1.0]])

    @cached_property
    def compliance(self):
        d, nu = self.D, self.nu
        c = 1.0 / (d * (1.0 - nu))
        return c * np.array([[1.0 / (1.0 + nu), 0.0, -nu / (1.0 + nu)],
                             [0.0, 1.0, 0.0],
                             [-nu / (1.0 + nu), 0.0, 1.0 / (1.0 + nu)]])

    @property
    def coercivity(self):
        return 1.0 / (self.D * (1.0 + self.nu))

    @property
    def continuity(self):
        return 2.0 / (self.D * (1.0 - self.nu))

    @property
    def gamma(self):
        d, nu = self.D, self.nu
        return (d ** 2 * (1.0 + 1.0 / (d ** 2 * (1.0 - nu) ** 2)) ** 2 + 1.0) ** -0.5

    def apply(self, tau):
        return self.stiffness @ np.asarray(tau, dtype=float)

    def apply_inverse(self, tau):
        return self.compliance @ np.asarray(tau, dtype=float)


def constitutive(D, nu):
    if not (math.isfinite(D) and D > 0):
        raise ConfigError(f'Bending modulus must be positive, got D = {D}')
    if not (math.isfinite(nu) and 0.0 <= nu < 1.0):
        raise ConfigError(f'Poisson ratio must lie in [0, 1), got nu = {nu}')
    return Material(float(D), float(nu))


# ----------------------------------------------
# Dof map
# ----------------------------------------------
class GlobalDofMap:
    def __init__(self, mesh, ell, interior_size, u_size):
        self.mesh = mesh
        self.ell = ell
        self.edge_size = 2 * ell - 1
        self.interior_size = interior_size
        self.u_size = u_size
        self.n_edges = len(mesh.edges)
        used = sorted({v for cell in mesh.cells for v in cell.vertices})
        self.vertex_index = {v: i for i, v in enumerate(used)}
        self.n_vertices = len(used)
        self.n_cells = len(mesh.cells)
        self.n_skeleton = self.edge_size * self.n_edges + 3 * self.n_vertices
        self.n_sigma = self.n_skeleton + interior_size * self.n_cells
        self.n_u = u_size * self.n_cells
        self.n_total = self.n_sigma + self.n_u
        self.n_retained = self.n_skeleton + self.n_u

    def edge(self, e):
        return np.arange(e * self.edge_size, (e + 1) * self.edge_size)

    def vertex(self, v):
        start = self.edge_size * self.n_edges + 3 * self.vertex_index[v]
        return np.arange(start, start + 3)

    def interior(self, c):
        start = self.n_skeleton + self.interior_size * c
        return np.arange(start, start + self.interior_size)

    def u(self, c):
        start = self.n_sigma + self.u_size * c
        return np.arange(start, start + self.u_size)

    def sigma_dofs(self, cell):
        """Global index of every local Sigma_T dof, in the local layout order."""
        parts = [self.interior(cell.id)]
        parts.extend(self.edge(e) for e in cell.edge_ids)
        parts.extend(self.vertex(v) for v in cell.vertices)
        return np.concatenate(parts)

    def retained(self, indices):
        """Position of skeleton and deflection dofs in the condensed system."""
        indices = np.asarray(indices)
        return np.where(indices < self.n_skeleton, indices, indices - (self.n_sigma - self.n_skeleton))


# ----------------------------------------------
# Assembly
# ----------------------------------------------
@dataclass(frozen=True, eq=False)
class LocalContribution:
    cell_id: int
    a: np.ndarray
    b: np.ndarray
    g: np.ndarray
    f: np.ndarray
    norm: np.ndarray
    interior: slice


def compliance_mass(ops, material):
    basis = ops.sym(ops.ell)
    values = basis.values(ops.quad.points)
    weighted = np.einsum('cd,jdq->jcq', material.compliance, values) * FROBENIUS[3][None, :, None]
    return np.einsum('icq,jcq,q->ij', values, weighted, ops.quad.weights)


def local_contribution(ops, material, load=None, boundary_datum=None):
    pt = ops.potential_sigma
    a = pt.T @ compliance_mass(ops, material) @ pt + material.coercivity * ops.stabilization
    a = 0.5 * (a + a.T)
    phi = ops.scalar(ops.ell - 1)
    f = np.zeros(len(phi))
    if load is not None:
        f = (phi.values(ops.quad.points)[:, 0] * ops.quad.weights) @ load(ops.quad.points)
    g = np.zeros(ops.s_layout.dim)
    if boundary_datum is not None:
        for i, edge in enumerate(ops.edges):
            if not edge.is_boundary:
                continue
            data = ops.edge_data[i]
            datum = boundary_datum(data.points, ops.omegas[i] * edge.normal)
            g -= (datum * data.weights) @ (ops._legvander(i, ops.ell) @ ops.edge_potentials[i])
    return LocalContribution(cell_id=ops.cell.id, a=a, b=ops.dd, g=g, f=f, norm=ops.norm_matrix,
                             interior=ops.s_layout.interior())


def _build_local(mesh, cell_id, ell, material, solution):
    ops = LocalOperatorSet(mesh, cell_id, ell + 1)
    load = solution.load if solution is not None else None
    datum = solution.normal_derivative if solution is not None else None
    return ops, local_contribution(ops, material, load, datum)


class GlobalSystem:
    def __init__(self, mesh, ell, material, operators, contributions):
        self.mesh = mesh
        self.ell = ell
        self.material = material
        self.operators = operators
        self.contributions = contributions
        first = operators[0]
        self.dofmap = GlobalDofMap(mesh, ell, first.s_layout.interior_size, len(first.scalar(ell - 1)))

    def cell_dofs(self, cell_id):
        cell = self.mesh.cells[cell_id]
        return self.dofmap.sigma_dofs(cell), self.dofmap.u(cell_id)

    def _triplets(self, which):
        rows, cols, vals = [], [], []
        for contrib in self.contributions:
            s, u = self.cell_dofs(contrib.cell_id)
            blocks = {
                'full': ((s, s, contrib.a), (u, s, contrib.b), (s, u, contrib.b.T)),
                'a': ((s, s, contrib.a),),
                'b': ((u - self.dofmap.n_sigma, s, contrib.b),),
                'norm': ((s, s, contrib.norm),),
            }[which]
            for r, c, m in blocks:
                rows.append(np.repeat(r, len(c)))
                cols.append(np.tile(c, len(r)))
                vals.append(m.reshape(-1))
        return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)

    def _assemble(self, which, shape):
        rows, cols, vals = self._triplets(which)
        return sparse.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()

    @cached_property
    def matrix(self):
        n = self.dofmap.n_total
        return self._assemble('full', (n, n))

    @cached_property
    def a_matrix(self):
        n = self.dofmap.n_sigma
        return self._assemble('a', (n, n))

    @cached_property
    def b_matrix(self):
        return self._assemble('b', (self.dofmap.n_u, self.dofmap.n_sigma))

    @cached_property
    def norm_matrix(self):
        n = self.dofmap.n_sigma
        return self._assemble('norm', (n, n))

    @cached_property
    def rhs(self):
        out = np.zeros(self.dofmap.n_total)
        for contrib in self.contributions:
            s, u = self.cell_dofs(contrib.cell_id)
            np.add.at(out, s, contrib.g)
            out[u] -= contrib.f
        return out

    def residual(self, x):
        r = self.matrix @ x - self.rhs
        scale = max(np.linalg.norm(self.rhs), np.linalg.norm(self.matrix @ x), np.finfo(float).tiny)
        return float(np.linalg.norm(r) / scale)


def assemble_global(mesh, ell, material, solution=None):
    """Local operators and contributions for every cell, merged in cell order."""
    if ell < 2:
        raise ConfigError(f'Polynomial degree must satisfy l >= 2, got {ell}')
    results = [_build_local(mesh, cell.id, ell, material, solution) for cell in mesh.cells]
    operators = [r[0] for r in results]
    contributions = [r[1] for r in results]
    system = GlobalSystem(mesh, ell, material, operators, contributions)
    logger.info('%s: assembled l=%d, %d Sigma dofs, %d deflection dofs', mesh.label, ell,
                system.dofmap.n_sigma, system.dofmap.n_u)
    return system


# ----------------------------------------------
# Solves
# ----------------------------------------------
@dataclass(frozen=True, eq=False)
class SolveResult:
    sigma: np.ndarray
    u: np.ndarray
    residual: float
    ndof_retained: int
    condensed: bool
    solve_seconds: float

    @property
    def solution(self):
        return np.concatenate([self.sigma, self.u])


def _check_finite(x, what):
    if not np.all(np.isfinite(x)):
        raise SolverError(f'{what}: sparse direct solve produced non-finite values (singular system?)')


def solve_condensed(system):
    start = time.perf_counter()
    dofmap = system.dofmap
    rows, cols, vals = [], [], []
    rhs = np.zeros(dofmap.n_retained)
    eliminated = []
    for contrib in system.contributions:
        s, u = system.cell_dofs(contrib.cell_id)
        k_local = np.block([[contrib.a, contrib.b.T], [contrib.b, np.zeros((len(u), len(u)))]])
        f_local = np.concatenate([contrib.g, -contrib.f])
        glob = np.concatenate([s, u])
        inner = np.arange(contrib.interior.start, contrib.interior.stop)
        outer = np.setdiff1d(np.arange(len(glob)), inner)
        try:
            factor = cho_factor(k_local[np.ix_(inner, inner)])
        except LinAlgError as e:
            raise SolverError(f'cell {contrib.cell_id}: interior block of a_h is not positive definite') from e
        coupling = cho_solve(factor, k_local[np.ix_(inner, outer)])
        inner_rhs = cho_solve(factor, f_local[inner])
        schur = k_local[np.ix_(outer, outer)] - k_local[np.ix_(outer, inner)] @ coupling
        index = dofmap.retained(glob[outer])
        rows.append(np.repeat(index, len(index)))
        cols.append(np.tile(index, len(index)))
        vals.append(schur.reshape(-1))
        np.add.at(rhs, index, f_local[outer] - k_local[np.ix_(outer, inner)] @ inner_rhs)
        eliminated.append((glob[inner], glob[outer], coupling, inner_rhs))
    matrix = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                               shape=(dofmap.n_retained, dofmap.n_retained)).tocsr()
    logger.debug('condensed system: %d retained of %d dofs', dofmap.n_retained, dofmap.n_total)
    retained = np.atleast_1d(spsolve(matrix.tocsc(), rhs))
    _check_finite(retained, 'condensed system')

    x = np.zeros(dofmap.n_total)
    skeleton = np.arange(dofmap.n_skeleton)
    x[skeleton] = retained[:dofmap.n_skeleton]
    x[dofmap.n_sigma:] = retained[dofmap.n_skeleton:]
    for inner, outer, coupling, inner_rhs in eliminated:
        x[inner] = inner_rhs - coupling @ x[outer]
    return _result(system, x, condensed=True, start=start)


def solve_uncondensed(system):
    start = time.perf_counter()
    x = np.atleast_1d(spsolve(system.matrix.tocsc(), system.rhs))
    _check_finite(x, 'saddle-point system')
    return _result(system, x, condensed=False, start=start)


def _result(system, x, condensed, start):
    residual = system.residual(x)
    elapsed = time.perf_counter() - start
    if not residual <= RESIDUAL_TOL:
        raise SolverError(f'{system.mesh.label}: relative residual {residual:.3e} above {RESIDUAL_TOL:.0e}')
    logger.info('%s: solved in %.3fs (%s), residual %.3e', system.mesh.label, elapsed,
                'condensed' if condensed else 'full', residual)
    n_sigma = system.dofmap.n_sigma
    return SolveResult(sigma=x[:n_sigma], u=x[n_sigma:], residual=residual,
                       ndof_retained=system.dofmap.n_retained if condensed else system.dofmap.n_total,
                       condensed=condensed, solve_seconds=elapsed)


# ----------------------------------------------
# Errors and diagnostics
# ----------------------------------------------
@dataclass(frozen=True)
class ErrorReport:
    mesh: str
    h: float
    ndof_retained: int
    err_sigma: float
    err_u: float
    gamma: float
    solve_seconds: float
    residual: float

    @property
    def err_total(self):
        return math.hypot(self.err_sigma, self.err_u)

    def lines(self):
        return [
            f'mesh            {self.mesh}',
            f'h               {self.h:.6e}',
            f'retained dofs   {self.ndof_retained}',
            f'error Sigma x L {self.err_total:.6e}',
            f'  Sigma part    {self.err_sigma:.6e}',
            f'  L2 part       {self.err_u:.6e}',
            f'gamma           {self.gamma:.6f}',
            f'residual        {self.residual:.3e}',
        ]


def sigma_difference(system, sigma_h, sigma):
    """Per cell, I_Sigma sigma - sigma_h in the local layout."""
    out = []
    for ops in system.operators:
        s, _ = system.cell_dofs(ops.cell.id)
        out.append(interp_Sigma(ops, sigma).values - sigma_h[s])
    return out


def compute_errors(system, result, solution):
    err_sigma2, err_u2 = 0.0, 0.0
    for ops, diff in zip(system.operators, sigma_difference(system, result.sigma, solution.sigma)):
        err_sigma2 += float(diff @ ops.norm_matrix @ diff)
        _, u = system.cell_dofs(ops.cell.id)
        projected = l2_project(ops.scalar(ops.ell - 1), solution.u_field, ops.quad)
        err_u2 += float(np.sum((projected - result.u[u - system.dofmap.n_sigma]) ** 2))
    return ErrorReport(
        mesh=system.mesh.label, h=system.mesh.h, ndof_retained=result.ndof_retained,
        err_sigma=math.sqrt(max(err_sigma2, 0.0)), err_u=math.sqrt(err_u2),
        gamma=system.material.gamma, solve_seconds=result.solve_seconds, residual=result.residual,
    )


@dataclass(frozen=True)
class InfSupReport:
    sampled: float
    exact: float
    samples: int
    seed: int


def inf_sup_estimate(system, samples=20, seed=0, exact_limit=EXACT_INF_SUP_LIMIT):
    """sup_tau b_h(tau, v)/(||tau||_Sigma ||v||), minimized over samples and, on small meshes, exactly."""
    rng = np.random.default_rng(seed)
    b = system.b_matrix
    try:
        lu = splu(system.norm_matrix.tocsc())
    except RuntimeError as e:
        raise SolverError(f'{system.mesh.label}: Sigma norm matrix is singular ({e})') from e
    values = []
    for _ in range(samples):
        v = rng.uniform(-1.0, 1.0, system.dofmap.n_u)
        w = lu.solve(b.T @ v)
        values.append(math.sqrt(max(float(v @ (b @ w)), 0.0)) / np.linalg.norm(v))
    exact = math.nan
    if system.dofmap.n_sigma <= exact_limit:
        schur = b @ lu.solve(b.T.toarray())
        try:
            smallest = eigh(0.5 * (schur + schur.T), eigvals_only=True)[0]
        except LinAlgError as e:
            raise SolverError(f'{system.mesh.label}: inf-sup eigenvalue problem did not converge') from e
        exact = math.sqrt(max(float(smallest), 0.0))
    return InfSupReport(sampled=float(min(values)), exact=exact, samples=samples, seed=seed)


@dataclass(frozen=True)
class CoercivityReport:
    violations: int
    min_ratio: float
    samples: int
    seed: int


def coercivity_witness(system, samples=100, seed=0):
    """Count samples with a_h(tau, tau) D(1+nu) < ||tau||^2_Sigma,h."""
    rng = np.random.default_rng(seed)
    factor = 1.0 / system.material.coercivity
    violations, ratios = 0, []
    for _ in range(samples):
        tau = rng.uniform(-1.0, 1.0, system.dofmap.n_sigma)
        energy = float(tau @ (system.a_matrix @ tau)) * factor
        norm = float(tau @ (system.norm_matrix @ tau))
        ratios.append(energy / norm)
        if energy < norm * (1.0 - COERCIVITY_SLACK):
            violations += 1
    return CoercivityReport(violations=violations, min_ratio=float(min(ratios)), samples=samples, seed=seed)


# ----------------------------------------------
# Rates
# ----------------------------------------------
@dataclass(frozen=True)
class RateFit:
    slope: float
    used: int
    rates: tuple


def pairwise_rates(h, err):
    rates = [math.nan]
    for i in range(1, len(h)):
        if err[i] > 0 and err[i - 1] > 0 and h[i] != h[i - 1]:
            rates.append(math.log(err[i - 1] / err[i]) / math.log(h[i - 1] / h[i]))
        else:
            rates.append(math.nan)
    return tuple(rates)


def fit_rate(h, err, plateau=PLATEAU_RATIO):
    """Least-squares slope of log err against log h over the refinements before the plateau."""
    h, err = np.asarray(h, dtype=float), np.asarray(err, dtype=float)
    used = 1
    for i in range(1, len(h)):
        if err[i] <= 0 or err[i - 1] / err[i] < plateau:
            break
        used = i + 1
    if used < 2:
        logger.warning('rate fit: fewer than two refinements before the plateau')
        return RateFit(slope=math.nan, used=used, rates=pairwise_rates(h, err))
    slope = float(np.polyfit(np.log(h[:used]), np.log(err[:used]), 1)[0])
    return RateFit(slope=slope, used=used, rates=pairwise_rates(h, err))
