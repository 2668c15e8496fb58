"""Numerical certification of the local plates complex.

For a cell and a degree k the complex

    RT1 --I_V--> V_T^k --uCsym--> Sigma_T^{k-1} --DD--> P^{k-2}(T) --> 0

is exact. check_exactness verifies it with singular value decompositions of
the assembled operator matrices:

    a  uCsym vanishes on I_V RT1
    b  DD is onto P^{k-2}(T)
    c  DD uCsym = 0
    d  rank uCsym = dim V - 3
    e  dim Ker DD = dim Sigma - dim P^{k-2}(T) = rank uCsym
    f  DD I_Sigma = pi DIV VDIV on random polynomial tensors
    g  P_Sigma uCsym = Csym on the canonical basis of V_T^k

Ranks are decided on matrices scaled by the dof weights of the component
norm, so that they do not change when a cell is translated, rotated or scaled.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from .ddr_core import (
    LocalOperatorSet, interp_Sigma, interp_V, pair,
)
from .polycalc import FunctionField, diffop_apply, l2_project, poly_dim

logger = logging.getLogger(__name__)

RANK_TOL = 1e-9
IDENTITY_TOL = 1e-10
FAULT_SIZE = 1e-3
CHECK_NAMES = {
    'a': 'rt1_kernel',
    'b': 'dd_surjective',
    'c': 'dd_ucsym_zero',
    'd': 'ucsym_rank',
    'e': 'dd_kernel_dim',
    'f': 'commutation',
    'g': 'potential_curl',
}


def relative_residual(a, b, scale=0.0):
    """||a - b|| relative to max(||b||, scale)."""
    diff = np.linalg.norm(np.asarray(a) - np.asarray(b))
    denom = max(np.linalg.norm(b), scale, np.finfo(float).tiny)
    return float(diff / denom)


def rt1_fields():
    """Basis (1, 0), (0, 1), x of RT1."""
    return [
        FunctionField(2, lambda p: np.stack([np.ones(len(p)), np.zeros(len(p))]),
                      lambda p: np.zeros((2, 2, len(p))), name='RT1 e1'),
        FunctionField(2, lambda p: np.stack([np.zeros(len(p)), np.ones(len(p))]),
                      lambda p: np.zeros((2, 2, len(p))), name='RT1 e2'),
        FunctionField(2, lambda p: p.T.copy(),
                      lambda p: np.einsum('ab,q->abq', np.eye(2), np.ones(len(p))), name='RT1 x'),
    ]


def _rank(singular_values, tol):
    if len(singular_values) == 0 or singular_values[0] == 0.0:
        return 0, np.inf
    rank = int(np.count_nonzero(singular_values > tol * singular_values[0]))
    if rank == len(singular_values):
        return rank, np.inf
    if rank == 0:
        return 0, np.inf
    below = singular_values[rank]
    return rank, float(singular_values[rank - 1] / below) if below > 0 else np.inf


# ----------------------------------------------
# Matrices
# ----------------------------------------------
@dataclass(frozen=True, eq=False)
class ComplexMatrices:
    cell_id: int
    k: int
    ucsym: np.ndarray
    dd: np.ndarray
    rt1: np.ndarray
    operators: LocalOperatorSet
    fault: bool = False

    @property
    def dim_v(self):
        return self.ucsym.shape[1]

    @property
    def dim_sigma(self):
        return self.ucsym.shape[0]

    @property
    def dim_p(self):
        return self.dd.shape[0]

    def scaled(self):
        """(uCsym, DD, I_V RT1) in the weighted dof coordinates."""
        ops = self.operators
        sw, vw = ops.sigma_weights, ops.v_weights
        return (sw[:, None] * self.ucsym / vw[None, :],
                self.dd / sw[None, :],
                vw[:, None] * self.rt1)


def assemble_local_matrices(mesh, cell, k, operators=None, inject_fault=False, seed=0):
    ops = operators if operators is not None else LocalOperatorSet(mesh, cell, k)
    rt1 = np.column_stack([interp_V(ops, w).values for w in rt1_fields()])
    dd = ops.dd
    if inject_fault:
        # rank-one change along the image of uCsym: DD stays onto, DD uCsym does not vanish
        rng = np.random.default_rng(seed)
        sw = ops.sigma_weights
        direction = (sw[:, None] * ops.ucsym / ops.v_weights[None, :]) @ rng.uniform(-1.0, 1.0, ops.v_layout.dim)
        direction /= np.linalg.norm(direction)
        scaled_norm = np.linalg.norm(dd / sw[None, :], 2)
        dd = dd + FAULT_SIZE * scaled_norm * np.outer(np.eye(len(dd))[0], direction * sw)
        logger.warning('cell %d, k=%d: DD matrix perturbed for fault injection', ops.cell.id, k)
    return ComplexMatrices(cell_id=ops.cell.id, k=k, ucsym=ops.ucsym, dd=dd, rt1=rt1,
                           operators=ops, fault=inject_fault)


# ----------------------------------------------
# Certificates
# ----------------------------------------------
@dataclass(frozen=True)
class CheckResult:
    key: str
    residual: float
    tolerance: float
    passed: bool
    rank: int = None
    expected: int = None
    gap: float = None

    @property
    def name(self):
        return CHECK_NAMES[self.key]

    def line(self, prefix=''):
        rank = '-' if self.rank is None else str(self.rank)
        expected = '-' if self.expected is None else str(self.expected)
        gap = '-' if self.gap is None else f'{self.gap:.3e}'
        return (f'{prefix}{self.key}_{self.name} residual={self.residual:.3e} rank={rank} expected={expected} '
                f'gap={gap} pass={"yes" if self.passed else "no"}')


@dataclass(frozen=True)
class ExactnessCertificate:
    mesh: str
    cell_id: int
    k: int
    seed: int
    checks: tuple = field(default_factory=tuple)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    @property
    def first_failure(self):
        for check in self.checks:
            if not check.passed:
                return check
        return None

    def check(self, key):
        return next(c for c in self.checks if c.key == key)

    def lines(self):
        prefix = f'cell={self.cell_id} k={self.k} '
        out = [f'# mesh={self.mesh} cell={self.cell_id} k={self.k} seed={self.seed} '
               f'pass={"yes" if self.passed else "no"}']
        out.extend(c.line(prefix) for c in self.checks)
        return out

    def report(self):
        return '\n'.join(self.lines()) + '\n'


def check_exactness(matrices, tol=RANK_TOL, identity_tol=IDENTITY_TOL, samples=20, seed=0, mesh_label='mesh',
                    consistency=None):
    """Runs checks a..g on one cell. A precomputed consistency report is reused for f and g."""
    uc, dd, rt1 = matrices.scaled()
    dim_v, dim_s, dim_p = matrices.dim_v, matrices.dim_sigma, matrices.dim_p
    uc_norm = np.linalg.norm(uc, 2)
    dd_norm = np.linalg.norm(dd, 2)
    checks = []

    images = uc @ rt1
    residual = max(np.linalg.norm(images[:, j]) / (uc_norm * np.linalg.norm(rt1[:, j])) for j in range(rt1.shape[1]))
    checks.append(CheckResult('a', float(residual), tol, bool(residual <= tol)))

    dd_sv = np.linalg.svd(dd, compute_uv=False)
    dd_rank, dd_gap = _rank(dd_sv, tol)
    checks.append(CheckResult('b', float(dd_sv[-1] / dd_sv[0]) if dd_sv[0] > 0 else 0.0, tol,
                              dd_rank == dim_p, rank=dd_rank, expected=dim_p, gap=dd_gap))

    residual = float(np.linalg.norm(dd @ uc, 2) / max(dd_norm * uc_norm, np.finfo(float).tiny))
    checks.append(CheckResult('c', residual, tol, residual <= tol))

    uc_sv = np.linalg.svd(uc, compute_uv=False)
    uc_rank, uc_gap = _rank(uc_sv, tol)
    expected = dim_v - 3
    checks.append(CheckResult('d', float(uc_sv[expected] / uc_sv[0]) if len(uc_sv) > expected else 0.0, tol,
                              uc_rank == expected, rank=uc_rank, expected=expected, gap=uc_gap))

    kernel_dim = dim_s - dd_rank
    checks.append(CheckResult('e', float(abs(kernel_dim - uc_rank)), 0.0,
                              kernel_dim == dim_s - dim_p and kernel_dim == uc_rank,
                              rank=kernel_dim, expected=dim_s - dim_p))

    report = consistency
    if report is None:
        report = check_commutation_consistency(matrices.operators, samples=samples, seed=seed, dd=matrices.dd)
    for key, name in (('f', 'commutation'), ('g', 'potential_curl')):
        value = report.residuals[name]
        checks.append(CheckResult(key, value, identity_tol, value <= identity_tol))

    certificate = ExactnessCertificate(mesh=mesh_label, cell_id=matrices.cell_id, k=matrices.k, seed=seed,
                                       checks=tuple(checks))
    if certificate.passed:
        logger.info('cell %d, k=%d: exactness certified (rank uCsym %d)', matrices.cell_id, matrices.k, uc_rank)
    else:
        logger.warning('cell %d, k=%d: check %s failed', matrices.cell_id, matrices.k, certificate.first_failure.key)
    return certificate


# ----------------------------------------------
# Identities
# ----------------------------------------------
@dataclass(frozen=True)
class ConsistencyReport:
    cell_id: int
    k: int
    samples: int
    seed: int
    residuals: dict

    @property
    def max_residual(self):
        return max(self.residuals.values())

    def passed(self, tol=IDENTITY_TOL):
        return self.max_residual <= tol

    def lines(self):
        return [f'cell={self.cell_id} k={self.k} {name} residual={value:.3e}'
                for name, value in self.residuals.items()]


def check_commutation_consistency(ops, samples=20, seed=0, dd=None):
    """Largest relative residuals of the commutation and consistency identities on random samples."""
    rng = np.random.default_rng(seed)
    dd = ops.dd if dd is None else dd
    k, ell = ops.k, ops.ell
    residuals = dict.fromkeys(('commutation', 'potential_curl', 'sym_curl', 'vector_potential',
                               'tensor_potential', 'edge_potential', 'edge_trace', 'stabilization'), 0.0)

    def keep(name, value):
        residuals[name] = max(residuals[name], value)

    high = ops.sym(ell + 2)
    target = ops.scalar(ell - 1)
    sym_basis = ops.sym(ell)
    vec_basis = ops.vector(k)
    stab_norm = np.linalg.norm(ops.stabilization, 2)
    for _ in range(samples):
        coeffs = rng.uniform(-1.0, 1.0, len(high))
        tau = high.combine(coeffs)
        projected = l2_project(target, diffop_apply('DIVDIV', high).combine(coeffs), ops.quad)
        dofs = interp_Sigma(ops, tau).values
        keep('commutation', relative_residual(dd @ dofs, projected, np.linalg.norm(dd, 2) * np.linalg.norm(dofs)))

        coeffs = rng.uniform(-1.0, 1.0, len(sym_basis))
        tau = sym_basis.combine(coeffs)
        dofs = interp_Sigma(ops, tau).values
        keep('tensor_potential', relative_residual(ops.potential_sigma @ dofs, coeffs))
        keep('stabilization', float(np.linalg.norm(ops.stabilization @ dofs)
                                    / max(stab_norm * np.linalg.norm(dofs), np.finfo(float).tiny)))
        for i, edge in enumerate(ops.edges):
            data = ops.edge_data[i]
            exact = pair(edge.normal, edge.normal) @ tau.value(data.points)
            recovered = ops._legvander(i, ell) @ (ops.edge_potentials[i] @ dofs)
            keep('edge_potential', relative_residual(recovered, exact, np.linalg.norm(dofs)))

        coeffs = rng.uniform(-1.0, 1.0, len(vec_basis))
        v = vec_basis.combine(coeffs)
        dofs = interp_V(ops, v).values
        keep('vector_potential', relative_residual(ops.potential_v @ dofs, coeffs))
        curl = l2_project(sym_basis, diffop_apply('SYMCURL', vec_basis).combine(coeffs), ops.quad)
        keep('sym_curl', relative_residual(ops.csym @ dofs, curl, np.linalg.norm(coeffs) / ops.h))
        for i in range(ops.nverts):
            data = ops.edge_data[i]
            trace = ops._trace_values(i) @ dofs
            keep('edge_trace', relative_residual(trace, v.value(data.points), np.linalg.norm(coeffs)))

    # the potential-curl link is linear, so the canonical basis of V_T^k covers every v
    keep('potential_curl', relative_residual(ops.potential_sigma @ ops.ucsym, ops.csym))
    return ConsistencyReport(cell_id=ops.cell.id, k=k, samples=samples, seed=seed, residuals=residuals)


def expected_dimensions(k, nverts):
    """(dim V_T^k, dim Sigma_T^{k-1}, dim P^{k-2}) from the closed forms."""
    ell = k - 1
    return (k * (k - 1) + 2 * k * nverts,
            3 * ell * (ell + 1) // 2 + 2 * (ell + 1) * nverts - 3,
            poly_dim(k - 2))
