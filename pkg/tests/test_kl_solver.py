import functools
import math

import numpy as np
import pytest

from ddrplates import kl_solver
from ddrplates.errors import ConfigError, SolverError
from ddrplates.kl_solver import (
    assemble_global, coercivity_witness, compute_errors, constitutive, fit_rate, inf_sup_estimate,
    pairwise_rates, solve_condensed, solve_uncondensed,
)
from ddrplates.mesh import load_or_generate_mesh
from ddrplates.solutions import TrigSolution, ZeroSolution, get_solution


def _solve(source, ell, solution='trig', D=1.0, nu=0.0, condensed=True):
    material = constitutive(D, nu)
    exact = get_solution(solution, material)
    system = assemble_global(load_or_generate_mesh(source), ell, material, exact)
    result = solve_condensed(system) if condensed else solve_uncondensed(system)
    return system, result, compute_errors(system, result, exact)


def test_gamma_of_unit_material():
    assert constitutive(1.0, 0.0).gamma == pytest.approx(5 ** -0.5)


@pytest.mark.parametrize('D, nu', [(1.0, 0.0), (2.5, 0.3), (10.0, 0.45)])
def test_compliance_inverts_stiffness(D, nu):
    material = constitutive(D, nu)
    np.testing.assert_allclose(material.stiffness @ material.compliance, np.eye(3), atol=1e-14)
    assert material.coercivity <= material.continuity


@pytest.mark.parametrize('D, nu', [(0.0, 0.3), (-1.0, 0.3), (1.0, 1.0), (1.0, -0.1), (math.nan, 0.2)])
def test_bad_material(D, nu):
    with pytest.raises(ConfigError):
        constitutive(D, nu)


def test_manufactured_moment_and_load():
    solution = TrigSolution(constitutive(1.0, 0.0))
    np.testing.assert_allclose(solution.sigma.value(np.array([[0.0, 0.0]]))[:, 0], [0.0, -math.pi ** 2, 0.0],
                               atol=1e-14)
    assert solution.load(np.array([[0.5, 0.5]]))[0] == pytest.approx(4 * math.pi ** 4)


def test_manufactured_load_matches_divdiv():
    material = constitutive(2.0, 0.25)
    solution = TrigSolution(material)
    point = np.array([[0.3, 0.7]])
    hessian = solution.sigma.hessian(point)[:, :, :, 0]
    divdiv = hessian[0, 0, 0] + 2 * hessian[1, 0, 1] + hessian[2, 1, 1]
    assert -divdiv == pytest.approx(solution.load(point)[0], rel=1e-12)


def test_unknown_solution():
    with pytest.raises(ConfigError, match='parabola'):
        get_solution('parabola', constitutive(1.0, 0.0))


def test_degree_below_two():
    with pytest.raises(ConfigError):
        assemble_global(load_or_generate_mesh('tri 2'), 1, constitutive(1.0, 0.0), ZeroSolution(None))


def test_zero_solution():
    system, result, report = _solve('tri 2', 2, solution='zero')
    assert report.err_total < 1e-10
    assert not result.sigma.any() and not result.u.any()
    assert report.ndof_retained == system.dofmap.n_retained


@pytest.mark.parametrize('source', ['tri 2', 'tri 4', 'kershaw 3 0.5'])
def test_condensation_matches_full_solve(source):
    system, condensed, _ = _solve(source, 2)
    full = solve_uncondensed(system)
    scale = np.linalg.norm(full.solution)
    assert np.linalg.norm(condensed.solution - full.solution) < 1e-9 * scale
    assert condensed.residual < 1e-10
    assert full.residual < 1e-10
    assert condensed.ndof_retained < full.ndof_retained == system.dofmap.n_total


@pytest.mark.parametrize('D', [1.0, 10.0])
@pytest.mark.parametrize('nu', [0.1, 0.3])
def test_coercivity(D, nu):
    material = constitutive(D, nu)
    system = assemble_global(load_or_generate_mesh('tri 2'), 2, material, TrigSolution(material))
    witness = coercivity_witness(system, samples=50, seed=1)
    assert witness.violations == 0
    assert witness.min_ratio >= 1.0 - 1e-12


def test_inf_sup_is_positive():
    system, _, _ = _solve('tri 2', 2)
    report = inf_sup_estimate(system, samples=10)
    assert report.exact > 0
    assert report.sampled >= report.exact * (1 - 1e-10)


def test_pairwise_rates():
    rates = pairwise_rates([1.0, 0.5, 0.25], [1.0, 0.125, 1.0 / 64])
    assert math.isnan(rates[0])
    assert rates[1:] == pytest.approx((3.0, 3.0))


def test_fit_rate_stops_at_plateau():
    h = [0.4, 0.2, 0.1, 0.05]
    err = [6.4e-2, 8e-3, 1e-3, 9e-4]
    fit = fit_rate(h, err)
    assert fit.used == 3
    assert fit.slope == pytest.approx(3.0)
    assert fit.rates[3] < 1.0


def test_fit_rate_without_refinement():
    fit = fit_rate([0.5, 0.25], [1.0, 1.0])
    assert math.isnan(fit.slope)
    assert fit.used == 1


def test_coarse_errors_decrease():
    errors = [_solve(f'tri {n}', 2)[2] for n in (2, 4)]
    assert errors[1].err_total < errors[0].err_total / 2
    assert errors[0].h == pytest.approx(math.sqrt(2.0) / 2)


def test_inaccurate_solve_is_rejected(monkeypatch):
    material = constitutive(1.0, 0.0)
    system = assemble_global(load_or_generate_mesh('tri 2'), 2, material, TrigSolution(material))
    exact_solve = kl_solver.spsolve
    monkeypatch.setattr(kl_solver, 'spsolve', lambda matrix, rhs: exact_solve(matrix, rhs) * (1 + 1e-3))
    with pytest.raises(SolverError, match='residual'):
        solve_uncondensed(system)
    with pytest.raises(SolverError, match='residual'):
        solve_condensed(system)


def test_singular_norm_matrix(monkeypatch):
    system, _, _ = _solve('tri 1', 2)

    def singular(matrix):
        raise RuntimeError('Factor is exactly singular')

    monkeypatch.setattr(kl_solver, 'splu', singular)
    with pytest.raises(SolverError, match='singular'):
        inf_sup_estimate(system, samples=2)


@functools.lru_cache(maxsize=None)
def _study(family, sizes, ell):
    return tuple(_solve(f'{family} {n}', ell)[2] for n in sizes)


@pytest.mark.slow
@pytest.mark.parametrize('ell', [2, 3])
def test_triangular_convergence(ell):
    reports = _study('tri', (4, 8, 16, 32), ell)
    fit = fit_rate([r.h for r in reports], [r.err_total for r in reports])
    assert fit.slope >= ell + 1 - 0.25


@pytest.mark.slow
def test_triangular_convergence_degree_four():
    reports = _study('tri', (2, 4, 8), 4)
    fit = fit_rate([r.h for r in reports], [r.err_total for r in reports])
    assert fit.used >= 2
    assert fit.slope >= 4.6


@pytest.mark.slow
def test_cartesian_convergence():
    reports = _study('cart', (4, 8, 16), 2)
    fit = fit_rate([r.h for r in reports], [r.err_total for r in reports])
    assert fit.slope >= 2.75


@pytest.mark.slow
@pytest.mark.parametrize('family, sizes', [('tri', (4, 8, 16, 32)), ('cart', (4, 8, 16))])
def test_deflection_superconvergence(family, sizes):
    reports = _study(family, sizes, 2)
    fit = fit_rate([r.h for r in reports], [r.err_u for r in reports])
    assert fit.slope >= 2.75
