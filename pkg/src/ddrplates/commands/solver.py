"""This is a command module for the plates driver.
It solves the clamped Kirchhoff-Love plate with the manufactured load and
measures errors and convergence rates.

Commands:
    solve           solve on one or more meshes and print the error report
    convergence     solve on a mesh family, write the error CSV and fit the rates
"""
# pylint: disable=E0402
import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from datetime import datetime

from ..kl_solver import (
    assemble_global, coercivity_witness, compute_errors, constitutive, fit_rate, inf_sup_estimate,
    pairwise_rates, solve_condensed, solve_uncondensed,
)
from ..mesh import expand_sources, load_or_generate_mesh
from ..models.convergence_model import ConvergenceDB
from ..solutions import get_solution
from ..utils.command import Command
from .verification import certify_cell

logger = logging.getLogger(__name__)

CSV_COLUMNS = ('mesh_id', 'h', 'ndof_retained', 'err_total', 'err_sigma', 'err_u', 'rate_total', 'gamma',
               'solve_seconds')
ZERO_TOL = 1e-10


def _number(value):
    return 'nan' if value is None or math.isnan(value) else f'{value:.12e}'


# ----------------------------------------------
# Single mesh
# ----------------------------------------------
def solve_mesh(source, config, diagnostics=False):
    """ErrorReport for one mesh, plus inf-sup and coercivity reports when asked for."""
    mesh = load_or_generate_mesh(source)
    material = constitutive(config.D, config.nu)
    solution = get_solution(config.solution, material)
    system = assemble_global(mesh, config.degree, material, solution)
    result = solve_condensed(system) if config.condensation else solve_uncondensed(system)
    report = compute_errors(system, result, solution)
    if not config.timings:
        report = replace(report, solve_seconds=0.0)
    if not diagnostics:
        return report, None, None
    return (report,
            inf_sup_estimate(system, samples=config.samples, seed=config.seed),
            coercivity_witness(system, seed=config.seed))


def _solve_report(job):
    source, config = job
    return solve_mesh(source, config)[0]


def certify_mesh(source, config):
    """First failing (cell, check) of the complex at k = l + 1, or None."""
    mesh = load_or_generate_mesh(source)
    for cell in mesh.cells:
        verdict = certify_cell(mesh, cell.id, config.degree + 1, config)
        if not verdict.passed:
            return f'{mesh.label} cell {cell.id} k={config.degree + 1}: {verdict.failure}'
    return None


# ----------------------------------------------
# Mesh family
# ----------------------------------------------
@dataclass(frozen=True)
class ConvergenceStudy:
    reports: tuple
    fit: object
    fit_u: object
    target: float
    tolerance: float
    solution: str

    @property
    def rates(self):
        return self.fit.rates

    @property
    def passed(self):
        if self.solution == 'zero':
            return all(r.err_total < ZERO_TOL for r in self.reports)
        return not math.isnan(self.fit.slope) and self.fit.slope >= self.target - self.tolerance

    @property
    def exit_code(self):
        return 0 if self.passed else 1

    def csv_text(self):
        return write_csv(self.reports, self.rates)

    def lines(self):
        out = [f'{"mesh":<16} {"h":>10} {"ndof":>8} {"err":>12} {"rate":>6} {"err_u":>12}']
        for report, rate in zip(self.reports, self.rates):
            shown = '-' if math.isnan(rate) else f'{rate:.2f}'
            out.append(f'{report.mesh:<16} {report.h:10.4e} {report.ndof_retained:8d} '
                       f'{report.err_total:12.4e} {shown:>6} {report.err_u:12.4e}')
        if self.solution == 'zero':
            out.append(f'zero solution: max error {max(r.err_total for r in self.reports):.3e}')
        else:
            out.append(f'fitted slope Sigma x L {self.fit.slope:.3f} over {self.fit.used} meshes '
                       f'(target {self.target:g} - {self.tolerance:g})')
            out.append(f'fitted slope deflection {self.fit_u.slope:.3f} over {self.fit_u.used} meshes')
        out.append('PASS' if self.passed else 'FAIL')
        return out


def write_csv(reports, rates):
    """Error table in CSV_COLUMNS order; returns the text."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(CSV_COLUMNS)
    for report, rate in zip(reports, rates):
        writer.writerow([
            report.mesh, _number(report.h), report.ndof_retained, _number(report.err_total),
            _number(report.err_sigma), _number(report.err_u), _number(rate), _number(report.gamma),
            _number(report.solve_seconds),
        ])
    return buffer.getvalue()


def _solve_family(sources, config):
    """Reports in input order; stops at the first failing mesh."""
    jobs = [(source, config) for source in sources]
    if config.parallel:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            yield from pool.map(_solve_report, jobs)
    else:
        for job in jobs:
            yield _solve_report(job)


def run_convergence_study(config, partial=None):
    """Solves every mesh of the family and fits the rates.

    partial, a list, receives each ErrorReport as soon as it is available so
    that a caller can still write the finished rows when a later mesh fails.
    """
    sources = expand_sources(config.mesh_sources)
    reports = partial if partial is not None else []
    for report in _solve_family(sources, config):
        logger.info('%s: error %.3e', report.mesh, report.err_total)
        reports.append(report)

    reports = list(reports)
    if any(a.h < b.h for a, b in zip(reports, reports[1:])):
        logger.warning('mesh family is not ordered by decreasing h; sorting it')
        reports.sort(key=lambda r: -r.h)
    h = [r.h for r in reports]
    fit = fit_rate(h, [r.err_total for r in reports])
    fit_u = fit_rate(h, [r.err_u for r in reports])
    return ConvergenceStudy(reports=tuple(reports), fit=fit, fit_u=fit_u, target=config.degree + 1.0,
                            tolerance=config.rate_tol, solution=config.solution)


# ----------------------------------------------
# Commands
# ----------------------------------------------
class Solve(Command):
    name = 'solve'
    help = 'solve the plate problem and report the errors'

    def run(self, config):
        lines = []
        for source in expand_sources(config.mesh_sources):
            if config.check_exactness:
                failure = certify_mesh(source, config)
                if failure:
                    print(f'verification failed: {failure}')
                    return 1
            report, inf_sup, coercivity = solve_mesh(source, config, diagnostics=True)
            lines.extend(report.lines())
            if config.timings:
                lines.append(f'solve seconds   {report.solve_seconds:.3f}')
            lines.append(f'inf-sup         {inf_sup.sampled:.6f} sampled, {inf_sup.exact:.6f} exact')
            lines.append(f'coercivity      {coercivity.violations} violations, min ratio {coercivity.min_ratio:.4f}')
        self.emit(lines, config.out)
        return 0


class Convergence(Command):
    name = 'convergence'
    help = 'convergence study on a mesh family; writes the error CSV'

    def run(self, config):
        partial = []
        try:
            study = run_convergence_study(config, partial)
        except Exception:
            if partial:
                self.write(config, write_csv(partial, pairwise_rates([r.h for r in partial], [r.err_total for r in partial])))
                logger.error('convergence study aborted after %d meshes; partial CSV written', len(partial))
            raise

        self.write(config, study.csv_text())
        print('\n'.join(study.lines()))

        if self.driver.state is not None:
            self.save(config, study)
        return study.exit_code

    @staticmethod
    def write(config, text):
        if config.out:
            with open(config.out, 'w', newline='') as handle:
                handle.write(text)
        else:
            print(text, end='')

    def save(self, config, study):
        date = datetime.now().isoformat(timespec='microseconds')
        label = f'{date} l={config.degree} {config.solution} ' + ','.join(r.mesh for r in study.reports)
        run = ConvergenceDB(self.driver).create_new(label, date, config, study.target, study.fit.slope,
                                                    study.fit_u.slope, study.passed)
        for report, rate in zip(study.reports, study.rates):
            run.add_point(report, rate)
        return run


def setup(driver):
    driver.add_command(Solve(driver))
    driver.add_command(Convergence(driver))
