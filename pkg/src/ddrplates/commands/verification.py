"""This is a command module for the plates driver.
It certifies the local discrete complex cell by cell.

Commands:
    verify          exactness certificate and identity suite for every cell and every k
"""
# pylint: disable=E0402
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime

from ..ddr_core import LocalOperatorSet
from ..exactness import assemble_local_matrices, check_commutation_consistency, check_exactness
from ..mesh import expand_sources, load_or_generate_mesh
from ..models.certificate_model import CertificateDB
from ..utils.command import Command

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CellVerdict:
    certificate: object
    consistency: object
    identity_tol: float

    @property
    def passed(self):
        return self.certificate.passed and self.consistency.passed(self.identity_tol)

    @property
    def failure(self):
        """Name of the first failing check, certificate checks before the other identities."""
        first = self.certificate.first_failure
        if first is not None:
            return f'check ({first.key}) {first.name}'
        for name, value in self.consistency.residuals.items():
            if value > self.identity_tol:
                return f'identity {name}'
        return None

    def lines(self):
        certified = {'commutation', 'potential_curl'}
        extra = [line for line, name in zip(self.consistency.lines(), self.consistency.residuals)
                 if name not in certified]
        return self.certificate.lines() + extra


@dataclass(frozen=True)
class VerificationOutcome:
    verdicts: tuple
    exit_code: int
    failure: str = None

    def lines(self):
        out = []
        for verdict in self.verdicts:
            out.extend(verdict.lines())
        passed = sum(v.passed for v in self.verdicts)
        out.append(f'# {passed}/{len(self.verdicts)} certificates passed')
        if self.failure:
            out.append(f'# FAILED: {self.failure}')
        return out


def certify_cell(mesh, cell_id, k, config):
    cell = mesh.cells[cell_id]
    ops = LocalOperatorSet(mesh, cell, k)
    matrices = assemble_local_matrices(mesh, cell, k, operators=ops, inject_fault=config.inject_fault,
                                       seed=config.seed)
    consistency = check_commutation_consistency(ops, samples=config.samples, seed=config.seed, dd=matrices.dd)
    certificate = check_exactness(matrices, tol=config.rank_tol, identity_tol=config.identity_tol,
                                  samples=config.samples, seed=config.seed, mesh_label=mesh.label,
                                  consistency=consistency)
    return CellVerdict(certificate, consistency, config.identity_tol)


def _certify(job):
    return certify_cell(*job)


def run_verification(config):
    """Certificates for every (mesh, cell, k); exit 1 names the first failing check."""
    jobs = []
    for source in expand_sources(config.mesh_sources):
        mesh = load_or_generate_mesh(source)
        jobs.extend((mesh, cell.id, k, config) for cell in mesh.cells for k in config.ks)
    logger.info('verifying %d (cell, k) pairs', len(jobs))

    if config.parallel and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            verdicts = tuple(pool.map(_certify, jobs))
    else:
        verdicts = tuple(_certify(job) for job in jobs)

    failure = None
    for verdict in verdicts:
        if not verdict.passed:
            cert = verdict.certificate
            failure = f'{cert.mesh} cell {cert.cell_id} k={cert.k}: {verdict.failure}'
            break
    return VerificationOutcome(verdicts=verdicts, exit_code=0 if failure is None else 1, failure=failure)


class Verification(Command):
    name = 'verify'
    help = 'certify exactness of the local complex and the commutation identities'

    def run(self, config):
        outcome = run_verification(config)
        self.emit(outcome.lines(), config.out)
        if config.out:
            print(f'certificate report written to {config.out}')

        if self.driver.state is not None:
            certificates = CertificateDB(self.driver)
            date = datetime.now().isoformat(timespec='microseconds')
            for verdict in outcome.verdicts:
                certificates.create_new(verdict.certificate, date)

        if outcome.failure:
            print(f'verification failed: {outcome.failure}')
        return outcome.exit_code


def setup(driver):
    driver.add_command(Verification(driver))
