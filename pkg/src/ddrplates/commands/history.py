"""This is a command module for the plates driver.
It lists, shows and prunes what earlier runs stored in the results database.

Commands:
    history         list stored certificates and convergence runs
"""
# pylint: disable=E0402
from ..errors import ConfigError
from ..models.certificate_model import CertificateDB
from ..models.convergence_model import ConvergenceDB
from ..utils.command import Command


class History(Command):
    name = 'history'
    help = 'list stored certificates and convergence runs'

    def add_arguments(self, parser):
        parser.add_argument('--failures', action='store_true', help='only failed certificates')
        parser.add_argument('--show', type=int, metavar='ID', help='print the full report of one certificate')
        parser.add_argument('--delete-run', type=int, metavar='ID', dest='delete_run',
                            help='delete one convergence run and its points')

    def run(self, config):
        if self.driver.state is None:
            raise ConfigError('history needs a results store; got --db none')
        if config.extra.get('show') is not None:
            return self.show(config.extra['show'], config.out)
        if config.extra.get('delete_run') is not None:
            return self.delete_run(config.extra['delete_run'], config.out)

        certificates = CertificateDB(self.driver)
        if config.extra.get('failures'):
            stored = certificates.failures() or ()
        else:
            stored = certificates.query_all() or ()
        runs = ConvergenceDB(self.driver).query_all() or ()

        lines = [f'certificates ({len(stored)})']
        lines.extend(f'  {c.summary()}' for c in stored)
        lines.append(f'convergence runs ({len(runs)})')
        lines.extend(f'  {r.summary()}' for r in runs)
        self.emit(lines, config.out)
        return 0

    def show(self, certificate_id, out):
        certificate = CertificateDB(self.driver).query_one(id=certificate_id)
        if certificate is None:
            raise ConfigError(f'No stored certificate with id {certificate_id}')
        self.emit([certificate.summary(), certificate.report.rstrip('\n')], out)
        return 0

    def delete_run(self, run_id, out):
        run = ConvergenceDB(self.driver).query_one(id=run_id)
        if run is None:
            raise ConfigError(f'No stored convergence run with id {run_id}')
        points = len(run.points)
        run.delete()
        self.emit([f'deleted convergence run #{run_id} ({run.label}) and {points} points'], out)
        return 0


def setup(driver):
    driver.add_command(History(driver))
