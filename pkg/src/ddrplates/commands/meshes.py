"""This is a command module for the plates driver.
It generates meshes and reports on their regularity.

Commands:
    mesh            write a mesh as polymesh v1 and print its diagnostics
"""
# pylint: disable=E0402
import logging
import sys
from pathlib import Path

from ..mesh import expand_sources, load_or_generate_mesh, mesh_diagnostics, write_polymesh
from ..utils.command import Command

logger = logging.getLogger(__name__)


class Meshes(Command):
    name = 'mesh'
    help = 'emit a polymesh v1 file for a generator spec and print its diagnostics'

    def run(self, config):
        sources = expand_sources(config.mesh_sources)
        out = Path(config.out) if config.out else None
        if out is not None and len(sources) > 1:
            out.mkdir(parents=True, exist_ok=True)

        for source in sources:
            mesh = load_or_generate_mesh(source)
            report = mesh_diagnostics(mesh)
            if out is None:
                write_polymesh(mesh, sys.stdout)
                # diagnostics go to stderr so stdout stays a valid mesh file
                print('\n'.join(f'# {line}' for line in report.lines()), file=sys.stderr)
                continue
            target = out / f'{mesh.label.replace(" ", "_")}.polymesh' if out.is_dir() else out
            write_polymesh(mesh, target)
            logger.info('%s written to %s', mesh.label, target)
            print('\n'.join(report.lines()))
        return 0


def setup(driver):
    driver.add_command(Meshes(driver))
