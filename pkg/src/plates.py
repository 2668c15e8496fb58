"""Plates driver

Discrete plates complex verification and Kirchhoff-Love convergence studies.
"""
import argparse
import importlib
import logging
import sys
from datetime import datetime, timezone
from os import path, listdir

from numpy.linalg import LinAlgError

from ddrplates import __version__
from ddrplates.errors import PlatesError
from ddrplates.models.core import DBConnector, DBError
from ddrplates.utils.config import add_common_arguments, build_config

logger = logging.getLogger('plates')


class PlatesDriver:
    def __init__(self, config_path=None):
        self.config_path = config_path
        self.config = None
        self.state = None
        self.commands = {}
        self.last_errors = []

    def add_command(self, command):
        if command.name in self.commands:
            raise ValueError(f'Command {command.name!r} is registered twice')
        self.commands[command.name] = command

    def log_error(self, error, origin):
        self.last_errors.append((error, datetime.now(timezone.utc), origin))

    def load_commands(self):
        extensions = []
        for file in sorted(listdir(path.join(path.dirname(__file__), 'ddrplates', 'commands'))):
            filename, ext = path.splitext(file)
            if ext == '.py' and not filename.startswith('_'):
                extensions.append(f'ddrplates.commands.{filename}')

        for extension in extensions:
            try:
                importlib.import_module(extension).setup(self)
            except Exception as e:
                self.log_error(e, extension)
                exc = f'{type(e).__name__}: {e}'
                print(f'Failed to load extension {extension}\n{exc}', file=sys.stderr)
        return extensions

    def parser(self):
        parser = argparse.ArgumentParser(prog='plates', description=__doc__.strip().splitlines()[-1])
        parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
        subparsers = parser.add_subparsers(dest='command', required=True)
        for name, command in self.commands.items():
            sub = subparsers.add_parser(name, help=command.help, argument_default=argparse.SUPPRESS)
            add_common_arguments(sub)
            command.add_arguments(sub)
        return parser

    def configure(self, argv):
        args = vars(self.parser().parse_args(argv))
        command = args.pop('command')
        self.config = build_config(command, args, config_path=self.config_path)
        logging.basicConfig(level=self.config.log_level.upper(),
                            format='%(asctime)s %(levelname)s %(name)s: %(message)s', force=True)
        logger.info('configuration: %s', self.config.as_dict())
        url = self.config.db_url
        self.state = DBConnector(url) if url is not None else None
        return self.config

    def run(self, argv=None):
        """Runs one command and returns its exit code."""
        command = None
        try:
            config = self.configure(argv)
            command = self.commands[config.command]
            return command.run(config)
        except PlatesError as e:
            self.log_error(e, command.name if command else 'configuration')
            print(f'{type(e).__name__}: {e}', file=sys.stderr)
            return e.exit_code
        except LinAlgError as e:
            self.log_error(e, command.name if command else 'configuration')
            print(f'{type(e).__name__}: {e}', file=sys.stderr)
            return 3
        except DBError as e:
            self.log_error(e, command.name if command else 'configuration')
            print(f'{type(e).__name__}: {e}', file=sys.stderr)
            return 2
        except OSError as e:
            self.log_error(e, command.name if command else 'configuration')
            print(f'{type(e).__name__}: {e}', file=sys.stderr)
            return 2


def main(argv=None, config_path=None):
    driver = PlatesDriver(config_path=config_path)
    driver.load_commands()
    return driver.run(argv)


if __name__ == '__main__':
    sys.exit(main())
