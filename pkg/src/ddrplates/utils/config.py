"""Run configuration: defaults, then a config file, then command-line flags."""
import argparse
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..errors import ConfigError
from ..solutions import SOLUTIONS

logger = logging.getLogger(__name__)

STATE_DIR = Path(__file__).resolve().parents[3] / 'state'
DEFAULT_CONFIG = STATE_DIR / 'config.json'
DEFAULT_DB = STATE_DIR / 'state.db.sqlite3'

DEFAULT_MESHES = {
    'verify': ('suite',),
    'solve': ('tri 4',),
    'convergence': ('tri 4', 'tri 8', 'tri 16', 'tri 32'),
    'mesh': ('tri 1',),
    'history': (),
}

# file keys that differ from the field names
ALIASES = {'mesh': 'meshes', 'k': 'ks', 'l': 'degree', 'ell': 'degree'}


@dataclass(frozen=True)
class RunConfig:
    command: str = 'verify'
    meshes: tuple = ()
    degree: int = 2
    ks: tuple = (3, 4, 5)
    D: float = 1.0
    nu: float = 0.0
    solution: str = 'trig'
    out: str = None
    seed: int = 0
    samples: int = 20
    rank_tol: float = 1e-9
    identity_tol: float = 1e-10
    rate_tol: float = 0.25
    parallel: bool = False
    workers: int = None
    timings: bool = True
    check_exactness: bool = False
    condensation: bool = True
    inject_fault: bool = False
    db: str = str(DEFAULT_DB)
    log_level: str = 'WARNING'
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def mesh_sources(self):
        return tuple(self.meshes) if self.meshes else DEFAULT_MESHES.get(self.command, ())

    @property
    def db_url(self):
        """SQLAlchemy url of the results store, or None when storage is off."""
        if self.db is None or str(self.db).lower() in ('', 'none', 'off'):
            return None
        if '://' in str(self.db):
            return str(self.db)
        return f'sqlite:///{self.db}'

    def as_dict(self):
        data = asdict(self)
        data.pop('extra')
        return data


FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _to_bool(value, key):
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ('1', 'true', 'yes', 'on'):
        return True
    if text in ('0', 'false', 'no', 'off'):
        return False
    raise ConfigError(f'{key}: expected a boolean, got {value!r}')


def _listify(value):
    if isinstance(value, (list, tuple)):
        return list(value)
    return [item.strip() for item in str(value).split(',') if item.strip()]


def coerce(key, value):
    """Casts one raw configuration value to the type of its RunConfig field."""
    name = ALIASES.get(key, key).replace('-', '_')
    if name not in FIELD_TYPES or name == 'extra':
        raise ConfigError(f'Unknown configuration key {key!r}')
    kind = FIELD_TYPES[name]
    try:
        if name == 'meshes':
            return name, tuple(str(item) for item in _listify(value))
        if name == 'ks':
            return name, tuple(int(item) for item in _listify(value))
        if value is None:
            return name, None
        if kind is bool:
            return name, _to_bool(value, key)
        if kind is int:
            return name, int(value)
        if kind is float:
            return name, float(value)
        return name, str(value)
    except ValueError as e:
        raise ConfigError(f'{key}: cannot read {value!r} ({e})') from None


def read_config_file(path):
    """Raw key/value pairs of a json file or of a flat `key = value` file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f'Cannot read config file {path}: {e}') from None
    if path.suffix == '.json':
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f'{path}: line {e.lineno}: {e.msg}') from None
        if not isinstance(data, dict):
            raise ConfigError(f'{path}: expected a json object')
        return data

    data = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f'{path}: line {number}: expected key = value')
        key, value = (part.strip() for part in line.split('=', 1))
        data[key] = value
    return data


def add_common_arguments(parser):
    """Flags shared by every command. Defaults are suppressed so only given flags override lower layers."""
    S = argparse.SUPPRESS
    parser.add_argument('--config', default=S, help='json or key=value config file')
    parser.add_argument('--mesh', dest='meshes', action='append', default=S,
                        help='mesh file or generator spec (tri n, cart n, kershaw n d, cell name, suite); repeatable')
    parser.add_argument('--degree', type=int, default=S, help='tensor degree l >= 2')
    parser.add_argument('--k', dest='ks', type=int, action='append', default=S, help='complex degree k >= 3; repeatable')
    parser.add_argument('--D', type=float, default=S, help='bending stiffness')
    parser.add_argument('--nu', type=float, default=S, help='Poisson ratio, 0 <= nu < 1')
    parser.add_argument('--solution', default=S, choices=sorted(SOLUTIONS))
    parser.add_argument('--out', default=S, help='output file')
    parser.add_argument('--seed', type=int, default=S)
    parser.add_argument('--samples', type=int, default=S, help='random samples per identity')
    parser.add_argument('--rank-tol', dest='rank_tol', type=float, default=S)
    parser.add_argument('--identity-tol', dest='identity_tol', type=float, default=S)
    parser.add_argument('--rate-tol', dest='rate_tol', type=float, default=S)
    parser.add_argument('--parallel', action='store_true', default=S)
    parser.add_argument('--workers', type=int, default=S)
    parser.add_argument('--no-timings', dest='timings', action='store_false', default=S,
                        help='write 0.0 solve times so repeated CSVs are byte-identical')
    parser.add_argument('--check-exactness', dest='check_exactness', action='store_true', default=S)
    parser.add_argument('--no-condensation', dest='condensation', action='store_false', default=S)
    parser.add_argument('--db', default=S, help="results store path or url; 'none' disables storage")
    parser.add_argument('--verbose', action='store_const', const='INFO', dest='log_level', default=S)
    parser.add_argument('--inject-fault', dest='inject_fault', action='store_true', default=S, help=S)
    return parser


def build_config(command, flags=None, config_path=None):
    """Merges the layers and validates the result.

    flags is the dict of parsed command-line values; only keys present there override.
    """
    flags = dict(flags or {})
    values = {'command': command}

    path = flags.pop('config', None) or config_path
    if path is None and DEFAULT_CONFIG.exists():
        path = DEFAULT_CONFIG
    extra = {}
    if path is not None:
        for key, value in read_config_file(path).items():
            if ALIASES.get(key, key).replace('-', '_') not in FIELD_TYPES or key in ('command', 'extra'):
                logger.warning('%s: ignoring unknown key %r', path, key)
                extra[key] = value
                continue
            name, cast = coerce(key, value)
            values[name] = cast
        logger.info('configuration read from %s', path)

    for key, value in flags.items():
        if ALIASES.get(key, key) not in FIELD_TYPES:
            # command-specific flags
            extra[key] = value
            continue
        name, cast = coerce(key, value)
        values[name] = cast

    config = RunConfig(**values, extra=extra)
    validate(config)
    return config


def validate(config):
    if config.command not in DEFAULT_MESHES:
        raise ConfigError(f'Unknown command {config.command!r}')
    if config.degree < 2:
        raise ConfigError(f'degree: l must be at least 2, got {config.degree}')
    if not config.ks or any(k < 3 for k in config.ks):
        raise ConfigError(f'k: every degree must be at least 3, got {list(config.ks)}')
    if config.command != 'history' and not config.mesh_sources:
        raise ConfigError('mesh: at least one mesh is required')
    if config.command == 'convergence' and len(config.mesh_sources) < 3:
        raise ConfigError(f'convergence needs at least 3 meshes, got {len(config.mesh_sources)}')
    if not config.D > 0:
        raise ConfigError(f'D must be positive, got {config.D}')
    if not 0.0 <= config.nu < 1.0:
        raise ConfigError(f'nu must satisfy 0 <= nu < 1, got {config.nu}')
    if config.solution not in SOLUTIONS:
        raise ConfigError(f'Unknown solution {config.solution!r}; known: {sorted(SOLUTIONS)}')
    for name in ('rank_tol', 'identity_tol', 'rate_tol'):
        if not getattr(config, name) > 0:
            raise ConfigError(f'{name} must be positive, got {getattr(config, name)}')
    if config.samples < 1:
        raise ConfigError(f'samples must be positive, got {config.samples}')
    if config.workers is not None and config.workers < 1:
        raise ConfigError(f'workers must be positive, got {config.workers}')
    if config.log_level.upper() not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
        raise ConfigError(f'Unknown log level {config.log_level!r}')
    return config
