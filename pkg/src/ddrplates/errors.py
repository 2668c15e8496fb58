"""Exceptions raised by the plates package.

The driver maps them onto exit codes: configuration and mesh input problems
exit with 2, numerical breakdowns with 3.
"""


class PlatesError(Exception):
    exit_code = 3


class ConfigError(PlatesError):
    exit_code = 2


class MeshError(PlatesError):
    exit_code = 2


class BasisError(PlatesError):
    pass


class QuadratureError(PlatesError):
    pass


class DDRError(PlatesError):
    pass


class SolverError(PlatesError):
    pass
