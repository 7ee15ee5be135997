"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes: configuration problems exit
with 1, failed numerical gates with 2, exhausted horizons/resources with 3.
"""


class SimulationError(Exception):
    """Base class for all package errors."""


class ConfigError(SimulationError):
    """Invalid configuration: bad grid, bad parameter, unknown config key."""


class HorizonError(SimulationError):
    """A query ran past the available data horizon (e.g. the auxiliary
    Brownian path is too short to resolve a first-passage level)."""


class GateError(SimulationError):
    """A numerical verification gate failed."""


class FitError(SimulationError):
    """The constrained polynomial construction could not satisfy its
    constraint set; the message names the violated constraint."""
