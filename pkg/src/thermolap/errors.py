"""Exception hierarchy shared across the package.

Every error raised on a user-facing path derives from ThermolapError so the
command line tool can map failures onto stable exit codes.
"""


class ThermolapError(Exception):
    """Base class for all errors raised by this package."""


class InputError(ThermolapError):
    """A file could not be read or written (missing path, bad permissions)."""


class DataError(ThermolapError):
    """A file was readable but its contents are malformed or inconsistent."""


class ParameterError(ThermolapError):
    """A parameter set violates a physical or numerical validity condition."""


class SolverError(ThermolapError):
    """The optimizer failed to produce a usable solution."""


class VerificationError(ThermolapError):
    """Forward simulation disagreed with an optimized solution beyond tolerance."""
