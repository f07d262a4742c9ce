"""
Exception hierarchy shared by the engine modules.
Library code raises these; cli.py and app.py turn them into diagnostics.
"""


class VirelayError(Exception):
    """Base class for every error raised by the engine."""


class ConstructionError(VirelayError, ValueError):
    """A Term, Problem or TraceSpec was built incorrectly."""


class SortError(ConstructionError):
    """Operand sorts do not fit the operator."""


class LinearityError(ConstructionError):
    """A product of two non-constant terms was requested."""


class ConfigError(VirelayError, ValueError):
    """Bad model parameters or run configuration."""


class SolverConfigError(ConfigError):
    """No usable solver binary could be resolved."""


class SolverParseError(VirelayError, RuntimeError):
    """The solver printed something we could not understand."""

    def __init__(self, message, raw_output=""):
        super().__init__(message)
        self.raw_output = raw_output


class DecodeError(VirelayError, KeyError):
    """A variable needed to decode a trace is missing from the assignment."""

    def __str__(self):
        return str(self.args[0]) if self.args else "decode error"


class TraceFileError(VirelayError, ValueError):
    """A trace file is malformed or has an unsupported schema version."""
