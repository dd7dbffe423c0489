"""Exception hierarchy.

Every error raised by the library derives from :class:`SkewProductError`, so
callers (the CLI in particular) can separate expected numerical failures from
programming errors.
"""


class SkewProductError(Exception):
    """Base class for all library errors."""


class ConfigError(SkewProductError):
    """Invalid run configuration."""


class UnknownScenario(ConfigError):
    pass


class InvalidNumeric(ConfigError):
    def __init__(self, key, value, reason=""):
        self.key = key
        self.value = value
        msg = f"invalid value for {key!r}: {value!r}"
        if reason:
            msg += f" ({reason})"
        super().__init__(msg)


class SimulationError(SkewProductError):
    """A numerical failure tied to a path and a step."""

    def __init__(self, message, path_index=None, step=None):
        self.path_index = path_index
        self.step = step
        where = []
        if path_index is not None:
            where.append(f"path {path_index}")
        if step is not None:
            where.append(f"step {step}")
        if where:
            message = f"{message} at {', '.join(where)}"
        super().__init__(message)


# mat2
class NonPositiveDeterminant(SimulationError):
    pass


class DegenerateColumn(SimulationError):
    pass


# sde / scenarios
class NonFinite(SimulationError):
    pass


class OriginStart(ConfigError):
    pass


class NonPositiveDeterminantStart(ConfigError):
    pass


class DeterminantCrossedZero(SimulationError):
    pass


# decompose
class OriginHit(SimulationError):
    pass


class UnwrapJump(SimulationError):
    pass


class NonPositiveDiagonal(SimulationError):
    pass


class FlatClock(SimulationError):
    pass


# stats
class TooFewPaths(SkewProductError):
    pass


class TooFewSamples(SkewProductError):
    pass


class GridMismatch(SkewProductError):
    pass
