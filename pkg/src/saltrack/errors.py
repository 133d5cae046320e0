"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Bad input: malformed files, incompatible shapes, invalid options."""


class StateError(RuntimeError):
    """An operation was called before the state it depends on exists."""


class InvariantError(RuntimeError):
    """A runtime invariant was violated (probability mass, unsolvable cut, ...)."""
