"""Exception types shared across the library and the command line front end."""


class ConfigError(Exception):
    """Raised for malformed run configuration (bad key, bad value, bad file)."""


class NumericsError(RuntimeError):
    """Base class for runtime numerical failures (as opposed to bad input)."""


class BlowUpError(NumericsError):
    """A Riccati solution left the trust region before the horizon.

    Carries the grid time at which the iterate first exceeded the magnitude
    cap, so callers can report how far the solve got.
    """

    def __init__(self, message: str, t: float):
        super().__init__(message)
        self.t = t


class CriticalPriceNotFound(NumericsError):
    """No spot level in the search bracket matched the immediate payoff."""
