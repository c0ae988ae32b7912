"""Exception types raised by the simulator."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration. ``key`` names the offending entry."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class ConstraintViolationError(ValueError):
    """A structural design rule (e.g. ``d_free >= N_s``) is violated."""


class InfeasibleConfigurationError(ValueError):
    """Beamforming cannot deliver the requested streams for some user."""

    def __init__(self, message, user=None):
        super().__init__(message)
        self.user = user


class SpectrumNotFoundError(ValueError):
    """No error event exists within the requested distance bound."""


class InsufficientDataError(ValueError):
    """Too few (or under-counted) BER points for a slope fit."""
