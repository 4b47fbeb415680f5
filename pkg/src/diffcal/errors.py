"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Non-finite values, dimension mismatches, or otherwise malformed inputs."""


class UnsupportedRepresentationError(InvalidInputError):
    """Operation not defined for this shape representation."""


class IntegrationError(RuntimeError):
    """Geodesic integration produced a non-finite state.

    Attributes:
        step: index of the failing time step.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class SamplerError(RuntimeError):
    """MCMC sampling failed (e.g. no proposal accepted during burn-in)."""


class ModelFormatError(RuntimeError):
    """Serialized surrogate model has an unknown schema or version."""
