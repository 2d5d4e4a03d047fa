"""Exception hierarchy shared across the package."""


class HSHError(Exception):
    """Base class for all package errors."""


class InvalidInputError(HSHError, ValueError):
    pass


class OverlapError(HSHError):
    """Two spheres are closer than one diameter where that is not allowed."""


class PathologyError(HSHError):
    """Grazing, simultaneous or triple collisions (or a horizon tie) were met.

    ``report`` carries the :class:`~hsh.dynamics.PathologyReport`.
    """

    def __init__(self, message, report=None, term=None):
        super().__init__(message)
        self.report = report
        self.term = term


class RunawayError(HSHError):
    """Event or branch count exceeded its configured cap."""


class DegenerateSampleError(HSHError):
    """A finite-difference stencil crossed a discontinuity of the flow map."""


class NoPreimageError(HSHError):
    """A terminal state is not in the image of the Enskog backward flow map."""


class PartitionError(HSHError):
    """A time partition violates the single-collision or free-subflow property."""


class AuditError(HSHError):
    """The cancellation audit left unmatched ledger rows."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class AmbiguityError(HSHError):
    """A Dirac atom sits on the boundary of the Enskog image set."""

    def __init__(self, message, term=None):
        super().__init__(message)
        self.term = term


class UndefinedEndpointError(HSHError):
    """Triple coincidence: the endpoint of the Enskog flow is not defined."""

    def __init__(self, message, term=None):
        super().__init__(message)
        self.term = term


class InvalidScenarioError(InvalidInputError):
    """Scenario parameters do not produce the requested collision structure."""


class SearchExhaustedError(HSHError):
    pass


class SamplerMismatchError(HSHError):
    pass


class VarianceError(HSHError):
    pass


class ConfigError(HSHError):
    pass


class InvalidDemoError(InvalidInputError):
    """Input does not match the overlapping two-particle example pattern."""
