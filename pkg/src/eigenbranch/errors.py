"""Exception hierarchy shared by all eigenbranch modules."""


class EigenbranchError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(EigenbranchError, ValueError):
    """An argument is outside the documented range."""


class GeometryError(InvalidInputError):
    """A domain cannot be built from the given parameters."""


class MeshingError(EigenbranchError):
    """Triangulation failed; ``location`` names the offending feature."""

    def __init__(self, message, location=None):
        super().__init__(message if location is None else f"{message} near {location}")
        self.location = location


class InvalidCoefficientError(InvalidInputError):
    """Negative Robin coefficient."""


class OverConstrainedError(EigenbranchError):
    """No free degrees of freedom remain after Dirichlet elimination."""


class FactorizationError(EigenbranchError):
    """The shifted operator could not be factored."""


class ConvergenceError(EigenbranchError):
    """The eigensolver did not reach the requested residual.

    Attributes
    ----------
    residuals : list of float
        Best residuals reached for the pairs that were available.
    eigenvalues : list of float
        Corresponding Ritz values.
    """

    def __init__(self, message, residuals=(), eigenvalues=()):
        super().__init__(message)
        self.residuals = [float(r) for r in residuals]
        self.eigenvalues = [float(v) for v in eigenvalues]


class InsufficientDataError(InvalidInputError):
    """Too few usable samples for a fit."""


class DataError(EigenbranchError):
    """An input file is malformed or inconsistent with its companions."""
