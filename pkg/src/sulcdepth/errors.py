"""Exception hierarchy shared by every module of the package."""


class SulcDepthError(Exception):
    """Base class for all package errors."""


class ParseError(SulcDepthError):
    """A mesh, field or landmark file could not be parsed."""


class ValidationError(SulcDepthError):
    """An input violates a structural invariant.

    Parameters
    ----------
    message : str
        Human readable description.
    index : int or tuple, optional
        Offending element (face index, vertex index, vertex pair, ...).
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class NotClosedError(SulcDepthError):
    """The operation needs a closed surface but boundary edges exist."""


class DomainError(SulcDepthError, ValueError):
    """A scalar argument lies outside its admissible domain."""


class SolverError(SulcDepthError):
    """A linear solve failed (no convergence, non positive definite matrix)."""


class EigensolverError(SulcDepthError):
    """The generalized eigenproblem could not be solved."""


class DivergenceError(SulcDepthError):
    """An iterative surface deformation blew up."""


class UnreachableError(SulcDepthError):
    """No path exists between a source vertex and the requested targets."""


class EmptyResultError(SulcDepthError):
    """An algorithm produced an empty result where one was required."""


class DegenerateError(SulcDepthError):
    """A statistic is undefined for the given input (zero spread, too few samples)."""


class EmptyInputError(SulcDepthError, ValueError):
    """A sample list is empty."""
