"""Exception types shared across the package."""


class So3SyncError(Exception):
    """Base class for every error raised by this package."""


class NonSkewInput(So3SyncError):
    """A matrix that must be skew-symmetric is not, beyond tolerance."""


class NonUnitAxis(So3SyncError):
    """A rotation axis does not have unit norm, beyond tolerance."""


class DegenerateMatrix(So3SyncError):
    """A matrix is too far from the rotation group to project safely."""


class NotConnected(So3SyncError):
    """The interconnection graph does not span all agents."""


class HasCycle(So3SyncError):
    """The interconnection graph contains a cycle."""


class DuplicateEdge(So3SyncError):
    """The same undirected agent pair appears twice in an edge list."""


class MissingLeaderAttitude(So3SyncError):
    """The informed agent's torque was requested without the reference."""


class UnknownNeighbor(So3SyncError):
    """Neighbor attitudes do not match the agent's neighbor set."""


class EmptyPiSet(So3SyncError):
    """An undesired-equilibrium query needs at least one rotated slot."""


class LeaderSlotNotPi(So3SyncError):
    """The closed-form Hessian blocks require the leader slot rotated."""


class IntegrationDiverged(So3SyncError):
    """A trajectory left the trust region of the integrator."""


class EigensolverFailure(So3SyncError):
    """The dense eigensolver failed or was fed non-finite data."""


class ParseError(So3SyncError):
    """A scenario file is not syntactically valid."""

    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class ValidationError(So3SyncError):
    """A scenario or parameter set violates a named constraint."""

    def __init__(self, constraint, message):
        super().__init__(f"{constraint}: {message}")
        self.constraint = constraint
