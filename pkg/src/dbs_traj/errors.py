"""Exception types raised across the simulator."""

from __future__ import annotations


class DbsTrajError(Exception):
    """Base class for every error raised by this package."""


class InvalidConfig(DbsTrajError, ValueError):
    def __init__(self, field: str, reason: str):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")


class CausticError(DbsTrajError):
    """Neighbouring rays crossed or merged; tube transport is singular."""

    def __init__(self, message: str, pairs=()):
        self.pairs = tuple(int(p) for p in pairs)
        super().__init__(message)


class SingularGuidance(DbsTrajError):
    """E - V(r) vanished for some ray, so the relativistic velocity diverges."""


class StepTooLarge(DbsTrajError):
    """A ray moved more than half its local tube width in a single step."""


class ImaginaryRoot(DbsTrajError):
    """Negative radicand in the relativistic Hamiltonian."""


class OutOfGrid(DbsTrajError):
    """Query outside the hull of a tabulated potential."""


class PlaneNotReached(DbsTrajError):
    """Some ray never crossed the requested z plane."""


class GridTooNarrow(DbsTrajError):
    """Input field does not decay at the edges of the propagation grid."""
