"""Volume-preserving approximation of deformations.

Frobenius projections onto SL(n) and friends, the inequalities tying
distance-to-SL to the determinant deviation, grid decompositions,
optimal-transport rearrangements and a penalised incompressible limit.
"""
from ._accel import backend
from .errors import DomainError, PreconditionError, SolverError, VolpresError

__version__ = "0.1.0"

__all__ = ["backend", "DomainError", "PreconditionError", "SolverError", "VolpresError", "__version__"]
