"""Eigenvalues and pseudospectra of truncated non-selfadjoint Schroedinger operators."""

from .errors import *  # noqa: F401,F403
from .potentials import PotentialSpec, builtin, from_expressions, verify_assumptions
from .rect import Rect
from .shooting import BoundaryCondition, EigenRecord, TruncatedProblem, find_eigenvalues, truncate

__version__ = "0.1.0"
