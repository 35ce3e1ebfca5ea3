"""Numerical laboratory for two-phase Bernoulli free boundaries touching a flat fixed boundary.

Modules
-------
closed_form   homogeneous global solutions, Weiss values, cones
mesh          graded half-disc triangulations and P1 fields
functional    exact and smoothed energies
minimize      discrete minimizers, ordered combinations
freeboundary  free-boundary extraction and geometric diagnostics
weiss         Weiss energy and monotonicity profiles
blowup        blow-up sequences and classification
experiments   scenario runner and configuration
cli           command-line entry point
"""

__version__ = "0.1.0"

from .closed_form import ProblemSpec, derive_params  # noqa: E402,F401
from .mesh import ScalarField, build_mesh  # noqa: E402,F401
