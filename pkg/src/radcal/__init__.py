"""Piecewise-constant radial conductivity toolkit.

Forward map and derivatives, landscape checks, root-finding and
least-squares reconstruction, convex reformulation with weight estimation,
and a deterministic experiment harness.
"""

from .errors import InvalidInputError, NumericalFailure, SingularMatrixError
from .forward import RadialGeometry, analytic_jacobian, forward_map
from .landscape import BoxPrior, GridSpec

__version__ = "0.1.0"

__all__ = [
    "BoxPrior",
    "GridSpec",
    "InvalidInputError",
    "NumericalFailure",
    "RadialGeometry",
    "SingularMatrixError",
    "analytic_jacobian",
    "forward_map",
    "__version__",
]
