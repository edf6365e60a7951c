"""
Potential Bounds - a numerical laboratory for pointwise estimates of
solutions to nonlinear integral inequalities u >= G(g(u) sigma) + h.

Kernels on finite measure spaces, the maximum-principle constant b, the
psi machinery, closed-form bounds and Picard solvers that check them.
"""

__version__ = "0.1.0"

from .bounds import BoundReport, evaluate_bounds
from .measure_kernel import Kernel, Measure, MeasureSpace
from .nonlinearity import Nonlinearity
from .principles import quasimetric_constant, verify_wmp
from .solver import SolveResult, picard_decreasing, picard_increasing

__all__ = [
    "MeasureSpace",
    "Measure",
    "Kernel",
    "Nonlinearity",
    "quasimetric_constant",
    "verify_wmp",
    "evaluate_bounds",
    "BoundReport",
    "SolveResult",
    "picard_increasing",
    "picard_decreasing",
]
