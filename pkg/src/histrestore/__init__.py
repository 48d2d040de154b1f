"""Total-variation image restoration with a Wasserstein prior on the grayvalue histogram.

The nonconvex problem over images is lifted to monotone level-set fields,
where it becomes convex, and solved by proximal splitting.
"""

from .field import (
    Cdf,
    Histogram,
    Image,
    LevelGrid,
    LiftedField,
    cdf_of,
    histogram_of,
    lift,
    marginal_histogram,
    quantize,
    threshold,
)
from .solver import DataTerm, Problem, SolveReport, SolverParams, primal_energy, relaxed_energy, round_field, solve
from .transport import CostMatrix, ot_monotone, w1_cdf, w1_dual_certificate

__version__ = "0.1.0"
