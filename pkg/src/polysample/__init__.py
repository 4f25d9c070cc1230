"""Uniform sampling from polytopes with barrier-based random walks.

Polytopes come in a constrained form ``{x : A x = b, x[-k:] >= 0}``
(:class:`ConstrainedPolytope`, sparse ``A``) or a full-dimensional form
``{v : A v <= b}`` (:class:`FullDimPolytope`). Walks run natively on either.
"""

from .errors import (
    BoundaryError,
    ConvergenceError,
    DegeneratePolytopeError,
    EmptyPolytopeError,
    MpsParseError,
    NumericalBreakdownError,
    PolytopeError,
    PolytopeFormatError,
    RankDeficiencyError,
    UnboundedPolytopeError,
    UnboundedPolytopeWarning,
)
from .model import (
    AffineMap,
    ConstrainedPolytope,
    FullDimPolytope,
    generator_center,
    make_birkhoff,
    make_hypercube,
    make_simplex,
    membership,
    to_full_dimensional,
)
from .preprocess import facial_reduction, find_z, initialize, initialize_full, lift
from .walks import ChainOutput, WalkConfig, run_chain, run_to_ess
from .diagnostics import DiagnosticsReport, ess, radial_uniformity, summarize

__version__ = "0.1.0"
