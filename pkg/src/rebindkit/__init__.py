"""Coarse graining of Markov processes by Schur-vector memberships and rebinding bounds."""

__version__ = "0.1.0"

from .errors import NumericalError, RebindError, ValidationError  # noqa: E402
from .markov import (  # noqa: E402
    RateMatrix,
    StationaryDistribution,
    TransitionMatrix,
    nonreversibility,
    rate_to_transition,
    stationary_distribution,
    transition_to_rate,
)
from .projection import ProjectedModel, project, rebinding_measures, stability  # noqa: E402
from .rebind import MultiStartConfig, RebindBound, build_pattern, minimize_rebinding  # noqa: E402
from .schur import dominant_basis, real_schur, sort_schur  # noqa: E402

__all__ = [
    "__version__",
    "RebindError",
    "ValidationError",
    "NumericalError",
    "RateMatrix",
    "TransitionMatrix",
    "StationaryDistribution",
    "stationary_distribution",
    "nonreversibility",
    "rate_to_transition",
    "transition_to_rate",
    "real_schur",
    "sort_schur",
    "dominant_basis",
    "ProjectedModel",
    "project",
    "rebinding_measures",
    "stability",
    "MultiStartConfig",
    "RebindBound",
    "build_pattern",
    "minimize_rebinding",
]
