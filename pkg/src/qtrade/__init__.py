"""Tsallis-q correlation measures and numerical checks of their tripartite trade-offs."""

from .entropy import QParam, conditional_entropy, mutual_entropy, tsallis_difference, tsallis_entropy
from .measures import (
    BoundSide,
    Measure,
    MeasureReport,
    compute,
    q_cc,
    q_discord,
    q_entanglement,
    q_eoa,
    q_ud,
    q_ue,
)
from .optimize import Direction, OptConfig, OptResult, optimize
from .qstate import (
    DensityMatrix,
    PureState,
    StateError,
    canonical_state,
    haar_random_pure,
    partial_trace,
    random_mixed,
)
from .theorems import Theorem, TheoremReport, scan, verify

__version__ = "0.1.0"

__all__ = [
    "BoundSide",
    "DensityMatrix",
    "Direction",
    "Measure",
    "MeasureReport",
    "OptConfig",
    "OptResult",
    "PureState",
    "QParam",
    "StateError",
    "Theorem",
    "TheoremReport",
    "canonical_state",
    "compute",
    "conditional_entropy",
    "haar_random_pure",
    "mutual_entropy",
    "optimize",
    "partial_trace",
    "q_cc",
    "q_discord",
    "q_entanglement",
    "q_eoa",
    "q_ud",
    "q_ue",
    "random_mixed",
    "scan",
    "tsallis_difference",
    "tsallis_entropy",
    "verify",
]
