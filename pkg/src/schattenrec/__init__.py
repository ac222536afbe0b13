"""Low-rank matrix recovery via Schatten p-(quasi)norm minimization.

Dense singular-value machinery, measurement ensembles with restricted
isometry probing, nuclear/IRLS reconstruction solvers, stability-bound
certificates, and null-space/width experiments, all deterministic under a
master seed.
"""

__version__ = "0.1.0"

from .errors import (
    HypothesisViolatedError,
    MemoryGuardError,
    NumericalError,
    ValidationError,
)
from .measurements import (
    MeasurementOperator,
    RestrictedConstants,
    delta_from_gamma,
    entry_mask_operator,
    estimate_restricted_constants,
    full_vectorization_operator,
    gamma_from_delta,
    gaussian_operator,
)
from .schatten import (
    BlockSplit,
    SvdFactors,
    TailBlocks,
    best_rank_error,
    block_split,
    schatten_norm,
    spectral_truncate,
    svd,
    tail_blocks,
    weak_schatten_norm,
)
from .solvers import (
    SolveOptions,
    SolveResult,
    oracle_recover_small,
    recover_nuclear,
    recover_schatten_p,
)
from .stability import (
    StabilityConstants,
    StabilityReport,
    exact_recovery_threshold,
    hypothesis_holds,
    stability_constants,
    verify_bounds,
)

__all__ = [
    "BlockSplit",
    "HypothesisViolatedError",
    "MeasurementOperator",
    "MemoryGuardError",
    "NumericalError",
    "RestrictedConstants",
    "SolveOptions",
    "SolveResult",
    "StabilityConstants",
    "StabilityReport",
    "SvdFactors",
    "TailBlocks",
    "ValidationError",
    "best_rank_error",
    "block_split",
    "delta_from_gamma",
    "entry_mask_operator",
    "estimate_restricted_constants",
    "exact_recovery_threshold",
    "full_vectorization_operator",
    "gamma_from_delta",
    "gaussian_operator",
    "hypothesis_holds",
    "oracle_recover_small",
    "recover_nuclear",
    "recover_schatten_p",
    "schatten_norm",
    "spectral_truncate",
    "stability_constants",
    "svd",
    "tail_blocks",
    "verify_bounds",
    "weak_schatten_norm",
]
