"""sparsemip: optimize over trained ReLU networks via MILP on pruned surrogates.

The pipeline: trained dense network -> pruned sparse surrogate -> MILP
encoding with interval-derived big-M constants -> LP-relaxation
branch-and-bound with incumbent callbacks -> every incumbent re-checked on
the dense network.
"""

from .bounds import ActivationBounds, InfeasibleDomainError, interval_propagate, stability_summary, tighten_box
from .harness import (
    ConfigError,
    ExperimentConfig,
    RunRecord,
    StudyResult,
    emit_scatter,
    load_config,
    load_records,
    load_scatter,
    run_maximization_study,
    run_verification_study,
    summarize,
    write_records,
)
from .milp import (
    EncodingError,
    MilpModel,
    encode_fm,
    encode_network,
    encode_vnn,
    write_lp_file,
)
from .network import (
    Box,
    Dataset,
    LayerActivations,
    Network,
    NetworkFormatError,
    TrainingDivergenceError,
    accuracy,
    forward,
    forward_batch,
    load_idx_dataset,
    load_network,
    make_synthetic_classification,
    predict,
    random_init,
    save_network,
    train,
)
from .pruning import (
    FinetuneSpec,
    Mask,
    PruningSpec,
    apply_mask,
    magnitude_mask,
    prune,
    prune_with_mask,
    random_mask,
    structured_mask,
)
from .solver import (
    CONTINUE,
    STOP,
    Incumbent,
    LpResult,
    SolveOutcome,
    SolveStats,
    SolverConfig,
    SolverError,
    branch_and_bound,
    rounding_heuristic,
    solve_lp,
)
from .surrogate import (
    SurrogateResult,
    VerificationInstance,
    maximize_direct,
    maximize_via_surrogate,
    verify_direct,
    verify_via_surrogate,
)

__version__ = "0.1.0"
