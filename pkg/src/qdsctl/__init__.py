"""Markovian open quantum systems: generators, subsystem certificates, feedback simulation and synthesis."""
from .errors import (
    DecompositionError,
    DimensionError,
    GridMismatch,
    InternalInconsistency,
    InvarianceError,
    ModeError,
    NoStationaryState,
    NotCompensable,
    NotPositive,
    NotPure,
    NotStabilizable,
    QdsError,
    StateError,
    StateInvariantViolation,
    ZeroCoupling,
)
from .linquant import (
    TOL_ALG,
    TOL_PSD,
    BlockView,
    SpaceDecomposition,
    block_decompose,
    classify_factorized,
    from_bloch,
    hermitian_basis,
    local_split,
    operator_schmidt,
    partial_trace,
    purity,
    reshuffle,
    to_bloch,
    trace_distance,
    validate_density,
)
from .generator import (
    BlochAffineForm,
    GKSModel,
    LindbladModel,
    apply,
    bloch_affine,
    gks_to_lindblad,
    stationary_states,
    superoperator,
    trace_shift,
    unvec,
    vec,
)
from .subsystems import (
    SubsystemReport,
    check_attractivity,
    check_dfs_gamma_robust,
    check_invariance,
    check_invariance_robust,
    check_ns,
    check_ns_initialization_free,
    check_ns_robust,
    pumping_rate,
)
from .dynamics import (
    EnsembleResult,
    FeedbackDesign,
    TrajectoryRecord,
    build_fme,
    energy_ladder,
    ensemble_mean,
    integrate_master,
    lyapunov_trace,
    simulate_ensemble,
    simulate_sme,
    subspace_population,
)
from .synthesis import (
    compensation_for_invariance,
    design_ladder_stabilizer,
    design_qubit_stabilizer,
    stabilizable_qubit,
    synthesize_dfs,
)

__all__ = [
    "apply",
    "bloch_affine",
    "BlochAffineForm",
    "block_decompose",
    "BlockView",
    "build_fme",
    "check_attractivity",
    "check_dfs_gamma_robust",
    "check_invariance",
    "check_invariance_robust",
    "check_ns",
    "check_ns_initialization_free",
    "check_ns_robust",
    "classify_factorized",
    "compensation_for_invariance",
    "DecompositionError",
    "design_ladder_stabilizer",
    "design_qubit_stabilizer",
    "DimensionError",
    "energy_ladder",
    "ensemble_mean",
    "EnsembleResult",
    "FeedbackDesign",
    "from_bloch",
    "gks_to_lindblad",
    "GKSModel",
    "GridMismatch",
    "hermitian_basis",
    "integrate_master",
    "InternalInconsistency",
    "InvarianceError",
    "LindbladModel",
    "local_split",
    "lyapunov_trace",
    "ModeError",
    "NoStationaryState",
    "NotCompensable",
    "NotPositive",
    "NotPure",
    "NotStabilizable",
    "operator_schmidt",
    "partial_trace",
    "pumping_rate",
    "purity",
    "QdsError",
    "reshuffle",
    "simulate_ensemble",
    "simulate_sme",
    "SpaceDecomposition",
    "stabilizable_qubit",
    "StateError",
    "StateInvariantViolation",
    "stationary_states",
    "subspace_population",
    "SubsystemReport",
    "superoperator",
    "synthesize_dfs",
    "to_bloch",
    "TOL_ALG",
    "TOL_PSD",
    "trace_distance",
    "trace_shift",
    "TrajectoryRecord",
    "unvec",
    "validate_density",
    "vec",
    "ZeroCoupling",
]

__version__ = "0.1.0"
