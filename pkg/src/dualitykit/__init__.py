from .duality_core import (
    DualityStructure,
    ValidationReport,
    StochasticMatrix,
    GeneratorMatrix,
    ProbabilityVector,
    SignedVector,
    DualityMatrix,
    validate_stochastic,
    validate_generator,
    transition_matrix,
    stationary_distribution,
    eigenvalue_multiset,
    matrix_rank,
    config_to_index,
    index_to_config,
    load_matrix,
    save_matrix,
    DualityError,
    DualityDataError,
    DualityPreconditionError,
    DualityNumericError,
)
from .duality_data import (
    DualityStatus,
    TensorKind,
    ReportFormat,
    MomentChain,
    Tolerances,
    DEFAULT_TOLERANCES,
    BasicMechanism,
    QParameter,
    SpinConfiguration,
    ArrowEvent,
    RateTable,
    GraphicalRepresentation,
    Trajectory,
    CountChainSpec,
    SdeSpec,
    BranchingAnnihilatingSpec,
    SimulationReport,
    ConvergenceRow,
    ConvergenceTable,
    MonotoneLimitReport,
    RunnerHistoryItem,
    DualityDictFactory,
)
from .duality_algebra import (
    check_duality_discrete,
    check_duality_generators,
    duality_residual_matrix,
    check_v1plus_invariance,
    solve_dual,
    check_monotone,
    siegmund_dual,
    siegmund_duality,
    spectrum_compare,
    reversible_intertwining_check,
    unitary_equivalence,
    build_tensor_duality,
    nondegeneracy_check,
    lift_duality,
    measure_from_diagonal,
    diagonal_from_measure,
    check_measure_duality,
    check_trap,
    resolvent,
    resolvent_duality_check,
    symmetry_from_duality,
    duality_from_symmetry,
    time_reversal,
    doob_transform,
    intertwining_from_duality,
    duality_from_intertwining,
    sep_generator,
    sep_instance,
    sep_symmetry_check,
)
from .duality_cone import (
    extremal_columns,
    simplex_test,
    decomposition_kernel,
    projection_kernel,
    jump_dual,
    intertwining_residual,
    continuous_dual_generator,
    cone_dual,
)
from .duality_pathsim import (
    standard_mechanisms,
    is_q_dual_mechanism,
    mechanism_monotone,
    randomized_mechanism,
    complete_graph_rates,
    sample_graphical_representation,
    evolve_forward,
    evolve_backward,
    verify_strong_pathwise,
    rw_siegmund_pathwise,
    hypergeometric_duality_exact,
    hypergeometric_duality_value,
    spin_system_generator,
    moran_pair,
    async_mc_exchangeable_duality,
    async_conditional_duality_check,
)
from .duality_scaling import (
    simulate_count_chain,
    simulate_dual_count_chain,
    simulate_ba_dual,
    simulate_wf_sde,
    simulate_kingman_block,
    async_mc_moment_duality,
    async_rescaling_experiment,
    async_monotone_limit_check,
    moment_duality_generators,
    moment_truncation_error,
)
from .duality_runner import (
    DualityRunner_Base,
    create_runner,
)

# for unit tests
from .duality_runner import (
    DualityRunner_Asyncio,
    DualityRunner_Joblib,
    batch_plan,
)
from .duality_scaling import (
    batch_count_chain,
    batch_dual_count_chain,
    batch_ba_dual,
    batch_wf_sde,
    batch_kingman_block,
)
