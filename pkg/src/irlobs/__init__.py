"""Online inverse reinforcement learning for linear agents.

Observes position/input trajectories of a linear-quadratic demonstrator,
simultaneously estimates its state and dynamics parameters from output
measurements, and recovers its cost function by inverse-Bellman-error
least squares with condition-number data selection and quality-driven
purging.
"""

from .errors import (
    ConfigError,
    IrlobsError,
    NumericOverflowError,
    RankDeficiencyError,
    SolverFailureError,
    WindowUnderflowError,
)
from .estimator import (
    AdaptiveObserver,
    EstimatorGains,
    ParamHistoryStack,
    ThetaVector,
    integral_regressor,
    integral_residual,
)
from .experiment import (
    ExperimentConfig,
    RunReport,
    default_config,
    load_config,
    run_experiment,
    write_report,
)
from .irl import (
    Candidate,
    FeatureBasis,
    IrlHistoryStack,
    WeightVector,
    controller_rows,
    data_select,
    eval_features,
    ideal_weights,
    inverse_bellman_row,
    solve_weights,
)
from .numerics import (
    SampledSignal,
    condition_number,
    kron_transpose_apply,
    least_squares,
    rk4_step,
    solve_are,
    trapezoid,
)
from .plant import (
    CostFunction,
    Demonstrator,
    LinearPlant,
    make_demonstrator,
    optimal_action,
    query,
    simulate_demonstrator,
)
from .purge import (
    PurgeState,
    QualityConfig,
    purge_policy,
    quality_eta1,
    quality_eta2,
    smooth_velocity,
)

__version__ = "0.1.0"
