"""Stochastic pure-state dynamics of small open quantum systems and the
Riemannian geometry of the induced diffusion."""

from .errors import (
    BracketingError,
    DegenerateFieldError,
    DimensionMismatchError,
    ExperimentIllPosedError,
    IntegrationDivergedError,
    NotApplicableError,
    NotNormalizedError,
    QsdLabError,
    StepFailureError,
)
from .quantum import (
    SIGMA_MINUS,
    SIGMA_PLUS,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    BlochPoint,
    DensityMatrix,
    DensitySeries,
    EnvironmentKind,
    EnvironmentModel,
    OperatorMatrix,
    QuantumState,
    bloch_to_state,
    bloch_vector,
    expectation,
    lindblad_evolve,
    lindblad_rhs,
    lindblad_superoperator,
    make_environment,
    state_to_bloch,
    stationary_state,
)
from .dynamics import (
    CONVENTIONS,
    DEFAULT_SEED,
    DOUBLED_DRIFT,
    GISIN_PERCIVAL,
    EnsembleResult,
    NoiseIncrement,
    RealStateVector,
    SdeConfig,
    TrajectoryRecord,
    diffusion_columns,
    drift,
    em_step,
    ensemble_density,
    from_real,
    hermitian_gradient_check,
    path_stream,
    real_drift_diffusion,
    sample_wiener,
    simulate_trajectory,
    to_real,
    trajectory_to_csv,
)
from .geometry import (
    CurvatureBundle,
    DiffusionMetric,
    QubitMetricAux,
    christoffel,
    closed_form_qubit_metric,
    complex_diffusion_matrix,
    curvature_bundle,
    metric_at,
    metric_norm,
    real_diffusion_matrix,
    ricci_scalar,
    riemann,
    scalar_curvature_many,
)
from .analysis import (
    STABILITY_DEFAULTS,
    BlochGrid,
    ExtremumReport,
    ScalarField,
    StabilityConfig,
    StabilityReport,
    SweepResult,
    coupling_sweep,
    critical_coupling,
    curvature_along_path,
    find_extrema,
    scan_field,
    stability_experiment,
)

__version__ = "0.1.0"
