"""Finite elements, fractional solves and Gaussian random fields on compact metric graphs."""
from .errors import (
    DisconnectedGraph,
    GraphfieldError,
    InvalidPoint,
    MeshMismatch,
    NonPositiveCoefficient,
    NonPositiveLength,
    SizeLimitExceeded,
    SolverError,
    ValidationError,
)
from .experiments import (
    ExperimentConfig,
    RateTable,
    fit_rate,
    run_covariance_convergence,
    run_deterministic_convergence,
    run_strong_convergence,
)
from .fem import (
    CoefficientField,
    OperatorPair,
    WellposednessReport,
    assemble,
    assemble_mass,
    assemble_stiffness,
    check_wellposedness,
    load_vector,
    project_l2,
    prolongate,
    transfer_matrix,
)
from .fractional import (
    FieldSample,
    FracExponent,
    SincRule,
    apply_fractional_inverse,
    apply_resolvent,
    default_step,
    fractional_eigen_oracle,
    plan_sinc,
    solve_deterministic,
)
from .metric_graph import (
    Edge,
    GraphPoint,
    Mesh,
    MetricGraph,
    build_graph,
    build_mesh,
    builtin_graph,
    load_graph,
    parse_graph,
    shortest_distance,
)
from .spectral import DIRICHLET, EigenSystem, generalized_eigs, interlacing_check, weyl_check
from .whittle_matern import (
    CovarianceMatrix,
    NoiseVector,
    covariance_l2_error,
    covariance_matrix,
    kl_truncation_error,
    sample_field,
    sample_white_noise,
)

__version__ = "0.1.0"
