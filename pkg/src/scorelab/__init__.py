"""scorelab: a numerical laboratory for exact-score diffusion.

Tractable data distributions (delta mixtures, Gaussians) admit closed-form
posteriors under Gaussian smoothing, so the score, its Jacobian, entropy
rates, Fisher spectra, and fixed-point structure of the reverse process can
all be computed exactly and cross-checked against Monte Carlo estimates.
"""

__version__ = "0.1.0"

from .errors import (
    ConvergenceError,
    DomainError,
    EigensolveError,
    EvaluationError,
    InconsistentGameError,
    InsufficientDataError,
    IntegrationBlowupError,
    NumericError,
    ParseError,
    RefinementError,
    ScorelabError,
    SingularPosteriorError,
    ValidationError,
)
from .model import (
    DeltaMixture,
    GaussianFull,
    GaussianSubspace,
    NoiseSchedule,
    axis_subspace_basis,
    constant_schedule,
    default_schedule,
    geometric_schedule,
    load_pointcloud,
    random_subspace_basis,
    sample_forward,
    sample_forward_batch,
    table_schedule,
)
from .score import (
    denoising_loss_decomposition,
    exact_noise_predictor,
    log_density,
    posterior,
    score_at,
)
from .dynamics import (
    ensemble_trajectories,
    integrate_forward,
    integrate_reverse,
    lyapunov_at,
    separation_rate,
)
from .fixedpoints import (
    critical_exponent,
    curie_weiss_solve,
    equivalence_classes,
    solve_fixed_point,
    trace_tree,
)
from .infotheory import (
    active_set_norm_check,
    bandwidth_limit_diagnostic,
    conditional_entropy,
    divergence_report,
    entropy_profile,
    entropy_rate,
    fisher_factor_diagnostic,
    fisher_spectrum,
    gaussian_conditional_entropy,
    marginal_entropy_rate,
    thermodynamic_identity_residual,
)
from .discretegame import (
    GameUniverse,
    balanced_universe,
    expected_bits_per_step,
    play_oracle,
    verify_policy_equivalence,
)
from .scenario import bundled_scenario, bundled_scenarios, parse_scenario, scenario_from_file
from .runner import run_scenario

__all__ = [
    "__version__",
    "ScorelabError",
    "ValidationError",
    "DomainError",
    "ParseError",
    "InconsistentGameError",
    "NumericError",
    "SingularPosteriorError",
    "IntegrationBlowupError",
    "ConvergenceError",
    "EvaluationError",
    "RefinementError",
    "InsufficientDataError",
    "EigensolveError",
    "DeltaMixture",
    "GaussianFull",
    "GaussianSubspace",
    "NoiseSchedule",
    "constant_schedule",
    "geometric_schedule",
    "table_schedule",
    "default_schedule",
    "axis_subspace_basis",
    "random_subspace_basis",
    "load_pointcloud",
    "sample_forward",
    "sample_forward_batch",
    "posterior",
    "score_at",
    "log_density",
    "exact_noise_predictor",
    "denoising_loss_decomposition",
    "integrate_reverse",
    "integrate_forward",
    "ensemble_trajectories",
    "lyapunov_at",
    "separation_rate",
    "solve_fixed_point",
    "trace_tree",
    "curie_weiss_solve",
    "critical_exponent",
    "equivalence_classes",
    "entropy_rate",
    "entropy_profile",
    "conditional_entropy",
    "gaussian_conditional_entropy",
    "divergence_report",
    "marginal_entropy_rate",
    "thermodynamic_identity_residual",
    "fisher_spectrum",
    "active_set_norm_check",
    "fisher_factor_diagnostic",
    "bandwidth_limit_diagnostic",
    "GameUniverse",
    "balanced_universe",
    "play_oracle",
    "expected_bits_per_step",
    "verify_policy_equivalence",
    "parse_scenario",
    "scenario_from_file",
    "bundled_scenario",
    "bundled_scenarios",
    "run_scenario",
]
