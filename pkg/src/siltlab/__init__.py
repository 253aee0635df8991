"""siltlab: numerics for self-intersection local times of heavy-tailed lattice walks.

The package builds power-law jump models on Z^d and their torus projections,
simulates the continuous-time walk and its occupation fields, computes killed
and free Green kernels spectrally, samples Gaussian fields with Green
covariance to test the local-time isomorphism, solves the variational
problems behind the large-deviation rate constants, and estimates deviation
tails by naive and confinement-tilted Monte Carlo.
"""

__version__ = "0.1.0"

from .lattice import LatticeFunction, conjugate_exponent, p_norm, two_q_conjugate
from .model import (
    JumpLaw,
    ModelParams,
    TorusLaw,
    build_jump_law,
    dirichlet_form,
    free_symbol,
    project_to_torus,
)
from .walk import (
    ExponentialHorizon,
    FixedHorizon,
    LocalTimeField,
    PathSample,
    fold_field,
    local_times,
    mutual_intersection,
    silt,
    simulate_path,
)
from .green import (
    TorusGreen,
    check_green_lemmas,
    check_heat_kernel_bound,
    free_green_values,
    green_free,
    green_torus,
    heat_kernel_torus,
)
from .gaussian import eisenbaum_test, norm_concentration_probe, sample_field
from .variational import (
    VariationalResult,
    check_duality,
    check_m_scaling,
    dv_rate,
    solve_kappa,
    solve_rho,
    solve_rho1,
)
from .ldp import (
    DeviationSchedule,
    RateEstimate,
    classify_regime,
    estimate_naive,
    estimate_tilted,
    rate_curve,
)

__all__ = [
    "__version__",
    "LatticeFunction", "conjugate_exponent", "p_norm", "two_q_conjugate",
    "ModelParams", "JumpLaw", "TorusLaw", "build_jump_law", "project_to_torus",
    "free_symbol", "dirichlet_form",
    "FixedHorizon", "ExponentialHorizon", "PathSample", "LocalTimeField",
    "simulate_path", "local_times", "silt", "fold_field", "mutual_intersection",
    "TorusGreen", "green_torus", "heat_kernel_torus", "green_free",
    "free_green_values", "check_heat_kernel_bound", "check_green_lemmas",
    "sample_field", "eisenbaum_test", "norm_concentration_probe",
    "VariationalResult", "solve_rho1", "solve_rho", "solve_kappa",
    "check_duality", "check_m_scaling", "dv_rate",
    "DeviationSchedule", "RateEstimate", "estimate_naive", "estimate_tilted",
    "rate_curve", "classify_regime",
]
