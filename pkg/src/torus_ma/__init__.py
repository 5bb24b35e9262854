"""Monge-Ampere equations on flat tori.

Variational solving of MA(phi) = e^{beta phi} mu0, sampling of the
beta-deformed permanental point processes whose empirical measures
concentrate on MA(phi*), the optimal-transport calculus (c-transforms,
Wasserstein costs, Kantorovich duality) behind the large-deviation rate
function, and numerical verification of the determinant-permanent and
theta-pushforward identities.
"""

from .ctransform import (
    CGradientField,
    c_gradient,
    c_transform,
    ma_hessian,
    ma_measure,
    project_cconvex,
    xi,
)
from .ensemble import (
    EnsembleSpec,
    c_potential,
    hamiltonian,
    lattice_points,
    log_permanent,
    wave_function,
)
from .errors import (
    BetaZero,
    EmptySampleSet,
    GridMismatch,
    InvalidInput,
    NegativeDeterminant,
    NegativeEntry,
    NewtonDivergence,
    NonErgodicWarning,
    NonFinite,
    OutOfWindow,
    OversizeMatrix,
    SizeMismatch,
    TorusMAError,
    UnsupportedMeasure,
    UnsupportedSize,
)
from .ma_solver import (
    F_functional,
    I_functional,
    SolveResult,
    UniquenessReport,
    gamma_density,
    geodesic,
    gibbs_measure,
    minimize_F,
    ode_oracle_1d,
    uniqueness_probe,
)
from .sampler import (
    ChainParams,
    SampleSet,
    empirical_measure,
    log_density_unnormalized,
    marginal_phi_exact,
    mcmc_sample,
    mean_empirical,
    mgf_zero_temp,
    transport_potential_estimate,
)
from .theta_bridge import (
    ThetaSpec,
    fourier_permanent,
    gram_identity,
    theta_constant_fit,
    theta_eval,
    theta_pushforward_check,
    verify_detperm,
)
from .torus_core import (
    DiscreteMeasure,
    GridField,
    cost,
    lift_eval,
    quadrature,
    torus_distance,
    wrap,
)
from .transport import (
    RateFunctionReport,
    config_distance,
    duality_gap,
    kantorovich_dual,
    rate_function,
    relative_entropy,
    wasserstein_cost,
)

__version__ = "0.1.0"
