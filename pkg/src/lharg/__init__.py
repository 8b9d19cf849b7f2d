"""Heterogeneous autoregressive gamma realized-volatility models with leverage.

Estimation, closed-form MGF recursions under the physical and risk-neutral
measures, exact path simulation, and COS option pricing for the HARG,
P-LHARG, and ZM-LHARG model variants.
"""

from .errors import (
    CalibrationInfeasibleError,
    InversionDomainError,
    LhargError,
    LikelihoodDomainError,
    MappingSingularError,
    NumericalError,
    PoleError,
    RecursionDomainError,
    ValidationError,
)
from .model import (
    LagWeights,
    MarketState,
    ModelParams,
    N_LAGS,
    ParabolicForm,
    RiskPremia,
    check_positivity,
    conditional_covariance,
    expand_weights,
    filter_innovations,
    leverage,
    no_arbitrage_nu2,
    parabolic_form,
    parabolic_state,
    risk_neutral_map,
    risk_neutral_state,
    state_from_series,
    stationarity_margin,
    stationary_mean_rv,
    stationary_state,
    theta_noncentrality,
)
from .mgf import Cumulants, MgfCoefficients, cumulants, mgf_p, mgf_q, step_p
from .simulate import (
    PathSet,
    mc_mgf,
    sample_noncentral_gamma,
    simulate_paths,
    simulate_y_snapshots,
)

__version__ = "0.1.0"
