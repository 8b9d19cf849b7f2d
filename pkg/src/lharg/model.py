"""Model parameters, market state, and measure-change machinery.

The family modeled here drives daily log-returns by

    y[t+1] = r + lam * RV[t+1] + sqrt(RV[t+1]) * eps[t+1],   eps iid N(0,1)

with realized variance conditionally noncentral gamma,

    RV[t+1] | F[t] ~ ncgamma(delta, Theta_t, theta),

whose noncentrality Theta_t aggregates 22 lags of past variance and
leverage through daily / weekly / monthly factors:

    Theta_t = d + sum_i beta_i RV[t+1-i] + sum_j alpha_j lev[t+1-j]

Three variants are supported:

    HARG      no leverage (all alphas zero),
    P-LHARG   parabolic leverage  (eps - gamma*sqrt(RV))^2,
    ZM-LHARG  zero-mean leverage  eps^2 - 1 - 2*eps*gamma*sqrt(RV).

The zero-mean variant reduces algebraically to the parabolic form with
d = -(alpha_d + alpha_w + alpha_m) and beta_l -> beta_l - alpha_l*gamma^2;
all numerical engines (MGF recursion, simulator, likelihood) work on that
canonical parabolic form.  Parabolic leverage values are invariant under
the measure change (the shift of the innovation exactly offsets the shift
of gamma), so no state conversion is needed for parabolic variants; the
zero-mean *view* depends on gamma and is converted explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import MappingSingularError, ValidationError

N_LAGS = 22
WEEKLY_LAGS = 4     # lags 2..5 share beta_w / 4
MONTHLY_LAGS = 17   # lags 6..22 share beta_m / 17

VARIANTS = ("HARG", "P-LHARG", "ZM-LHARG")


@dataclass(frozen=True)
class ModelParams:
    """Full parameter set of one model variant.

    Units are daily and decimal throughout: theta and r in daily decimal
    variance / rate units, beta loadings in 1/variance, gamma_lev in
    1/volatility, lam (market price of risk) in 1/variance.
    """

    variant: str
    theta: float        # gamma scale
    delta: float        # gamma shape
    d: float            # noncentrality constant (0 for all stored variants)
    beta_d: float
    beta_w: float
    beta_m: float
    alpha_d: float
    alpha_w: float
    alpha_m: float
    gamma_lev: float    # leverage asymmetry
    lam: float          # market price of risk
    r: float            # daily risk-free rate

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}")
        if not (self.theta > 0 and self.delta > 0):
            raise ValidationError("theta and delta must be strictly positive")
        alphas = (self.alpha_d, self.alpha_w, self.alpha_m)
        betas = (self.beta_d, self.beta_w, self.beta_m)
        if self.variant == "HARG":
            if any(a != 0.0 for a in alphas) or self.d != 0.0:
                raise ValidationError("HARG requires all alphas = 0 and d = 0")
        elif self.variant == "P-LHARG":
            if self.d != 0.0:
                raise ValidationError("P-LHARG requires d = 0")
            if any(a < 0.0 for a in alphas) or any(b < 0.0 for b in betas):
                raise ValidationError(
                    "P-LHARG requires nonnegative alphas and betas"
                )
        else:  # ZM-LHARG is stored in its native (beta, alpha, gamma) form
            if self.d != 0.0:
                raise ValidationError("ZM-LHARG native form carries no constant")

    @property
    def is_zero_mean(self) -> bool:
        return self.variant == "ZM-LHARG"


@dataclass(frozen=True)
class ParabolicForm:
    """Canonical parabolic-leverage parameterization used by the engines.

    Identical fields as ModelParams minus the variant tag; d may be
    negative here (the zero-mean reduction has d = -sum(alpha)).
    """

    theta: float
    delta: float
    d: float
    beta_d: float
    beta_w: float
    beta_m: float
    alpha_d: float
    alpha_w: float
    alpha_m: float
    gamma_lev: float
    lam: float
    r: float


@dataclass(frozen=True)
class LagWeights:
    """Per-lag weights of the 22-lag expansion of the heterogeneous factors."""

    beta: np.ndarray   # (22,), beta[0] pairs with today's RV
    alpha: np.ndarray  # (22,)

    def __post_init__(self):
        if len(self.beta) != N_LAGS or len(self.alpha) != N_LAGS:
            raise ValidationError("lag weights must have exactly 22 entries")


@dataclass(frozen=True)
class MarketState:
    """The 22 most recent daily realized variances and leverage values.

    Index 0 is today; index i is i days ago.  Leverage entries follow the
    variant convention of the parameters they are paired with (parabolic
    values for HARG / P-LHARG, zero-mean values for ZM-LHARG).
    """

    rv: np.ndarray   # (22,)
    lev: np.ndarray  # (22,)

    def __post_init__(self):
        rv = np.asarray(self.rv, dtype=float)
        lev = np.asarray(self.lev, dtype=float)
        if rv.shape != (N_LAGS,) or lev.shape != (N_LAGS,):
            raise ValidationError(
                f"state requires exactly {N_LAGS} lags of rv and leverage; "
                "shorter histories are rejected rather than zero-padded"
            )
        if np.any(rv < 0.0):
            raise ValidationError("realized variances must be nonnegative")
        object.__setattr__(self, "rv", rv)
        object.__setattr__(self, "lev", lev)


@dataclass(frozen=True)
class RiskPremia:
    """Variance premium nu1 and equity premium nu2 of the pricing kernel.

    y_star = -nu2*lam - nu1 + nu2^2/2 is fixed at construction so the
    parameter map and the MGF recursion share one value.  Arbitrage-free
    premia satisfy nu2 = lam + 1/2 exactly, for which y_star collapses to
    -lam^2/2 - nu1 + 1/8.
    """

    nu1: float
    nu2: float
    y_star: float

    @classmethod
    def arbitrage_free(cls, nu1: float, lam: float) -> "RiskPremia":
        nu2 = no_arbitrage_nu2(lam)
        return cls(nu1=nu1, nu2=nu2, y_star=-0.5 * lam**2 - nu1 + 0.125)

    @classmethod
    def general(cls, nu1: float, nu2: float, lam: float) -> "RiskPremia":
        return cls(nu1=nu1, nu2=nu2, y_star=-nu2 * lam - nu1 + 0.5 * nu2**2)

    def is_arbitrage_free(self, lam: float) -> bool:
        return self.nu2 == lam + 0.5


def no_arbitrage_nu2(lam: float) -> float:
    """Equity premium forced by the no-arbitrage restriction: nu2 = lam + 1/2."""
    return lam + 0.5


def parabolic_form(params: ModelParams | ParabolicForm) -> ParabolicForm:
    """Reduce params to the canonical parabolic-leverage parameterization.

    HARG and P-LHARG pass through unchanged; the zero-mean variant maps to
    d = -sum(alpha), beta_l -> beta_l - alpha_l * gamma^2.
    """
    if isinstance(params, ParabolicForm):
        return params
    if not params.is_zero_mean:
        return ParabolicForm(
            theta=params.theta, delta=params.delta, d=params.d,
            beta_d=params.beta_d, beta_w=params.beta_w, beta_m=params.beta_m,
            alpha_d=params.alpha_d, alpha_w=params.alpha_w, alpha_m=params.alpha_m,
            gamma_lev=params.gamma_lev, lam=params.lam, r=params.r,
        )
    g2 = params.gamma_lev**2
    return ParabolicForm(
        theta=params.theta, delta=params.delta,
        d=-(params.alpha_d + params.alpha_w + params.alpha_m),
        beta_d=params.beta_d - params.alpha_d * g2,
        beta_w=params.beta_w - params.alpha_w * g2,
        beta_m=params.beta_m - params.alpha_m * g2,
        alpha_d=params.alpha_d, alpha_w=params.alpha_w, alpha_m=params.alpha_m,
        gamma_lev=params.gamma_lev, lam=params.lam, r=params.r,
    )


def parabolic_state(params: ModelParams | ParabolicForm,
                    state: MarketState) -> MarketState:
    """Express the state's leverage lags as (measure-invariant) parabolic values.

    For the zero-mean view, lev_parabolic = lev_zm + gamma^2 * rv + 1.
    """
    if isinstance(params, ParabolicForm) or not params.is_zero_mean:
        return state
    g2 = params.gamma_lev**2
    return MarketState(rv=state.rv, lev=state.lev + g2 * state.rv + 1.0)


def expand_weights(params: ModelParams | ParabolicForm) -> LagWeights:
    """Spread the daily/weekly/monthly loadings over the 22 individual lags.

    Lag 1 carries the daily loading, lags 2-5 share the weekly loading in
    four equal parts, lags 6-22 share the monthly loading in seventeen.
    """
    beta = np.empty(N_LAGS)
    alpha = np.empty(N_LAGS)
    beta[0] = params.beta_d
    beta[1:5] = params.beta_w / WEEKLY_LAGS
    beta[5:] = params.beta_m / MONTHLY_LAGS
    alpha[0] = params.alpha_d
    alpha[1:5] = params.alpha_w / WEEKLY_LAGS
    alpha[5:] = params.alpha_m / MONTHLY_LAGS
    return LagWeights(beta=beta, alpha=alpha)


def leverage(eps, rv, gamma_lev: float, variant: str):
    """Daily leverage value for the given innovation and variance.

    Parabolic (HARG, P-LHARG): (eps - gamma*sqrt(rv))^2.
    Zero-mean (ZM-LHARG):      eps^2 - 1 - 2*eps*gamma*sqrt(rv).

    Accepts scalars or arrays; negative rv is a domain error.
    """
    if variant not in VARIANTS:
        raise ValidationError(f"unknown variant {variant!r}")
    rv = np.asarray(rv, dtype=float)
    if np.any(rv < 0.0):
        raise ValidationError("leverage requires nonnegative realized variance")
    vol = np.sqrt(rv)
    if variant == "ZM-LHARG":
        out = eps**2 - 1.0 - 2.0 * eps * gamma_lev * vol
    else:
        out = (eps - gamma_lev * vol) ** 2
    return out if out.ndim else float(out)


def theta_noncentrality(params: ModelParams | ParabolicForm,
                        weights: LagWeights, state: MarketState) -> float:
    """Noncentrality of tomorrow's variance draw given the current 22-lag state.

    The leverage entries of `state` must follow the convention of `params`.
    May be negative for the zero-mean variant; negativity is reported by the
    callers that cannot tolerate it, not here.
    """
    return float(params.d + weights.beta @ state.rv + weights.alpha @ state.lev)


def stationarity_margin(params: ModelParams | ParabolicForm) -> float:
    """Persistence theta * (sum(beta) + gamma^2 * sum(alpha)) of the variance process.

    Computed on the parabolic reduction; the process is stationary iff the
    returned value is below one.
    """
    p = parabolic_form(params)
    sb = p.beta_d + p.beta_w + p.beta_m
    sa = p.alpha_d + p.alpha_w + p.alpha_m
    return p.theta * (sb + p.gamma_lev**2 * sa)


def check_positivity(params: ModelParams | ParabolicForm) -> bool:
    """Whether the noncentrality is nonnegative for every admissible state.

    Evaluated on the parameterization actually fed to the gamma draw, i.e.
    the parabolic reduction: requires d >= 0 and every expanded lag weight
    >= 0.  The zero-mean variant fails by construction (d = -sum(alpha)).
    """
    p = parabolic_form(params)
    w = expand_weights(p)
    return bool(p.d >= 0.0 and np.all(w.beta >= 0.0) and np.all(w.alpha >= 0.0))


def risk_neutral_map(params: ModelParams, nu1: float) -> ModelParams:
    """Map physical parameters into the equivalent risk-neutral dynamics.

    With y_star = -lam^2/2 - nu1 + 1/8 and c = 1 - theta*y_star, the scale
    parameters rescale by 1/c (theta, betas, alphas, d), the shape delta is
    unchanged, gamma picks up the full premium shift gamma + lam + 1/2, and
    the mapped market price of risk is exactly -1/2.

    The zero-mean variant is mapped through its parabolic reduction and
    re-expressed natively under the shifted gamma (the reduction constant
    -sum(alpha) rescales consistently, so the native form is preserved).
    """
    c = _q_scale(params.theta, params.lam, nu1)
    g_star = params.gamma_lev + params.lam + 0.5
    if params.is_zero_mean:
        g2 = params.gamma_lev**2
        gs2 = g_star**2

        def nat(beta, alpha):
            return (beta - alpha * g2) / c + (alpha / c) * gs2

        return replace(
            params,
            theta=params.theta / c,
            beta_d=nat(params.beta_d, params.alpha_d),
            beta_w=nat(params.beta_w, params.alpha_w),
            beta_m=nat(params.beta_m, params.alpha_m),
            alpha_d=params.alpha_d / c,
            alpha_w=params.alpha_w / c,
            alpha_m=params.alpha_m / c,
            gamma_lev=g_star,
            lam=-0.5,
        )
    return replace(
        params,
        theta=params.theta / c,
        d=params.d / c,
        beta_d=params.beta_d / c,
        beta_w=params.beta_w / c,
        beta_m=params.beta_m / c,
        alpha_d=params.alpha_d / c,
        alpha_w=params.alpha_w / c,
        alpha_m=params.alpha_m / c,
        gamma_lev=g_star,
        lam=-0.5,
    )


def risk_neutral_parabolic(pform: ParabolicForm, premia: RiskPremia) -> ParabolicForm:
    """Parabolic-form counterpart of risk_neutral_map for arbitrary premia."""
    c = 1.0 - pform.theta * premia.y_star
    if c <= 0.0:
        raise MappingSingularError(
            f"theta * y_star = {pform.theta * premia.y_star:.6g} >= 1"
        )
    return ParabolicForm(
        theta=pform.theta / c, delta=pform.delta, d=pform.d / c,
        beta_d=pform.beta_d / c, beta_w=pform.beta_w / c, beta_m=pform.beta_m / c,
        alpha_d=pform.alpha_d / c, alpha_w=pform.alpha_w / c, alpha_m=pform.alpha_m / c,
        gamma_lev=pform.gamma_lev + pform.lam + 0.5, lam=-0.5, r=pform.r,
    )


def risk_neutral_state(params: ModelParams, state: MarketState) -> MarketState:
    """Re-express the state's leverage lags under the mapped gamma.

    Parabolic leverage values are measure-invariant, so HARG and P-LHARG
    states pass through unchanged.  The zero-mean view depends on gamma:
    the invariant parabolic values are recovered with the physical gamma
    and re-projected with gamma* = gamma + lam + 1/2.
    """
    if not params.is_zero_mean:
        return state
    lev_par = parabolic_state(params, state).lev
    g_star = params.gamma_lev + params.lam + 0.5
    return MarketState(rv=state.rv, lev=lev_par - g_star**2 * state.rv - 1.0)


def _q_scale(theta: float, lam: float, nu1: float) -> float:
    y_star = -0.5 * lam**2 - nu1 + 0.125
    c = 1.0 - theta * y_star
    if c <= 0.0:
        raise MappingSingularError(
            f"theta * y_star = {theta * y_star:.6g} >= 1; "
            "risk-neutral scale undefined"
        )
    return c


def filter_innovations(returns, rv, r: float, lam: float) -> np.ndarray:
    """Recover the standard-normal innovations from returns and variances.

    Inverts the return equation: eps_t = (y_t - r - lam*rv_t) / sqrt(rv_t).
    """
    y = np.asarray(returns, dtype=float)
    rv = np.asarray(rv, dtype=float)
    if y.shape != rv.shape:
        raise ValidationError("returns and rv series must be aligned")
    bad = np.flatnonzero(rv <= 0.0)
    if bad.size:
        raise ValidationError(
            f"degenerate variance at index {bad[0]}: rv = {rv[bad[0]]:.6g}"
        )
    return (y - r - lam * rv) / np.sqrt(rv)


def conditional_covariance(params: ModelParams | ParabolicForm,
                           state: MarketState) -> float:
    """One-step-ahead covariance between today's return and tomorrow's variance.

    Cov(y_t, RV_{t+1} | F_{t-1}) = -2 theta^2 alpha_d gamma (delta + Theta),
    negative whenever the daily leverage loading and gamma are positive.
    """
    p = parabolic_form(params)
    th = theta_noncentrality(p, expand_weights(p), parabolic_state(params, state))
    return -2.0 * p.theta**2 * p.alpha_d * p.gamma_lev * (p.delta + th)


def stationary_mean_rv(params: ModelParams | ParabolicForm) -> float:
    """Unconditional mean of the variance process.

    Solves E[RV] = theta * (delta + d + sum(beta) E[RV] + sum(alpha) E[lev])
    with E[lev] = 1 + gamma^2 E[RV] for the parabolic kernel; the zero-mean
    reduction gives the same fixed point with E[lev_zm] = 0.
    """
    p = parabolic_form(params)
    margin = stationarity_margin(p)
    if margin >= 1.0:
        raise ValidationError(f"persistence {margin:.4f} >= 1: no stationary mean")
    sa = p.alpha_d + p.alpha_w + p.alpha_m
    return p.theta * (p.delta + p.d + sa) / (1.0 - margin)


def stationary_state(params: ModelParams | ParabolicForm) -> MarketState:
    """State with every lag pinned at its unconditional mean.

    Leverage lags are set to E[lev] in the convention of `params`: zero for
    the zero-mean view, 1 + gamma^2 E[RV] for the parabolic one.
    """
    m = stationary_mean_rv(params)
    zero_mean = isinstance(params, ModelParams) and params.is_zero_mean
    lev_mean = 0.0 if zero_mean else 1.0 + params.gamma_lev**2 * m
    return MarketState(rv=np.full(N_LAGS, m), lev=np.full(N_LAGS, lev_mean))


def state_from_series(params: ModelParams, rv, returns) -> MarketState:
    """Build today's 22-lag state from the tail of aligned RV/return series.

    Innovations are filtered with the model's own lam; requires at least
    22 observations (no implicit padding).
    """
    rv = np.asarray(rv, dtype=float)
    y = np.asarray(returns, dtype=float)
    if rv.shape != y.shape:
        raise ValidationError("rv and returns series must be aligned")
    if rv.size < N_LAGS:
        raise ValidationError(
            f"need at least {N_LAGS} observations to form a state, got {rv.size}"
        )
    tail_rv = rv[-N_LAGS:]
    tail_y = y[-N_LAGS:]
    eps = filter_innovations(tail_y, tail_rv, params.r, params.lam)
    lev = leverage(eps, tail_rv, params.gamma_lev, params.variant)
    # index 0 = today: reverse the chronological tail
    return MarketState(rv=tail_rv[::-1].copy(), lev=np.asarray(lev)[::-1].copy())
