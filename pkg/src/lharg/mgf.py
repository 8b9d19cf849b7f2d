"""Closed-form moment generating function of cumulative log-returns.

The conditional MGF E[exp(z * y_{t,T}) | F_t] is exponential-affine in the
22-lag state,

    mgf = exp( A + sum_i B_i RV[t+1-i] + sum_j C_j lev[t+1-j] ),

with coefficients obtained by a backward daily recursion from terminal
zeros.  One step evolves (A, B, C) through

    X   = (z - nu2)*lam + B_1 - nu1
          + ((z - nu2)^2/2 + g^2 C_1 - 2 C_1 g (z - nu2)) / (1 - 2 C_1)
    A  += z*r - log(1 - 2 C_1)/2 - delta*(w(X) - w(Y)) + d*(v(X) - v(Y))
    B_i = B_{i+1} + (v(X) - v(Y)) beta_i      (B_23 = 0)
    C_j = C_{j+1} + (v(X) - v(Y)) alpha_j

where v(x) = theta*x / (1 - theta*x) and w(x) = log(1 - x*theta) are the
noncentral-gamma moment transforms and Y = -nu2*lam - nu1 + nu2^2/2 is the
constant risk-premium tilt.  The physical measure is the special case
nu1 = nu2 = 0 (Y = 0); arbitrage-free risk-neutral premia have
nu2 = lam + 1/2, which makes mgf(1) = exp(r*T) hold identically.

The recursion is evaluated on the parabolic-leverage canonical form and
accepts complex z; the characteristic function is the MGF at z = i*u.
Coefficients are kept in a flat 45-slot vector (A, 22 B's, 22 C's) so the
backward loop is allocation-free, and evaluation is vectorized across a
whole z-grid in one pass.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    MappingSingularError,
    NumericalError,
    PoleError,
    RecursionDomainError,
)
from .model import (
    LagWeights,
    MarketState,
    ModelParams,
    N_LAGS,
    ParabolicForm,
    RiskPremia,
    expand_weights,
    parabolic_form,
    parabolic_state,
    stationary_state,
)

_NC = 1 + 2 * N_LAGS  # flat coefficient slots: A + 22 B + 22 C


@dataclass
class MgfCoefficients:
    """Backward-recursion coefficients, stored flat as [A, B_1..22, C_1..22]."""

    data: np.ndarray          # (45,) complex
    horizon_remaining: int    # days accumulated since the terminal date

    @classmethod
    def terminal(cls) -> "MgfCoefficients":
        return cls(data=np.zeros(_NC, dtype=complex), horizon_remaining=0)

    @property
    def a(self) -> complex:
        return self.data[0]

    @property
    def b(self) -> np.ndarray:
        return self.data[1:1 + N_LAGS]

    @property
    def c(self) -> np.ndarray:
        return self.data[1 + N_LAGS:]


def v(x, theta: float):
    """Noncentrality transform theta*x / (1 - theta*x) of the gamma MGF."""
    x = np.asarray(x)
    denom = 1.0 - theta * x
    if np.any(denom == 0.0):
        raise PoleError("v(x, theta) evaluated at its pole theta*x = 1")
    out = theta * x / denom
    return out if out.ndim else out[()]


def w(x, theta: float):
    """Shape transform log(1 - x*theta), principal branch."""
    x = np.asarray(x)
    arg = 1.0 - x * theta
    if np.any(arg == 0.0):
        raise PoleError("w(x, theta) evaluated at its branch point theta*x = 1")
    out = np.log(arg)
    return out if out.ndim else out[()]


def _guarded(values: np.ndarray, step: int, what: str) -> None:
    # Per-step branch guard: arguments of the logs must stay in the right
    # half-plane; raise instead of silently wrapping the branch.
    re = values.real if np.iscomplexobj(values) else values
    if not np.all(re > 0.0):
        raise RecursionDomainError(step, f"{what} left the right half-plane")
    if np.iscomplexobj(values):
        if not np.all(np.abs(np.angle(values)) < 0.5 * np.pi):
            raise RecursionDomainError(step, f"{what} violated |arg| < pi/2")


def _recurse(p: ParabolicForm, weights: LagWeights, z: np.ndarray, horizon: int,
             nu1: float = 0.0, nu2: float = 0.0, y_star: float = 0.0):
    """Run the backward recursion for a vector of z values.

    Returns (A, B, C) with shapes (n,), (n, 22), (n, 22).
    """
    if horizon < 1:
        raise NumericalError("horizon must be at least one day")
    theta, delta, d = p.theta, p.delta, p.d
    g = p.gamma_lev
    dtype = np.result_type(z.dtype, float)
    n = z.shape[0]
    A = np.zeros(n, dtype)
    B = np.zeros((n, N_LAGS), dtype)
    C = np.zeros((n, N_LAGS), dtype)

    if 1.0 - theta * y_star <= 0.0:
        raise MappingSingularError("theta * y_star >= 1 in the tilted recursion")
    v_y = theta * y_star / (1.0 - theta * y_star)
    w_y = np.log(1.0 - theta * y_star)

    zs = z - nu2
    zr = z * p.r
    for step in range(1, horizon + 1):
        C1 = C[:, 0]
        den = 1.0 - 2.0 * C1
        _guarded(den, step, "1 - 2*C_1")
        X = zs * p.lam + B[:, 0] - nu1 \
            + (0.5 * zs * zs + (g * g) * C1 - 2.0 * C1 * g * zs) / den
        one_minus = 1.0 - theta * X
        _guarded(one_minus, step, "1 - theta*X")
        v_x = theta * X / one_minus
        inc = v_x - v_y
        A += zr - 0.5 * np.log(den) - delta * (np.log(one_minus) - w_y) + d * inc
        B[:, :-1] = B[:, 1:]
        B[:, -1] = 0.0
        B += inc[:, None] * weights.beta
        C[:, :-1] = C[:, 1:]
        C[:, -1] = 0.0
        C += inc[:, None] * weights.alpha
    return A, B, C


def step_p(next_coeffs: MgfCoefficients, z: complex, params: ModelParams,
           weights: LagWeights | None = None) -> MgfCoefficients:
    """One backward step of the physical-measure recursion.

    `next_coeffs` holds the coefficients one day closer to maturity; the
    returned object has horizon_remaining incremented by one.
    """
    p = parabolic_form(params)
    if weights is None:
        weights = expand_weights(p)
    nc = next_coeffs.data
    C1 = nc[1 + N_LAGS]
    den = 1.0 - 2.0 * C1
    _guarded(np.asarray([den]), next_coeffs.horizon_remaining + 1, "1 - 2*C_1")
    g = p.gamma_lev
    X = z * p.lam + nc[1] + (0.5 * z * z + g * g * C1 - 2.0 * C1 * g * z) / den
    one_minus = 1.0 - p.theta * X
    _guarded(np.asarray([one_minus]), next_coeffs.horizon_remaining + 1,
             "1 - theta*X")
    v_x = p.theta * X / one_minus
    data = np.empty(_NC, dtype=complex)
    data[0] = nc[0] + z * p.r - 0.5 * np.log(den) \
        - p.delta * np.log(one_minus) + p.d * v_x
    data[1:N_LAGS] = nc[2:1 + N_LAGS]
    data[N_LAGS] = 0.0
    data[1:1 + N_LAGS] += v_x * weights.beta
    data[1 + N_LAGS:_NC - 1] = nc[2 + N_LAGS:]
    data[_NC - 1] = 0.0
    data[1 + N_LAGS:] += v_x * weights.alpha
    return MgfCoefficients(data=data,
                           horizon_remaining=next_coeffs.horizon_remaining + 1)


def _evaluate(params, state, z, horizon, nu1=0.0, nu2=0.0, y_star=0.0,
              log: bool = False):
    p = parabolic_form(params)
    st = parabolic_state(params, state if state is not None
                         else stationary_state(params))
    weights = expand_weights(p)
    z_arr = np.atleast_1d(np.asarray(z))
    scalar = np.ndim(z) == 0
    A, B, C = _recurse(p, weights, z_arr, horizon, nu1, nu2, y_star)
    expo = A + B @ st.rv + C @ st.lev
    out = expo if log else np.exp(expo)
    return out[0] if scalar else out


def mgf_p(params: ModelParams | ParabolicForm, state: MarketState | None,
          z, horizon: int):
    """MGF of the T-day cumulative log-return under the physical measure.

    z may be a scalar or array, real or complex; state=None starts from the
    stationary state.
    """
    return _evaluate(params, state, z, horizon)


def mgf_q(params: ModelParams | ParabolicForm, state: MarketState | None,
          premia: RiskPremia, z, horizon: int):
    """MGF under the risk-neutral measure induced by the pricing kernel.

    Runs the tilted recursion directly on the physical parameters; with
    arbitrage-free premia this equals the physical recursion evaluated on
    the risk-neutral-mapped parameters.
    """
    return _evaluate(params, state, z, horizon,
                     nu1=premia.nu1, nu2=premia.nu2, y_star=premia.y_star)


def log_mgf(params, state, z, horizon, measure: str = "P",
            premia: RiskPremia | None = None):
    """log E[exp(z y_{t,T})]; real-argument calls stay in real arithmetic."""
    if measure == "P":
        return _evaluate(params, state, z, horizon, log=True)
    if premia is None:
        raise NumericalError("risk-neutral log-MGF requires premia")
    return _evaluate(params, state, z, horizon, nu1=premia.nu1,
                     nu2=premia.nu2, y_star=premia.y_star, log=True)


class Cumulants(NamedTuple):
    mean: float
    variance: float
    skewness: float
    excess_kurtosis: float


# 4th-order central-difference stencils on the 7-point grid -3h..3h.
_STENCILS = np.array([
    [0.0, 1.0, -8.0, 0.0, 8.0, -1.0, 0.0],        # f'    * 12
    [0.0, -1.0, 16.0, -30.0, 16.0, -1.0, 0.0],    # f''   * 12
    [1.0, -8.0, 13.0, 0.0, -13.0, 8.0, -1.0],     # f'''  * 8
    [-1.0, 12.0, -39.0, 56.0, -39.0, 12.0, -1.0],  # f'''' * 6
])
_STENCIL_NORM = np.array([12.0, 12.0, 8.0, 6.0])


def _fd_cumulants(g_vals: np.ndarray, h: float) -> np.ndarray:
    powers = h ** np.arange(1, 5)
    return (_STENCILS @ g_vals) / (_STENCIL_NORM * powers)


def raw_cumulants(params, state, horizon: int, measure: str = "P",
                  premia: RiskPremia | None = None,
                  step_scale: float = 5e-2) -> np.ndarray:
    """First four cumulants of y_{t,T} by numerical differentiation.

    Central differences of the log-MGF on a real stencil with step
    h = step_scale * max(1, 1/sqrt(kappa2-guess)), refined by one Richardson
    extrapolation between h and h/2.  The default step sits on the wide
    accuracy plateau of the fourth cumulant: much smaller steps are
    roundoff-dominated there, while the truncation error only becomes
    visible beyond step scales of about 0.5.
    """
    st = state if state is not None else stationary_state(params)
    kappa2_guess = horizon * float(np.mean(st.rv))
    if not np.isfinite(kappa2_guess) or kappa2_guess <= 0.0:
        kappa2_guess = 1.0
    h = step_scale * max(1.0, 1.0 / np.sqrt(kappa2_guess))

    offsets = np.arange(-3, 4, dtype=float)
    grid = np.concatenate([h * offsets, 0.5 * h * offsets])
    g = log_mgf(params, st, grid, horizon, measure=measure, premia=premia)
    if not np.all(np.isfinite(g)):
        raise NumericalError("log-MGF non-finite on the differentiation stencil")
    coarse = _fd_cumulants(g[:7], h)
    fine = _fd_cumulants(g[7:], 0.5 * h)
    return (16.0 * fine - coarse) / 15.0


def cumulants(params, state, horizon: int, measure: str = "P",
              premia: RiskPremia | None = None) -> Cumulants:
    """Mean, variance, skewness, and excess kurtosis of the T-day log-return.

    state=None uses the stationary state of `params` (which requires the
    persistence to be below one).
    """
    k = raw_cumulants(params, state, horizon, measure=measure, premia=premia)
    if k[1] <= 0.0:
        raise NumericalError(f"nonpositive variance cumulant {k[1]:.3g}")
    return Cumulants(
        mean=k[0],
        variance=k[1],
        skewness=k[2] / k[1] ** 1.5,
        excess_kurtosis=k[3] / k[1] ** 2,
    )
