"""First-order asymptotic call price under the parabolic slow-factor model.

The price is assembled from three ingredients evaluated along the parabolic
arc z(t):

* ``Q0``   -- the classical call value at the effective volatility
  sigma_bar(z(t)), frozen pointwise at the valuation date;
* ``1+g``  -- a deterministic modification factor
  ``|kt - 2|^((a - 2r)/k) * exp((2r - a)/(k |kt - 2|)) / exp((2r - a) t / 2)``
  carrying the empirical constant ``a``;
* a first-order correction ``sqrt(epsilon) * time_factor * V * D1D2 Q0`` with
  ``time_factor = 2 [ (1/k) log((kT-2)/(kt-2)) + (T-t)/((kT-2)(kt-2)) ]`` and
  ``D1D2 = x d/dx (x^2 d^2/dx^2)``.

Combined: ``total = (1+g) * (Q0 + sqrt(epsilon) * time_factor * V * D1D2 Q0)``.

The modification factor does *not* tend to one at expiry, so the formula's own
t -> T limit disagrees with the payoff; valuation exactly at t = T therefore
short-circuits to the payoff.  The residual of the modified pricing operator
on the assembled P0 is likewise nonzero by construction and is exposed as a
diagnostic, not asserted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .averaging import AveragingCache, EffectiveParams, VolFunction, effective_params
from .black_scholes import BsInputs, bs_call_price, d1d2_call
from .errors import InputDomainError, LogDomainError, SingularTimeError
from .params import ModelParams, OptionSpec
from .slow_factor import SINGULAR_FLOOR, gamma_coefficient, parabolic_coefficients

__all__ = [
    "PriceBreakdown",
    "modification_factor",
    "p1_time_factor",
    "p0",
    "price_first_order",
    "p0_pde_residual",
]


def modification_factor(t: float, a: float, r: float, k: float, *, floor: float = SINGULAR_FLOOR) -> float:
    """Deterministic multiplier ``1+g`` applied to the classical price.

    Raises:
        SingularTimeError: when ``|k t - 2|`` is below ``floor``.
    """
    q = abs(k * t - 2.0)
    if q < floor:
        raise SingularTimeError(f"|k*t - 2| = {q:.3g} below floor {floor:g}")
    e = a - 2.0 * r
    return q ** (e / k) * math.exp(-e / (k * q)) * math.exp(e * t / 2.0)


def p1_time_factor(t: float, maturity: float, k: float, *, floor: float = SINGULAR_FLOOR) -> float:
    """Maturity-dependent coefficient of the first-order correction.

    ``2 [ (1/k) log((kT-2)/(kt-2)) + (T-t) / ((kT-2)(kt-2)) ]``; identically
    zero at t = T.

    Raises:
        SingularTimeError: if either denominator ``k t - 2`` / ``k T - 2`` is
            within ``floor`` of zero.
        LogDomainError: if the log argument is not positive (the valuation and
            maturity dates straddle the singular time 2/k).
    """
    dt_ = k * t - 2.0
    dT = k * maturity - 2.0
    if abs(dt_) < floor or abs(dT) < floor:
        raise SingularTimeError(f"|k*t - 2| = {abs(dt_):.3g}, |k*T - 2| = {abs(dT):.3g}; singular")
    ratio = dT / dt_
    if ratio <= 0.0:
        raise LogDomainError(f"(kT-2)/(kt-2) = {ratio:.3g} <= 0; t and T straddle 2/k")
    return 2.0 * (math.log(ratio) / k + (maturity - t) / (dT * dt_))


@dataclass(frozen=True)
class PriceBreakdown:
    """All components of the first-order price at one valuation date."""

    z: float
    sigma_bar: float
    q0: float
    mod_factor: float
    p0: float
    time_factor: float
    v: float
    d1d2: float
    correction: float
    total: float


def _require_regular_horizon(model: ModelParams, spec: OptionSpec) -> None:
    if model.k * spec.maturity >= 2.0 - SINGULAR_FLOOR:
        raise SingularTimeError(
            f"k * maturity = {model.k * spec.maturity:g} reaches the singular time 2/k; "
            "the correction's log form requires k * maturity < 2"
        )


def p0(spec: OptionSpec, model: ModelParams, eff: EffectiveParams) -> float:
    """Leading-order price: modification factor times the classical value."""
    _require_regular_horizon(model, spec)
    if spec.t == spec.maturity:
        return max(spec.spot - spec.strike, 0.0)
    q0 = bs_call_price(BsInputs(spec.spot, spec.strike, model.r, eff.sigma_bar, spec.tau))
    return modification_factor(spec.t, model.a, model.r, model.k) * q0


def price_first_order(
    spec: OptionSpec,
    model: ModelParams,
    vol: VolFunction,
    *,
    definition: str = "rms",
    cache: AveragingCache | None = None,
    assembly: str = "combined",
) -> PriceBreakdown:
    """First-order price with its full component breakdown.

    ``assembly`` selects the algebraically equivalent grouping used for the
    final sum: ``"combined"`` (default) computes
    ``mod * (q0 + sqrt(eps) * tf * V * dd)``; ``"split"`` computes
    ``mod * q0 + sqrt(eps) * tf * V * (mod * dd)``, i.e. the correction applied
    to the modified leading order.  Exposed for differential testing.
    """
    if assembly not in ("combined", "split"):
        raise InputDomainError(f"unknown assembly {assembly!r}")
    _require_regular_horizon(model, spec)

    if spec.t == spec.maturity:
        payoff = max(spec.spot - spec.strike, 0.0)
        return PriceBreakdown(
            z=parabolic_coefficients(model).value(spec.t),
            sigma_bar=math.nan,
            q0=payoff,
            mod_factor=modification_factor(spec.t, model.a, model.r, model.k),
            p0=payoff,
            time_factor=0.0,
            v=0.0,
            d1d2=0.0,
            correction=0.0,
            total=payoff,
        )

    z = float(parabolic_coefficients(model).value(spec.t))
    eff = effective_params(vol, z, model, definition=definition, cache=cache)
    inp = BsInputs(spec.spot, spec.strike, model.r, eff.sigma_bar, spec.tau)
    q0 = bs_call_price(inp)
    dd = d1d2_call(inp)
    tf = p1_time_factor(spec.t, spec.maturity, model.k)
    mod = modification_factor(spec.t, model.a, model.r, model.k)
    core = math.sqrt(model.epsilon) * tf * eff.v * dd
    if assembly == "combined":
        total = mod * (q0 + core)
    else:
        total = mod * q0 + math.sqrt(model.epsilon) * tf * eff.v * (mod * dd)
    p0_val = mod * q0
    return PriceBreakdown(
        z=z,
        sigma_bar=eff.sigma_bar,
        q0=q0,
        mod_factor=mod,
        p0=p0_val,
        time_factor=tf,
        v=eff.v,
        d1d2=dd,
        correction=total - p0_val,
        total=total,
    )


def p0_pde_residual(
    spec: OptionSpec,
    model: ModelParams,
    eff: EffectiveParams,
    *,
    force_gamma_zero: bool = False,
    force_mod_one: bool = False,
    dx_rel: float = 1e-4,
    dt_abs: float = 1e-5,
) -> float:
    """Residual of the modified pricing operator on P0, by central differences.

    Evaluates ``(1 + gamma) dP0/dt + 0.5 sigma_bar^2 x^2 d2P0/dx2 +
    r (x dP0/dx - P0)`` at the valuation point with sigma_bar frozen at the
    level carried by ``eff``, normalized by ``r * P0``.  Nonzero in general;
    with ``force_gamma_zero`` and ``force_mod_one`` the operator reduces to
    the classical one, for which the residual is a pure finite-difference
    error.

    Requires an interior valuation date ``0 < t < maturity``.
    """
    if not 0.0 < spec.t < spec.maturity:
        raise InputDomainError(f"need 0 < t < maturity for the residual, got t = {spec.t:g}")
    _require_regular_horizon(model, spec)

    sb = eff.sigma_bar

    def price(s: float, x: float) -> float:
        mod = 1.0 if force_mod_one else modification_factor(s, model.a, model.r, model.k)
        return mod * bs_call_price(BsInputs(x, spec.strike, model.r, sb, spec.maturity - s))

    gamma = 0.0 if force_gamma_zero else gamma_coefficient(model.k, spec.t)
    t, x = spec.t, spec.spot
    ht = min(dt_abs * max(1.0, spec.maturity), 0.45 * t, 0.45 * (spec.maturity - t))
    hx = dx_rel * x

    p_mid = price(t, x)
    dp_dt = (price(t + ht, x) - price(t - ht, x)) / (2.0 * ht)
    dp_dx = (price(t, x + hx) - price(t, x - hx)) / (2.0 * hx)
    d2p_dx2 = (price(t, x + hx) - 2.0 * p_mid + price(t, x - hx)) / (hx * hx)

    residual = (
        (1.0 + gamma) * dp_dt
        + 0.5 * sb * sb * x * x * d2p_dx2
        + model.r * (x * dp_dx - p_mid)
    )
    return residual / max(abs(model.r * p_mid), 1e-300)
