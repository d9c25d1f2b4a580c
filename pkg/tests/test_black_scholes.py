"""Call pricing checked against direct lognormal quadrature, greeks against
finite differences, and the x d/dx (x^2 d^2/dx^2) operator against nested
differencing of the price itself."""
import math

import numpy as np
import pytest
from scipy.integrate import quad

from parabolic_sv import BsInputs, InputDomainError, bs_call_price, bs_greeks, d1d2_call
from parabolic_sv.black_scholes import norm_pdf


def call_by_quadrature(spot, strike, rate, sigma, tau):
    """Discounted payoff integrated against the terminal lognormal law."""
    st = sigma * math.sqrt(tau)
    drift = (rate - 0.5 * sigma**2) * tau
    u_star = (math.log(strike / spot) - drift) / st  # exercise boundary

    def integrand(u):
        return (spot * math.exp(drift + st * u) - strike) * norm_pdf(u)

    # the integrand is negligible a few sigmas past max(u_star, st)
    hi = max(u_star, st) + 14.0
    val, est_err = quad(integrand, u_star, hi, limit=300, epsabs=1e-12, epsrel=1e-12)
    assert est_err < 1e-9
    return math.exp(-rate * tau) * val


def price(spot, strike, rate, sigma, tau):
    return bs_call_price(BsInputs(spot, strike, rate, sigma, tau))


def spot_step(spot, sigma, tau):
    # the price profile varies on the scale spot * sigma * sqrt(tau), so
    # differencing steps must shrink with it to keep the truncation error down
    return 1e-3 * spot * min(max(sigma * math.sqrt(tau), 1e-2), 1.0)


def diff4(f, x, h):
    """Fourth-order central first derivative."""
    return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h)


def diff4_second(f, x, h):
    """Fourth-order central second derivative."""
    return (
        -f(x + 2 * h) + 16 * f(x + h) - 30 * f(x) + 16 * f(x - h) - f(x - 2 * h)
    ) / (12 * h * h)


class TestPrice:
    def test_frozen_at_the_money_value(self):
        assert price(100.0, 100.0, 0.0264, 0.2, 0.5) == pytest.approx(
            6.2802357505251, abs=1e-10
        )

    def test_against_quadrature_grid(self):
        spots = [80.0, 90.0, 100.0, 110.0, 125.0]
        strikes = [70.0, 90.0, 100.0, 105.0, 120.0]
        regimes = [(0.2, 0.5), (0.45, 1.5), (0.08, 0.1)]
        for sigma, tau in regimes:
            for x in spots:
                for k in strikes:
                    want = call_by_quadrature(x, k, 0.0264, sigma, tau)
                    assert price(x, k, 0.0264, sigma, tau) == pytest.approx(
                        want, abs=1e-8
                    ), (x, k, sigma, tau)

    def test_zero_tau_is_intrinsic(self):
        assert price(105.0, 100.0, 0.0264, 0.2, 0.0) == 5.0
        assert price(95.0, 100.0, 0.0264, 0.2, 0.0) == 0.0

    def test_zero_sigma_is_forward_intrinsic(self):
        assert price(100.0, 100.0, 0.0264, 0.0, 1.0) == pytest.approx(
            2.60545664907, abs=1e-9
        )
        assert price(50.0, 100.0, 0.0264, 0.0, 1.0) == 0.0

    def test_monotonicity_weak_everywhere(self):
        # far from the money the sigma/tau sensitivities underflow, so only
        # weak ordering can hold in floating point
        rng = np.random.default_rng(23)
        for _ in range(100):
            x = rng.uniform(50.0, 150.0)
            k = rng.uniform(50.0, 150.0)
            r = rng.uniform(0.0, 0.08)
            sig = rng.uniform(0.05, 0.8)
            tau = rng.uniform(0.05, 2.0)
            base = price(x, k, r, sig, tau)
            assert price(x * 1.01, k, r, sig, tau) > base
            assert price(x, k * 1.01, r, sig, tau) < base
            assert price(x, k, r, sig * 1.01, tau) >= base
            assert price(x, k, r, sig, tau * 1.01) >= base  # r >= 0

    def test_monotonicity_strict_near_the_money(self):
        rng = np.random.default_rng(27)
        for _ in range(100):
            x = rng.uniform(50.0, 150.0)
            k = x * rng.uniform(0.9, 1.1)
            r = rng.uniform(0.0, 0.08)
            sig = rng.uniform(0.15, 0.8)
            tau = rng.uniform(0.25, 2.0)
            base = price(x, k, r, sig, tau)
            assert price(x, k, r, sig * 1.01, tau) > base
            assert price(x, k, r, sig, tau * 1.01) > base

    def test_arbitrage_bounds(self):
        rng = np.random.default_rng(29)
        for _ in range(100):
            x = rng.uniform(50.0, 150.0)
            k = rng.uniform(50.0, 150.0)
            r = rng.uniform(0.0, 0.08)
            sig = rng.uniform(0.05, 0.8)
            tau = rng.uniform(0.05, 2.0)
            c = price(x, k, r, sig, tau)
            assert max(x - k * math.exp(-r * tau), 0.0) <= c <= x

    @pytest.mark.parametrize(
        "kw",
        [
            dict(spot=0.0, strike=100.0, rate=0.0, sigma=0.2, tau=1.0),
            dict(spot=100.0, strike=-5.0, rate=0.0, sigma=0.2, tau=1.0),
            dict(spot=100.0, strike=100.0, rate=0.0, sigma=-0.2, tau=1.0),
            dict(spot=100.0, strike=100.0, rate=0.0, sigma=0.2, tau=-1.0),
            dict(spot=math.nan, strike=100.0, rate=0.0, sigma=0.2, tau=1.0),
        ],
    )
    def test_bad_inputs_rejected(self, kw):
        with pytest.raises(InputDomainError):
            BsInputs(**kw)


class TestGreeks:
    def test_match_finite_differences(self):
        for x in (90.0, 100.0, 115.0):
            for r in (0.0, 0.0264):
                for sig in (0.05, 0.3, 0.8):
                    for tau in (0.05, 0.5, 2.0):
                        g = bs_greeks(BsInputs(x, 100.0, r, sig, tau))
                        ctx = (x, r, sig, tau)
                        hx = spot_step(x, sig, tau)

                        fd_delta = diff4(lambda s: price(s, 100.0, r, sig, tau), x, hx)
                        # second differences divide by h^2, so the roundoff
                        # floor needs a larger step than the first derivative
                        fd_gamma = diff4_second(
                            lambda s: price(s, 100.0, r, sig, tau), x, 10.0 * hx
                        )
                        fd_vega = diff4(
                            lambda s_: price(x, 100.0, r, s_, tau), sig, 1e-4 * sig
                        )
                        # calendar theta: derivative in the valuation date, so
                        # a positive bump in t shortens tau
                        fd_theta = diff4(
                            lambda dt: price(x, 100.0, r, sig, tau - dt), 0.0, 1e-4 * tau
                        )

                        for got, want in (
                            (g.delta, fd_delta),
                            (g.gamma, fd_gamma),
                            (g.vega, fd_vega),
                            (g.theta, fd_theta),
                        ):
                            # 1e-10 absolute floor: differencing the O(10)
                            # price cannot resolve smaller magnitudes
                            assert abs(got - want) <= 1e-6 * abs(want) + 1e-10, ctx

    def test_degenerate_inputs_rejected(self):
        with pytest.raises(InputDomainError):
            bs_greeks(BsInputs(100.0, 100.0, 0.0264, 0.0, 1.0))
        with pytest.raises(InputDomainError):
            bs_greeks(BsInputs(100.0, 100.0, 0.0264, 0.2, 0.0))


class TestOperatorD1D2:
    def test_frozen_at_the_money_value(self):
        got = d1d2_call(BsInputs(100.0, 100.0, 0.0264, 0.2, 0.5))
        assert got == pytest.approx(-44.531895790019, rel=1e-10)

    def test_matches_nested_differencing(self):
        # x d/dx of g(x) = x^2 d^2 price/dx^2, both layers by central steps
        for x in (90.0, 100.0, 110.0):
            for sig in (0.15, 0.3):
                for tau in (0.25, 1.0):

                    def squared_curvature(s):
                        h = spot_step(s, sig, tau)
                        c = lambda v: price(v, 100.0, 0.0264, sig, tau)
                        return s * s * (c(s + h) - 2 * c(s) + c(s - h)) / (h * h)

                    h_out = spot_step(x, sig, tau)
                    fd = x * (squared_curvature(x + h_out) - squared_curvature(x - h_out)) / (
                        2 * h_out
                    )
                    got = d1d2_call(BsInputs(x, 100.0, 0.0264, sig, tau))
                    if abs(got) > 1e-8:
                        assert got == pytest.approx(fd, rel=1e-4), (x, sig, tau)

    def test_degenerate_inputs_rejected(self):
        with pytest.raises(InputDomainError):
            d1d2_call(BsInputs(100.0, 100.0, 0.0264, 0.0, 1.0))
        with pytest.raises(InputDomainError):
            d1d2_call(BsInputs(100.0, 100.0, 0.0264, 0.2, 0.0))
