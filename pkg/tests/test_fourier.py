"""European Fourier pricer tests.

Oracles: deterministic-spot degenerate case (exact discounting), an
independent classical-Heston semi-analytic pricer, and the Black-Scholes
formula for the deterministic-variance parameter corner, which is exact for
every kernel choice.
"""

import math

import numpy as np
import pytest

from oracles import black_scholes_put, classical_put

from voltheston.fourier import EuropeanSpec, european_price
from voltheston.kernels import (
    FractionalKernel,
    GeometricPartition,
    MultiExpKernel,
    build_multiexp,
)
from voltheston.params import HestonParams

PARAMS = HestonParams(v0=0.02, nu_bar=0.02, lam=0.3, eta=0.3, rho=-0.7, r=0.06, x0=math.log(100.0))
T = 0.5
CLASSICAL = MultiExpKernel.classical_heston()
KERNEL40 = build_multiexp(FractionalKernel(0.6), GeometricPartition(40, 4.4737))

# paper-parameter put at n = 40, S0 = K = 100, pinned by a step and
# quadrature refinement study (self-converged to ~5e-7)
PUT_N40_ATM = 2.3487840


class TestSpecValidation:
    def test_accepts(self):
        EuropeanSpec(100.0, 0.5)
        EuropeanSpec(1e-6, 10.0, "call")

    def test_rejects(self):
        with pytest.raises(ValueError):
            EuropeanSpec(0.0, 0.5)
        with pytest.raises(ValueError):
            EuropeanSpec(100.0, -0.5)
        with pytest.raises(ValueError):
            EuropeanSpec(100.0, 0.5, "straddle")
        with pytest.raises(ValueError):
            EuropeanSpec(math.nan, 0.5)


class TestDegenerateForward:
    def test_zero_variance_exact(self):
        p = HestonParams(0.0, 0.0, 0.3, 0.0, -0.7, 0.06, math.log(100.0))
        disc = math.exp(-0.03)
        for strike in (90.0, 100.0, 110.0):
            put, diag = european_price(p, CLASSICAL, EuropeanSpec(strike, T, "put"))
            call, _ = european_price(p, CLASSICAL, EuropeanSpec(strike, T, "call"))
            assert put == max(strike * disc - p.s0, 0.0)
            assert call == max(p.s0 - strike * disc, 0.0)
            assert diag.tail_estimate == 0.0 and not diag.truncated


class TestClassicalOracle:
    def test_atm_put(self):
        ref = classical_put(PARAMS, strike=100.0, maturity=T)
        price, diag = european_price(PARAMS, CLASSICAL, EuropeanSpec(100.0, T, "put"))
        assert abs(price - ref) < 1e-6
        assert not diag.truncated

    # deep out-of-the-money prices are tiny, so the relative tail
    # threshold fires even though absolute accuracy is excellent
    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_strike_sweep(self):
        for strike in (80.0, 95.0, 115.0):
            ref = classical_put(PARAMS, strike=strike, maturity=T)
            price, _ = european_price(PARAMS, CLASSICAL, EuropeanSpec(strike, T, "put"))
            assert abs(price - ref) < 1e-6


class TestDeterministicVarianceAnyKernel:
    def test_black_scholes_all_kernels(self):
        p = HestonParams(0.04, 0.04, 0.3, 0.0, -0.7, 0.06, math.log(100.0))
        kernels = (CLASSICAL, KERNEL40, FractionalKernel(0.6))
        for strike in (95.0, 110.0):
            ref = black_scholes_put(p.s0, strike, T, p.r, p.v0 * T)
            for kern in kernels:
                price, _ = european_price(p, kern, EuropeanSpec(strike, T, "put"))
                assert abs(price - ref) < 1e-6


class TestInvariants:
    def test_parity_machine_precision(self):
        call, diag = european_price(PARAMS, KERNEL40, EuropeanSpec(100.0, T, "call"))
        assert call == diag.call
        assert diag.call - diag.put == pytest.approx(
            PARAMS.s0 - 100.0 * math.exp(-PARAMS.r * T), abs=1e-12 * PARAMS.s0
        )

    # deep out-of-the-money prices are tiny, so the relative tail
    # threshold fires even though absolute accuracy is excellent
    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_put_monotone_in_spot_and_strike(self):
        spots = np.linspace(80.0, 120.0, 5)
        puts = []
        for s0 in spots:
            price, _ = european_price(
                PARAMS.with_spot(s0), CLASSICAL, EuropeanSpec(100.0, T, "put")
            )
            puts.append(price)
        assert all(a >= b for a, b in zip(puts, puts[1:]))
        strikes = np.linspace(80.0, 120.0, 5)
        puts = [
            european_price(PARAMS, CLASSICAL, EuropeanSpec(k, T, "put"))[0] for k in strikes
        ]
        assert all(a <= b for a, b in zip(puts, puts[1:]))

    # deep out-of-the-money prices are tiny, so the relative tail
    # threshold fires even though absolute accuracy is excellent
    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_no_arbitrage_bounds(self):
        disc = math.exp(-PARAMS.r * T)
        for strike in (70.0, 100.0, 140.0):
            put, _ = european_price(PARAMS, CLASSICAL, EuropeanSpec(strike, T, "put"))
            assert max(strike * disc - PARAMS.s0, 0.0) - 1e-8 <= put <= strike * disc + 1e-8

    def test_quadrature_doubling(self):
        base, _ = european_price(PARAMS, CLASSICAL, EuropeanSpec(100.0, T, "put"))
        fine, _ = european_price(
            PARAMS, CLASSICAL, EuropeanSpec(100.0, T, "put"), quad=(400.0, 4000)
        )
        assert abs(base - fine) < 1e-6

    def test_step_halving(self):
        base, _ = european_price(PARAMS, KERNEL40, EuropeanSpec(100.0, T, "put"))
        fine, _ = european_price(PARAMS, KERNEL40, EuropeanSpec(100.0, T, "put"), dt=T / 4000)
        assert abs(base - fine) < 1e-6
        assert base == pytest.approx(PUT_N40_ATM, abs=2e-6)

    def test_truncation_warning(self):
        with pytest.warns(RuntimeWarning, match="tail"):
            price, diag = european_price(
                PARAMS, CLASSICAL, EuropeanSpec(100.0, T, "put"), quad=(10.0, 200)
            )
        assert diag.truncated

    def test_bad_quadrature_rejected(self):
        with pytest.raises(ValueError):
            european_price(PARAMS, CLASSICAL, EuropeanSpec(100.0, T), quad=(0.0, 100))
        with pytest.raises(ValueError):
            european_price(PARAMS, CLASSICAL, EuropeanSpec(100.0, T), quad=(200.0, 0))
