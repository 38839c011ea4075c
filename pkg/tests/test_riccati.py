"""Riccati solver and transform tests.

Oracles: the classical model's closed-form exponent (autonomous Riccati) and
characteristic function, the Mittag-Leffler series solution of the linear
eta = 0 equation, the Black-Scholes transform for deterministic variance,
and small-time asymptotics.  The two solvers also cross-check each other.
"""

import math

import numpy as np
import pytest

from oracles import classical_cf, classical_psi

from voltheston.errors import BlowUpError
from voltheston.kernels import (
    FractionalKernel,
    GeometricPartition,
    MultiExpKernel,
    build_multiexp,
)
from voltheston.params import HestonParams
from voltheston.riccati import (
    PsiSolution,
    TransformQuery,
    adjusted_forward_curve,
    conditional_transform,
    laplace_transform_t0,
    riccati_rhs,
    solve_psi_fractional,
    solve_psi_lifted,
)

PARAMS = HestonParams(v0=0.02, nu_bar=0.02, lam=0.3, eta=0.3, rho=-0.7, r=0.06, x0=math.log(100.0))
T = 0.5
CLASSICAL = MultiExpKernel.classical_heston()
KERNEL06 = FractionalKernel(0.6)
BENCH = [(4, 50.5458), (10, 18.0548), (20, 8.8750), (40, 4.4737), (200, 1.6946)]


def approx_n(n: int) -> MultiExpKernel:
    ratio = dict((a, b) for a, b in BENCH)[n]
    return build_multiexp(KERNEL06, GeometricPartition(n, ratio))


class TestRhs:
    def test_zero_at_w01(self):
        assert riccati_rhs(PARAMS, 0.0, 0.0) == 0.0
        assert riccati_rhs(PARAMS, 1.0, 0.0) == 0.0

    def test_pure_imaginary_seed(self):
        assert riccati_rhs(PARAMS, 1j, 0.0) == pytest.approx(-0.5 - 0.5j, abs=0.0)

    def test_vectorised(self):
        p = np.array([0.0, 0.1j, -0.2 + 0.3j])
        out = riccati_rhs(PARAMS, 1j, p)
        assert out.shape == p.shape
        for i, pi in enumerate(p):
            assert out[i] == riccati_rhs(PARAMS, 1j, pi)


class TestTransformQuery:
    def test_strip_enforced(self):
        TransformQuery.pure(1.0, T)
        TransformQuery.pure(0.0, T)
        TransformQuery.pure(0.5 + 7j, T)
        for bad in (1.2, -0.1, 1.0 + 1e-9):
            with pytest.raises(ValueError):
                TransformQuery.pure(bad, T)

    def test_h_validation(self):
        TransformQuery(1j, T, (0.0, 1.0), (-1.0 + 0.5j,))
        with pytest.raises(ValueError):
            TransformQuery(1j, T, (0.0, 1.0), (0.5,))  # positive real part
        with pytest.raises(ValueError):
            TransformQuery(1j, T, (1.0, 0.5), (-1.0,))  # decreasing breaks
        with pytest.raises(ValueError):
            TransformQuery(1j, T, (0.0, 1.0, 2.0), (-1.0,))  # length mismatch
        with pytest.raises(ValueError):
            TransformQuery.pure(1j, 0.0)

    def test_value_equality(self):
        a = TransformQuery(1j, T, (0.0, 1.0), (-1.0,))
        b = TransformQuery(1j, T, (0.0, 1.0), (-1.0,))
        assert a == b and a.is_pure is False


class TestLiftedSolver:
    def test_classical_closed_form(self):
        for w, tol in ((1j, 1e-5), (0.5 + 2j, 5e-5)):
            sol = solve_psi_lifted(PARAMS, CLASSICAL, TransformQuery.pure(w, T), dt=5e-5)
            ref = classical_psi(PARAMS, w, sol.times)
            assert np.max(np.abs(sol.values - ref)) < tol

    def test_w0_w1_identically_zero(self):
        for w in (0.0, 1.0):
            sol = solve_psi_lifted(PARAMS, approx_n(10), TransformQuery.pure(w, T), dt=1e-3)
            assert np.all(sol.values == 0.0)

    def test_factor_decomposition(self):
        q = TransformQuery(1j, T, (0.0, 0.4, 1.0), (-0.5, -2.0 + 1j))
        approx = approx_n(10)
        sol = solve_psi_lifted(PARAMS, approx, q, dt=1e-3)
        recon = approx.weights @ sol.factors
        np.testing.assert_allclose(recon, sol.values, rtol=1e-13, atol=1e-16)

    def test_initial_value_matches_h_integral(self):
        q = TransformQuery(0.5, T, (0.0, 0.4, 1.0), (-0.5, -2.0))
        approx = approx_n(4)
        sol = solve_psi_lifted(PARAMS, approx, q, dt=1e-3)
        # psi(0) = int h(xi) K_n(xi) dxi, by quadrature
        from scipy import integrate

        ref = 0.0
        for j, val in enumerate(q.h_values):
            piece, _ = integrate.quad(lambda s: float(approx(s)), q.h_breaks[j], q.h_breaks[j + 1])
            ref += val.real * piece
        assert sol.values[0].real == pytest.approx(ref, rel=1e-8)
        assert sol.values[0].imag == 0.0

    def test_first_order_refinement(self):
        q = TransformQuery.pure(1j, T)
        approx = approx_n(4)
        v = {dt: solve_psi_lifted(PARAMS, approx, q, dt=dt).values[-1] for dt in (4e-4, 2e-4, 1e-4)}
        ratio = abs(v[4e-4] - v[2e-4]) / abs(v[2e-4] - v[1e-4])
        assert 1.5 < ratio < 2.5

    def test_convolution_residual(self):
        # the marched solution satisfies the trapezoid-discretised
        # convolution equation with residual O(dt)
        q = TransformQuery.pure(1j, T)
        approx = approx_n(4)
        sups = {}
        for dt in (2e-4, 1e-4):
            sol = solve_psi_lifted(PARAMS, approx, q, dt=dt)
            rhs = riccati_rhs(PARAMS, q.w, sol.values)
            n = len(sol.times) - 1
            worst = 0.0
            for j in range(0, n + 1, max(1, n // 40)):
                if j == 0:
                    continue
                kn = approx(sol.times[j] - sol.times[: j + 1])
                tw = np.full(j + 1, dt)
                tw[0] = tw[-1] = 0.5 * dt
                conv = np.sum(tw * kn * rhs[: j + 1])
                worst = max(worst, abs(sol.values[j] - conv))
            sups[dt] = worst
            assert worst <= 0.2 * dt
        assert sups[1e-4] < sups[2e-4]

    def test_blow_up_guard(self):
        q = TransformQuery.pure(1e5j, T)
        with pytest.raises(BlowUpError) as err:
            solve_psi_lifted(PARAMS, CLASSICAL, q, dt=0.05)
        assert 0.0 < err.value.t <= T

    def test_empty_kernel_rejected(self):
        empty = MultiExpKernel(np.array([]), np.array([]))
        with pytest.raises(ValueError):
            solve_psi_lifted(PARAMS, empty, TransformQuery.pure(1j, T))

    def test_dt_domain(self):
        with pytest.raises(ValueError):
            solve_psi_lifted(PARAMS, CLASSICAL, TransformQuery.pure(1j, T), dt=-0.1)
        with pytest.raises(ValueError):
            solve_psi_lifted(PARAMS, CLASSICAL, TransformQuery.pure(1j, T), dt=2.0 * T)


class TestFractionalSolver:
    def test_alpha_one_matches_closed_form(self):
        for w in (1j, 0.5 + 2j):
            sol = solve_psi_fractional(
                PARAMS, FractionalKernel(1.0), TransformQuery.pure(w, T), dt=5e-4
            )
            ref = classical_psi(PARAMS, w, sol.times)
            assert np.max(np.abs(sol.values - ref)) < 1e-7

    def test_linear_case_mittag_leffler(self):
        # eta = 0 makes the equation linear; solution is an explicit series
        p = HestonParams(0.04, 0.04, 0.3, 0.0, -0.7, 0.06, math.log(100.0))
        w = 1j
        sol = solve_psi_fractional(p, KERNEL06, TransformQuery.pure(w, T), dt=2.5e-4)
        a = 0.5 * (w * w - w)

        def series(t: float) -> complex:
            acc = 0.0
            for k in range(80):
                acc += (-p.lam) ** k * t ** (0.6 * (k + 1)) / math.gamma(0.6 * (k + 1) + 1.0)
            return a * acc

        idx = np.arange(0, len(sol.times), 200)
        ref = np.array([series(t) if t > 0 else 0.0 for t in sol.times[idx]])
        assert np.max(np.abs(sol.values[idx] - ref)) < 1e-6

    def test_small_time_asymptote(self):
        # psi(t) ~ R(w, 0) t^alpha / Gamma(1 + alpha) near zero
        w = 1j
        sol = solve_psi_fractional(PARAMS, KERNEL06, TransformQuery.pure(w, 1e-3), dt=1e-6)
        t = sol.times[100]
        lead = riccati_rhs(PARAMS, w, 0.0) * t**0.6 / math.gamma(1.6)
        assert abs(sol.values[100] - lead) / abs(lead) < 5e-3

    def test_w0_w1_identically_zero(self):
        for w in (0.0, 1.0):
            sol = solve_psi_fractional(PARAMS, KERNEL06, TransformQuery.pure(w, T), dt=1e-3)
            assert np.all(sol.values == 0.0)

    def test_rejects_boundary_weight(self):
        q = TransformQuery(1j, T, (0.0, 1.0), (-1.0,))
        with pytest.raises(ValueError):
            solve_psi_fractional(PARAMS, KERNEL06, q)


class TestSolverAgreement:
    def test_gap_shrinks_with_n(self):
        # kernel-approximation gap of the exponent, decreasing in n;
        # its floor at n=200 is the one-sided barycentre undershoot
        q = TransformQuery.pure(1j, T)
        ref = solve_psi_fractional(PARAMS, KERNEL06, q, dt=2.5e-4)
        gaps = []
        for n, _ in BENCH:
            sol = solve_psi_lifted(PARAMS, approx_n(n), q, dt=1.25e-4)
            k = round(ref.dt / sol.dt)
            gaps.append(float(np.max(np.abs(sol.values[::k] - ref.values))))
        assert all(a > b for a, b in zip(gaps, gaps[1:]))
        assert gaps[-1] < 3e-3


class TestTransform:
    def test_w0_w1_exact(self):
        sol0 = solve_psi_lifted(PARAMS, approx_n(10), TransformQuery.pure(0.0, T), dt=1e-3)
        sol1 = solve_psi_lifted(PARAMS, approx_n(10), TransformQuery.pure(1.0, T), dt=1e-3)
        assert laplace_transform_t0(PARAMS, sol0) == 1.0 + 0.0j
        assert laplace_transform_t0(PARAMS, sol1) == complex(
            np.exp(PARAMS.x0 + PARAMS.r * T)
        )

    def test_classical_cf_oracle(self):
        for u in (0.5, 1.0, 2.0):
            sol = solve_psi_lifted(PARAMS, CLASSICAL, TransformQuery.pure(1j * u, T), dt=5e-5)
            got = laplace_transform_t0(PARAMS, sol)
            assert abs(got - classical_cf(PARAMS, T, u)) < 1e-6

    def test_modulus_bound_on_imaginary_axis(self):
        approx = approx_n(20)
        for u in (0.25, 1.0, 4.0, 15.0):
            sol = solve_psi_lifted(PARAMS, approx, TransformQuery.pure(1j * u, T), dt=2e-4)
            assert abs(laplace_transform_t0(PARAMS, sol)) <= 1.0 + 1e-12

    def test_deterministic_variance_black_scholes(self):
        # eta = 0 and nu_bar = v0 freeze the variance at v0: the transform
        # must be the Gaussian one, for any kernel
        p = HestonParams(0.04, 0.04, 0.3, 0.0, -0.7, 0.06, math.log(100.0))
        for w in (1j, 0.5 + 3j):
            ref = np.exp(w * (p.x0 + p.r * T) + 0.5 * (w * w - w) * p.v0 * T)
            sol_l = solve_psi_lifted(p, approx_n(20), TransformQuery.pure(w, T), dt=5e-5)
            sol_f = solve_psi_fractional(p, KERNEL06, TransformQuery.pure(w, T), dt=2.5e-4)
            assert abs(laplace_transform_t0(p, sol_l) - ref) < 5e-7 * abs(ref)
            assert abs(laplace_transform_t0(p, sol_f) - ref) < 1e-7 * abs(ref)

    def test_negative_boundary_weight_damps(self):
        # at w = 0 and real h <= 0 the transform is E[exp(int h v)] in (0, 1],
        # decreasing as h becomes more negative
        vals = []
        for level in (0.0, -1.0, -3.0):
            q = (
                TransformQuery.pure(0.0, T)
                if level == 0.0
                else TransformQuery(0.0, T, (0.0, 1.0), (level,))
            )
            sol = solve_psi_lifted(PARAMS, approx_n(10), q, dt=2e-4)
            val = laplace_transform_t0(PARAMS, sol)
            assert abs(val.imag) < 1e-14
            vals.append(val.real)
        assert vals[0] == 1.0
        assert 0.0 < vals[2] < vals[1] < 1.0


class TestConditional:
    def test_at_maturity_is_payoff_exponent(self):
        approx = approx_n(4)
        sol = solve_psi_lifted(PARAMS, approx, TransformQuery.pure(1j, T), dt=1e-3)
        x_T = 4.7
        y = np.zeros(approx.n)
        assert conditional_transform(PARAMS, sol, T, x_T, y) == complex(np.exp(1j * x_T))

    def test_at_time_zero_matches_unconditional(self):
        approx = approx_n(10)
        sol = solve_psi_lifted(PARAMS, approx, TransformQuery.pure(0.5 + 1j, T), dt=1e-3)
        got = conditional_transform(PARAMS, sol, 0.0, PARAMS.x0, np.zeros(approx.n))
        ref = laplace_transform_t0(PARAMS, sol)
        assert abs(got - ref) < 1e-12 * abs(ref)

    def test_batched_states(self):
        approx = approx_n(4)
        sol = solve_psi_lifted(PARAMS, approx, TransformQuery.pure(1j, T), dt=1e-3)
        rng = np.random.default_rng(7)
        xs = rng.normal(4.6, 0.1, size=5)
        ys = rng.normal(0.0, 0.001, size=(5, approx.n))
        out = conditional_transform(PARAMS, sol, 0.25, xs, ys)
        assert out.shape == (5,)
        for i in range(5):
            single = conditional_transform(PARAMS, sol, 0.25, xs[i], ys[i])
            assert abs(out[i] - single) < 1e-14

    def test_off_grid_time_rejected(self):
        approx = approx_n(4)
        sol = solve_psi_lifted(PARAMS, approx, TransformQuery.pure(1j, T), dt=1e-3)
        with pytest.raises(ValueError):
            conditional_transform(PARAMS, sol, 0.25 + 0.3 * sol.dt, 4.6, np.zeros(approx.n))

    def test_requires_pure_query(self):
        q = TransformQuery(1j, T, (0.0, 1.0), (-1.0,))
        sol = solve_psi_lifted(PARAMS, approx_n(4), q, dt=1e-3)
        with pytest.raises(ValueError):
            conditional_transform(PARAMS, sol, 0.0, 4.6, np.zeros(4))


class TestAdjustedCurve:
    def test_zero_state_is_input_curve(self):
        from voltheston.kernels import v0_curve

        approx = approx_n(10)
        xi = np.linspace(0.0, 1.0, 11)
        curve = adjusted_forward_curve(PARAMS, approx, 0.3, np.zeros(approx.n), xi)
        np.testing.assert_allclose(curve, v0_curve(PARAMS, approx, 0.3 + xi), rtol=1e-14)

    def test_offset_zero_recovers_spot_variance(self):
        approx = approx_n(4)
        y = np.array([0.01, -0.002, 0.03, 0.001])
        from voltheston.kernels import v0_curve

        curve = adjusted_forward_curve(PARAMS, approx, 0.2, y, np.array([0.0]))
        expect = v0_curve(PARAMS, approx, 0.2) + approx.weights @ y
        assert curve[0] == pytest.approx(expect, rel=1e-14)

    def test_shapes_and_domain(self):
        approx = approx_n(4)
        batch = np.zeros((7, 4))
        out = adjusted_forward_curve(PARAMS, approx, 0.1, batch, np.linspace(0, 1, 5))
        assert out.shape == (7, 5)
        with pytest.raises(ValueError):
            adjusted_forward_curve(PARAMS, approx, 0.1, np.zeros(3), np.array([0.0]))
        with pytest.raises(ValueError):
            adjusted_forward_curve(PARAMS, approx, 0.1, np.zeros(4), np.array([-0.1]))
