"""Path simulation tests: generator correctness, determinism, and dynamics.

The random stream is pinned down twice: the block cipher against the
published Philox4x32-10 known-answer vectors (via an independent reference
implementation in oracles.py), and the inverse normal against scipy.  The
scheme itself is checked through exact degenerate cases and statistical
consistency with the transform pricer.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from oracles import philox4x32, philox_uniform_pair

from voltheston.errors import NumericsError
from voltheston.fourier import EuropeanSpec
from voltheston.kernels import (
    FractionalKernel,
    GeometricPartition,
    MultiExpKernel,
    build_multiexp,
    v0_curve,
)
from voltheston.params import HestonParams
from voltheston.simulate import (
    HAVE_NUMBA,
    PathBatch,
    SimGrid,
    _MAX_UNIFORM,
    _gaussians_np,
    _ndtri_np,
    empirical_cf,
    european_mc_price,
    simulate,
)

PARAMS = HestonParams(v0=0.02, nu_bar=0.02, lam=0.3, eta=0.3, rho=-0.7, r=0.06, x0=math.log(100.0))
KERNEL20 = build_multiexp(FractionalKernel(0.6), GeometricPartition(20, 8.8750))
KERNEL4 = build_multiexp(FractionalKernel(0.6), GeometricPartition(4, 50.5458))

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not importable")


class TestGenerator:
    def test_reference_known_answer_vectors(self):
        # Canonical Random123 vectors for philox4x32, 10 rounds.
        assert philox4x32((0, 0, 0, 0), (0, 0)) == (
            0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8,
        )
        ones = 0xFFFFFFFF
        assert philox4x32((ones,) * 4, (ones, ones)) == (
            0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD,
        )

    @pytest.mark.parametrize(
        "step,path,seed",
        [
            (0, 0, 0),
            (3, 5, 12345),
            (499, 99_999, 2**64 - 1),
            (7, 2**33 + 17, 2**63 + 11),
        ],
    )
    def test_block_mapping_matches_reference(self, step, path, seed):
        u1, u2 = philox_uniform_pair(step, path, seed)
        want = _ndtri_np(np.array([u1, u2]))
        g1, g2 = _gaussians_np(step, np.array([path], dtype=np.int64), seed & 0xFFFFFFFF, seed >> 32)
        assert g1[0] == want[0] and g2[0] == want[1]

    def test_top_word_would_round_to_one(self):
        # The clamp constant exists because of this rounding fact.
        k = float(2**53 - 1)
        assert (k + 0.5) * 2.0**-53 == 1.0
        assert 0.0 < _MAX_UNIFORM < 1.0
        assert np.isfinite(_ndtri_np(np.array([_MAX_UNIFORM]))[0])

    def test_inverse_normal_matches_scipy(self):
        p = np.concatenate(
            [
                np.linspace(1e-9, 1.0 - 1e-9, 4001),
                np.array([2.0**-54, 1e-300, 1e-20, 0.425, 0.5, 1.0 - 2.0**-53]),
            ]
        )
        ours = _ndtri_np(p)
        ref = special.ndtri(p)
        assert np.all(np.isfinite(ours))
        assert np.max(np.abs(ours - ref) / np.maximum(1.0, np.abs(ref))) < 1e-13


class TestDeterminism:
    def _run(self, backend, n_paths=257, seed=99):
        grid = SimGrid(0.5, 50)
        return simulate(
            PARAMS,
            KERNEL20,
            grid,
            n_paths,
            seed,
            store_factor_steps=[0, 25, 50],
            backend=backend,
        )

    @needs_numba
    def test_backends_agree_bitwise(self):
        a = self._run("numba")
        b = self._run("numpy")
        assert np.array_equal(a.logprice, b.logprice)
        assert np.array_equal(a.variance, b.variance)
        assert np.array_equal(a.factors, b.factors)
        assert np.array_equal(a.step_indices, b.step_indices)

    def test_rerun_identical(self):
        a = self._run(None)
        b = self._run(None)
        assert np.array_equal(a.logprice, b.logprice)
        assert np.array_equal(a.variance, b.variance)

    @given(seed=st.integers(0, 2**64 - 1), m=st.integers(1, 16), extra=st.integers(1, 16))
    @settings(max_examples=40, deadline=None)
    def test_prefix_property(self, seed, m, extra):
        grid = SimGrid(0.25, 5)
        small = simulate(PARAMS, KERNEL4, grid, m, seed, backend="numpy")
        big = simulate(PARAMS, KERNEL4, grid, m + extra, seed, backend="numpy")
        assert np.array_equal(small.logprice, big.logprice[:m])
        assert np.array_equal(small.variance, big.variance[:m])

    @needs_numba
    def test_thread_count_invariance(self):
        import numba

        before = numba.get_num_threads()
        results = []
        try:
            for nt in (1, min(4, numba.config.NUMBA_NUM_THREADS), before):
                numba.set_num_threads(nt)
                results.append(self._run("numba", n_paths=513, seed=11))
        finally:
            numba.set_num_threads(before)
        for other in results[1:]:
            assert np.array_equal(results[0].logprice, other.logprice)
            assert np.array_equal(results[0].variance, other.variance)


class TestDynamics:
    def test_variance_identity_at_factor_nodes(self):
        grid = SimGrid(0.5, 40)
        batch = simulate(PARAMS, KERNEL20, grid, 200, 5, store_factor_steps=range(41))
        v0g = v0_curve(PARAMS, KERNEL20, grid.times)
        for j, step in enumerate(batch.factor_step_indices):
            col = batch.column_of(int(step))
            recon = v0g[step] + batch.factors[:, :, j] @ KERNEL20.weights
            err = np.max(np.abs(recon - batch.variance[:, col]))
            assert err <= 1e-12 * max(1.0, np.max(np.abs(batch.variance[:, col])))

    def test_flat_variance_when_vol_of_vol_and_reversion_vanish(self):
        p = HestonParams(0.03, 0.02, 0.0, 0.0, -0.7, 0.06, math.log(100.0))
        batch = simulate(p, KERNEL20, SimGrid(0.5, 30), 64, 3)
        assert np.all(batch.variance == 0.03)

    def test_deterministic_variance_when_vol_of_vol_vanishes(self):
        p = HestonParams(0.03, 0.02, 0.4, 0.0, -0.7, 0.06, math.log(100.0))
        batch = simulate(p, KERNEL20, SimGrid(0.5, 30), 64, 3)
        spread = np.ptp(batch.variance, axis=0)
        assert np.all(spread == 0.0)

    def test_zero_variance_paths_exact(self):
        p = HestonParams(0.0, 0.0, 0.3, 0.3, -0.7, 0.06, math.log(100.0))
        grid = SimGrid(0.5, 25)
        batch = simulate(p, KERNEL4, grid, 16, 9)
        assert np.all(batch.variance == 0.0)
        drift = p.x0 + p.r * grid.times
        assert np.max(np.abs(batch.logprice - drift)) < 5e-13
        assert np.all(np.ptp(batch.logprice, axis=0) == 0.0)

    def test_with_spot_tracks_fresh_simulation(self):
        grid = SimGrid(0.5, 40)
        base = simulate(PARAMS, KERNEL20, grid, 300, 21)
        shifted = base.with_spot(120.0)
        fresh = simulate(PARAMS.with_spot(120.0), KERNEL20, grid, 300, 21)
        assert shifted.variance is base.variance
        assert np.array_equal(shifted.logprice[:, 0], fresh.logprice[:, 0])
        assert np.max(np.abs(shifted.logprice - fresh.logprice)) < 1e-12
        assert shifted.params.s0 == pytest.approx(120.0, rel=1e-15)

    def test_discounted_spot_martingale(self):
        grid = SimGrid(0.5, 100)
        batch = simulate(PARAMS, KERNEL20, grid, 20_000, 17)
        s_T = np.exp(batch.terminal_logprice)
        disc = math.exp(-PARAMS.r * grid.maturity)
        est = disc * float(np.mean(s_T))
        se = disc * float(np.std(s_T, ddof=1)) / math.sqrt(s_T.size)
        assert abs(est - PARAMS.s0) < 3.0 * se

    def test_step_refinement_stability(self):
        spec = EuropeanSpec(strike=100.0, maturity=0.5, option_kind="put")
        prices = []
        for n_steps in (50, 100):
            batch = simulate(PARAMS, KERNEL4, SimGrid(0.5, n_steps), 20_000, 23)
            prices.append(european_mc_price(batch, spec))
        gap = abs(prices[0][0] - prices[1][0])
        assert gap < 3.0 * math.hypot(prices[0][1], prices[1][1])


class TestEstimators:
    def test_pathwise_put_call_parity(self):
        grid = SimGrid(0.5, 50)
        batch = simulate(PARAMS, KERNEL20, grid, 5000, 2)
        put = european_mc_price(batch, EuropeanSpec(100.0, 0.5, "put"))
        call = european_mc_price(batch, EuropeanSpec(100.0, 0.5, "call"))
        disc = math.exp(-PARAMS.r * 0.5)
        forward_leg = disc * float(np.mean(np.exp(batch.terminal_logprice) - 100.0))
        assert abs(call[0] - put[0] - forward_leg) < 1e-12

    def test_maturity_mismatch_rejected(self):
        batch = simulate(PARAMS, KERNEL4, SimGrid(0.5, 10), 8, 1)
        with pytest.raises(ValueError, match="maturity"):
            european_mc_price(batch, EuropeanSpec(100.0, 0.25, "put"))

    def test_zero_variance_put_exact(self):
        p = HestonParams(0.0, 0.0, 0.3, 0.3, -0.7, 0.06, math.log(100.0))
        grid = SimGrid(0.5, 25)
        batch = simulate(p, KERNEL4, grid, 16, 4)
        price, stderr = european_mc_price(batch, EuropeanSpec(110.0, 0.5, "put"))
        assert stderr == 0.0
        x_T = batch.terminal_logprice[0]
        want = math.exp(-p.r * 0.5) * (110.0 - math.exp(x_T))
        assert price == pytest.approx(want, abs=1e-14)
        assert price == pytest.approx(110.0 * math.exp(-0.03) - 100.0, rel=1e-12)

    def test_empirical_cf_at_zero(self):
        batch = simulate(PARAMS, KERNEL4, SimGrid(0.5, 10), 32, 6)
        est, se = empirical_cf(batch, 0.0)
        assert est == 1.0 + 0.0j
        assert se == 0.0 + 0.0j

    def test_empirical_cf_zero_variance(self):
        p = HestonParams(0.0, 0.0, 0.3, 0.3, -0.7, 0.06, math.log(100.0))
        batch = simulate(p, KERNEL4, SimGrid(0.5, 20), 16, 8)
        est, se = empirical_cf(batch, 1.7)
        x_T = batch.terminal_logprice[0]
        assert est == complex(np.exp(1j * 1.7 * x_T))
        assert se == 0.0 + 0.0j

    def test_cf_modulus_bounded(self):
        batch = simulate(PARAMS, KERNEL20, SimGrid(0.5, 40), 4000, 13)
        for u in (0.5, 1.0, 2.0):
            est, _ = empirical_cf(batch, u)
            assert abs(est) <= 1.0 + 1e-12


class TestValidation:
    def test_seed_bounds(self):
        grid = SimGrid(0.5, 5)
        with pytest.raises(ValueError, match="seed"):
            simulate(PARAMS, KERNEL4, grid, 4, -1)
        with pytest.raises(ValueError, match="seed"):
            simulate(PARAMS, KERNEL4, grid, 4, 2**64)

    def test_backend_name(self):
        with pytest.raises(ValueError, match="backend"):
            simulate(PARAMS, KERNEL4, SimGrid(0.5, 5), 4, 0, backend="fortran")

    def test_path_count(self):
        with pytest.raises(ValueError, match="n_paths"):
            simulate(PARAMS, KERNEL4, SimGrid(0.5, 5), 0, 0)

    def test_store_steps_validated(self):
        grid = SimGrid(0.5, 5)
        with pytest.raises(ValueError, match="steps"):
            simulate(PARAMS, KERNEL4, grid, 4, 0, store_steps=[0, 6])
        with pytest.raises(ValueError, match="increasing"):
            simulate(PARAMS, KERNEL4, grid, 4, 0, store_steps=[3, 3])
        with pytest.raises(ValueError, match="stored"):
            simulate(PARAMS, KERNEL4, grid, 4, 0, store_steps=[])

    def test_column_lookup(self):
        batch = simulate(PARAMS, KERNEL4, SimGrid(0.5, 10), 4, 0, store_steps=[0, 5, 10])
        assert batch.column_of(5) == 1
        with pytest.raises(KeyError):
            batch.column_of(7)

    def test_arrays_read_only(self):
        batch = simulate(PARAMS, KERNEL4, SimGrid(0.5, 5), 4, 0)
        assert not batch.logprice.flags.writeable
        assert not batch.variance.flags.writeable
        assert not batch.with_spot(90.0).logprice.flags.writeable

    # numpy warns while producing the infs the error reporting is about.
    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    @pytest.mark.parametrize("backend", ["numpy"] + (["numba"] if HAVE_NUMBA else []))
    def test_overflow_reported_with_location(self, backend):
        p = HestonParams(1.0, 0.0, 0.0, 1e160, 0.0, 0.0, 0.0)
        kernel = MultiExpKernel.classical_heston()
        with pytest.raises(NumericsError, match=r"path \d+, step \d+"):
            simulate(p, kernel, SimGrid(1.0, 32), 64, 7, backend=backend)
