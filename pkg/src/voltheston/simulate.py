"""Monte Carlo paths of the lifted model, truncated explicit-implicit Euler.

Scheme on the uniform grid s_k = k dt, per path:

    X_{k+1}   = X_k + (r - V_k/2) dt
                    + sqrt(V_k^+) sqrt(dt) (rho G1 + sqrt(1-rho^2) G2),
    Y_{k+1}^i = (Y_k^i - lam V_k dt + eta sqrt(V_k^+) sqrt(dt) G1)
                / (1 + x_i dt),
    V_k       = v0(s_k) + sum_i c_i Y_k^i,

with G1, G2 independent standard gaussians.  V may go negative; the positive
part is taken only under square roots, drifts use V untruncated.

Randomness is a counter-based stream: one Philox4x32-10 block keyed by the
64-bit seed at counter (step, path) yields the four 32-bit words that become
the step's two gaussians via 53-bit uniforms and the inverse normal CDF.
A path's noise therefore depends only on (seed, path index, step index), so
results are bit-identical for a given backend no matter how paths are
blocked or how many threads run, and the first m paths of a larger batch
coincide with the batch of m.

The inner loop is compiled with numba when available; a pure numpy fallback
implements the identical arithmetic (same operation order, same inverse-CDF
polynomial), agreeing with the compiled path to floating-point roundoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import NumericsError
from .kernels import MultiExpKernel, v0_curve
from .params import HestonParams

try:
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

__all__ = [
    "SimGrid",
    "PathBatch",
    "simulate",
    "european_mc_price",
    "empirical_cf",
    "HAVE_NUMBA",
]

_U64 = np.uint64
_U32 = np.uint32
_MASK32 = _U64(0xFFFFFFFF)
_M0 = _U64(0xD2511F53)
_M1 = _U64(0xCD9E8D57)
_W0 = _U64(0x9E3779B9)
_W1 = _U64(0xBB67AE85)
_INV53 = 2.0**-53
# (k + 0.5) * 2**-53 rounds to 1.0 for the all-ones word k = 2**53 - 1, which
# the inverse normal cannot take; clamp to the largest double below 1.
_MAX_UNIFORM = 1.0 - 2.0**-53

# Wichura's PPND16 rational approximations (double-precision inverse CDF)
_NA = (3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
       1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
       3.3430575583588128105e4, 2.5090809287301226727e3)
_NB = (1.0, 4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
       2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
       5.2264952788528545610e3)
_NC = (1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
       3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
       2.27238449892691845833e-2, 7.74545014278341407640e-4)
_ND = (1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
       1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
       1.05075007164441684324e-9)
_NE = (6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
       2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
       2.71155556874348757815e-5, 2.01033439929228813265e-7)
_NF = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
       7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
       2.04426310338993978564e-15)


@dataclass(frozen=True)
class SimGrid:
    """Uniform time grid s_k = k dt, k = 0..n_steps, dt = maturity/n_steps."""

    maturity: float
    n_steps: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.maturity) and self.maturity > 0.0):
            raise ValueError(f"maturity must be positive, got {self.maturity}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.maturity / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt


@dataclass(frozen=True, eq=False)
class PathBatch:
    """Simulated paths at a selection of grid nodes.

    logprice and variance have one column per entry of step_indices (all
    grid nodes by default); factors, when stored, has one slab per entry of
    factor_step_indices.  Arrays are read-only.  variance equals
    v0(s_k) + weights . factors at every node where both are stored, and may
    be negative.
    """

    params: HestonParams
    kernel: MultiExpKernel
    grid: SimGrid
    seed: int
    step_indices: np.ndarray
    logprice: np.ndarray
    variance: np.ndarray
    factor_step_indices: Optional[np.ndarray] = None
    factors: Optional[np.ndarray] = None

    @property
    def n_paths(self) -> int:
        return self.logprice.shape[0]

    @property
    def times(self) -> np.ndarray:
        """Times of the stored columns."""
        return self.step_indices * self.grid.dt

    def column_of(self, step: int) -> int:
        """Column index holding grid node `step`, or a KeyError."""
        pos = int(np.searchsorted(self.step_indices, step))
        if pos >= self.step_indices.size or self.step_indices[pos] != step:
            raise KeyError(f"grid node {step} is not stored in this batch")
        return pos

    @property
    def terminal_logprice(self) -> np.ndarray:
        return self.logprice[:, self.column_of(self.grid.n_steps)]

    def with_spot(self, s0: float) -> "PathBatch":
        """The batch re-simulated from spot s0 with the same seed.

        The log-price increments do not depend on the level, so the shifted
        batch equals an actual re-run under common random numbers up to
        floating-point roundoff, at no simulation cost.
        """
        new_params = self.params.with_spot(s0)
        shifted = (self.logprice - self.params.x0) + new_params.x0
        shifted.setflags(write=False)
        return replace(self, params=new_params, logprice=shifted)


def _as_step_indices(steps: Optional[Sequence[int]], n_steps: int, default_all: bool) -> np.ndarray:
    if steps is None:
        out = np.arange(n_steps + 1, dtype=np.int64) if default_all else np.empty(0, np.int64)
    else:
        out = np.asarray(list(steps), dtype=np.int64)
    if out.size:
        if np.any(out < 0) or np.any(out > n_steps):
            raise ValueError(f"stored steps must lie in [0, {n_steps}]")
        if np.any(np.diff(out) <= 0):
            raise ValueError("stored steps must be strictly increasing")
    return out


def _ndtri_np(p: np.ndarray) -> np.ndarray:
    """Vectorised PPND16; p must lie strictly inside (0, 1)."""
    q = p - 0.5
    out = np.empty_like(p)
    central = np.abs(q) <= 0.425
    r = 0.180625 - q[central] * q[central]
    num = np.full_like(r, _NA[7])
    den = np.full_like(r, _NB[7])
    for a, b in zip(_NA[6::-1], _NB[6::-1]):
        num = num * r + a
        den = den * r + b
    out[central] = q[central] * num / den

    t = ~central
    qt = q[t]
    r = np.where(qt < 0.0, p[t], 1.0 - p[t])
    r = np.sqrt(-np.log(r))
    near = r <= 5.0
    x = np.empty_like(r)
    rn = r[near] - 1.6
    num = np.full_like(rn, _NC[7])
    den = np.full_like(rn, _ND[7])
    for cc, dd in zip(_NC[6::-1], _ND[6::-1]):
        num = num * rn + cc
        den = den * rn + dd
    x[near] = num / den
    rf = r[~near] - 5.0
    num = np.full_like(rf, _NE[7])
    den = np.full_like(rf, _NF[7])
    for ee, ff in zip(_NE[6::-1], _NF[6::-1]):
        num = num * rf + ee
        den = den * rf + ff
    x[~near] = num / den
    out[t] = np.where(qt < 0.0, -x, x)
    return out


def _gaussians_np(step: int, paths: np.ndarray, key0: int, key1: int) -> tuple[np.ndarray, np.ndarray]:
    """Philox4x32-10 block per path at this step, mapped to two gaussians."""
    c0 = np.full(paths.shape, step & 0xFFFFFFFF, dtype=_U64)
    c1 = (paths & 0xFFFFFFFF).astype(_U64)
    c2 = (paths >> 32).astype(_U64)
    c3 = np.zeros(paths.shape, dtype=_U64)
    k0 = _U64(key0)
    k1 = _U64(key1)
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0, lo0 = p0 >> _U64(32), p0 & _MASK32
        hi1, lo1 = p1 >> _U64(32), p1 & _MASK32
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, (hi0 ^ c3 ^ k1) & _MASK32, lo0
        c0 = c0 & _MASK32
        k0 = (k0 + _W0) & _MASK32
        k1 = (k1 + _W1) & _MASK32
    u1 = ((((c0 << _U64(32)) | c1) >> _U64(11)).astype(np.float64) + 0.5) * _INV53
    u2 = ((((c2 << _U64(32)) | c3) >> _U64(11)).astype(np.float64) + 0.5) * _INV53
    np.minimum(u1, _MAX_UNIFORM, out=u1)
    np.minimum(u2, _MAX_UNIFORM, out=u2)
    return _ndtri_np(u1), _ndtri_np(u2)


def _simulate_np(
    x0: float,
    r: float,
    lam: float,
    eta: float,
    rho: float,
    dt: float,
    c: np.ndarray,
    x: np.ndarray,
    v0g: np.ndarray,
    n_paths: int,
    key0: int,
    key1: int,
    store_idx: np.ndarray,
    fstore_idx: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, tuple[int, int]]:
    n_steps = v0g.size - 1
    n = c.size
    sdt = math.sqrt(dt)
    rho_c = math.sqrt(1.0 - rho * rho)
    div = 1.0 + x * dt

    logp = np.zeros((n_paths, store_idx.size))
    var = np.zeros((n_paths, store_idx.size))
    fac = np.zeros((n_paths, n, fstore_idx.size))
    paths = np.arange(n_paths, dtype=np.int64)

    X = np.full(n_paths, x0)
    V = np.full(n_paths, v0g[0])
    y = np.zeros((n_paths, n))
    sp = fp = 0
    if store_idx.size and store_idx[0] == 0:
        logp[:, 0] = X
        var[:, 0] = V
        sp = 1
    if fstore_idx.size and fstore_idx[0] == 0:
        fp = 1
    bad = (-1, -1)
    for k in range(n_steps):
        g1, g2 = _gaussians_np(k, paths, key0, key1)
        noise = np.sqrt(np.maximum(V, 0.0)) * sdt
        X = X + (r - 0.5 * V) * dt + noise * (rho * g1 + rho_c * g2)
        dv = -lam * V * dt + eta * noise * g1
        Vn = np.full(n_paths, v0g[k + 1])
        for i in range(n):
            y[:, i] = (y[:, i] + dv) / div[i]
            Vn = Vn + c[i] * y[:, i]
        V = Vn
        if bad[0] < 0:
            finite = np.isfinite(X) & np.isfinite(V)
            if not finite.all():
                bad = (int(np.argmin(finite)), k + 1)
        if sp < store_idx.size and store_idx[sp] == k + 1:
            logp[:, sp] = X
            var[:, sp] = V
            sp += 1
        if fp < fstore_idx.size and fstore_idx[fp] == k + 1:
            fac[:, :, fp] = y
            fp += 1
    return logp, var, fac, bad


if HAVE_NUMBA:

    @njit(cache=True)
    def _ndtri_nb(p: float) -> float:
        q = p - 0.5
        if abs(q) <= 0.425:
            r = 0.180625 - q * q
            num = _NA[7]
            den = _NB[7]
            for j in range(6, -1, -1):
                num = num * r + _NA[j]
                den = den * r + _NB[j]
            return q * num / den
        r = p if q < 0.0 else 1.0 - p
        r = math.sqrt(-math.log(r))
        if r <= 5.0:
            r -= 1.6
            num = _NC[7]
            den = _ND[7]
            for j in range(6, -1, -1):
                num = num * r + _NC[j]
                den = den * r + _ND[j]
        else:
            r -= 5.0
            num = _NE[7]
            den = _NF[7]
            for j in range(6, -1, -1):
                num = num * r + _NE[j]
                den = den * r + _NF[j]
        x = num / den
        return -x if q < 0.0 else x

    @njit(cache=True)
    def _gaussians_nb(step: int, path: int, key0: np.uint64, key1: np.uint64):
        c0 = _U64(step) & _MASK32
        c1 = _U64(path) & _MASK32
        c2 = (_U64(path) >> _U64(32)) & _MASK32
        c3 = _U64(0)
        k0 = key0
        k1 = key1
        for _ in range(10):
            p0 = _M0 * c0
            p1 = _M1 * c2
            hi0 = p0 >> _U64(32)
            lo0 = p0 & _MASK32
            hi1 = p1 >> _U64(32)
            lo1 = p1 & _MASK32
            nc0 = (hi1 ^ c1 ^ k0) & _MASK32
            nc2 = (hi0 ^ c3 ^ k1) & _MASK32
            c0, c1, c2, c3 = nc0, lo1, nc2, lo0
            k0 = (k0 + _W0) & _MASK32
            k1 = (k1 + _W1) & _MASK32
        u1 = (float(((c0 << _U64(32)) | c1) >> _U64(11)) + 0.5) * _INV53
        u2 = (float(((c2 << _U64(32)) | c3) >> _U64(11)) + 0.5) * _INV53
        if u1 > _MAX_UNIFORM:
            u1 = _MAX_UNIFORM
        if u2 > _MAX_UNIFORM:
            u2 = _MAX_UNIFORM
        return _ndtri_nb(u1), _ndtri_nb(u2)

    @njit(parallel=True, cache=True)
    def _simulate_nb(x0, r, lam, eta, rho, dt, c, x, v0g, n_paths, key0, key1, store_idx, fstore_idx, logp, var, fac, err):
        n_steps = v0g.size - 1
        n = c.size
        sdt = math.sqrt(dt)
        rho_c = math.sqrt(1.0 - rho * rho)
        for p in prange(n_paths):
            y = np.zeros(n)
            X = x0
            V = v0g[0]
            sp = 0
            fp = 0
            if store_idx.size > 0 and store_idx[0] == 0:
                logp[p, 0] = X
                var[p, 0] = V
                sp = 1
            if fstore_idx.size > 0 and fstore_idx[0] == 0:
                fp = 1
            for k in range(n_steps):
                g1, g2 = _gaussians_nb(k, p, key0, key1)
                noise = math.sqrt(max(V, 0.0)) * sdt
                X = X + (r - 0.5 * V) * dt + noise * (rho * g1 + rho_c * g2)
                dv = -lam * V * dt + eta * noise * g1
                Vn = v0g[k + 1]
                for i in range(n):
                    y[i] = (y[i] + dv) / (1.0 + x[i] * dt)
                    Vn = Vn + c[i] * y[i]
                V = Vn
                if not (math.isfinite(X) and math.isfinite(V)):
                    err[p] = k + 1
                    break
                if sp < store_idx.size and store_idx[sp] == k + 1:
                    logp[p, sp] = X
                    var[p, sp] = V
                    sp += 1
                if fp < fstore_idx.size and fstore_idx[fp] == k + 1:
                    for i in range(n):
                        fac[p, i, fp] = y[i]
                    fp += 1


def simulate(
    params: HestonParams,
    approx: MultiExpKernel,
    grid: SimGrid,
    n_paths: int,
    seed: int,
    store_steps: Optional[Sequence[int]] = None,
    store_factor_steps: Optional[Sequence[int]] = None,
    backend: Optional[str] = None,
) -> PathBatch:
    """Simulate a batch of paths; deterministic in (seed, n_paths, grid).

    store_steps selects which grid nodes keep (logprice, variance) columns
    (default: all); store_factor_steps selects nodes at which the factor
    state is kept (default: none).  backend forces "numba" or "numpy",
    mainly for the equivalence tests.
    """
    if n_paths < 1:
        raise ValueError(f"n_paths must be >= 1, got {n_paths}")
    if not 0 <= int(seed) < 2**64:
        raise ValueError("seed must fit an unsigned 64-bit integer")
    if backend not in (None, "numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise ValueError("numba backend requested but numba is not importable")

    seed = int(seed)
    key0 = seed & 0xFFFFFFFF
    key1 = seed >> 32
    store_idx = _as_step_indices(store_steps, grid.n_steps, default_all=True)
    fstore_idx = _as_step_indices(store_factor_steps, grid.n_steps, default_all=False)
    if store_idx.size == 0:
        raise ValueError("at least one grid node must be stored")
    v0g = v0_curve(params, approx, grid.times)
    c = approx.weights
    x = approx.nodes

    use_numba = HAVE_NUMBA if backend is None else backend == "numba"
    if use_numba:
        logp = np.zeros((n_paths, store_idx.size))
        var = np.zeros((n_paths, store_idx.size))
        fac = np.zeros((n_paths, c.size, fstore_idx.size))
        err = np.zeros(n_paths, dtype=np.int64)
        _simulate_nb(
            params.x0, params.r, params.lam, params.eta, params.rho, grid.dt,
            c, x, v0g, n_paths, _U64(key0), _U64(key1), store_idx, fstore_idx,
            logp, var, fac, err,
        )
        if np.any(err > 0):
            p = int(np.argmax(err > 0))
            raise NumericsError(f"non-finite state at path {p}, step {int(err[p])}")
    else:
        logp, var, fac, bad = _simulate_np(
            params.x0, params.r, params.lam, params.eta, params.rho, grid.dt,
            c, x, v0g, n_paths, key0, key1, store_idx, fstore_idx,
        )
        if bad[0] >= 0:
            raise NumericsError(f"non-finite state at path {bad[0]}, step {bad[1]}")

    factors = fac if fstore_idx.size else None
    for arr in (logp, var) + ((factors,) if factors is not None else ()):
        arr.setflags(write=False)
    return PathBatch(
        params=params,
        kernel=approx,
        grid=grid,
        seed=seed,
        step_indices=store_idx,
        logprice=logp,
        variance=var,
        factor_step_indices=fstore_idx if fstore_idx.size else None,
        factors=factors,
    )


def european_mc_price(batch: PathBatch, spec, r: Optional[float] = None) -> tuple[float, float]:
    """Discounted payoff mean and its standard error from the batch.

    spec is a :class:`voltheston.fourier.EuropeanSpec`; its maturity must
    match the batch horizon.  r defaults to the batch's simulated rate.
    """
    T = batch.grid.maturity
    if abs(spec.maturity - T) > 1e-12 * max(1.0, T):
        raise ValueError(f"spec maturity {spec.maturity} differs from batch horizon {T}")
    if r is None:
        r = batch.params.r
    s_T = np.exp(batch.terminal_logprice)
    if spec.option_kind == "put":
        payoff = np.maximum(spec.strike - s_T, 0.0)
    else:
        payoff = np.maximum(s_T - spec.strike, 0.0)
    # Discount pathwise so a one-date exercise grid in the Bermudan pricer
    # reproduces this estimate bit for bit.
    vals = math.exp(-r * T) * payoff
    # identical samples have mean vals[0] and spread 0 exactly; np.mean's
    # pairwise sums can be an ulp off, which matters in degenerate cases
    if np.ptp(vals) == 0.0:
        return float(vals[0]), 0.0
    price = float(np.mean(vals))
    if vals.size > 1:
        stderr = float(np.std(vals, ddof=1)) / math.sqrt(vals.size)
    else:
        stderr = 0.0
    return price, stderr


def empirical_cf(batch: PathBatch, u: float) -> tuple[complex, complex]:
    """Monte Carlo estimate of E[e^{i u X_T}] with componentwise errors.

    Returns (estimate, stderr) where stderr packs the standard error of the
    real part in its real component and of the imaginary part in its
    imaginary component.
    """
    z = np.exp(1j * u * batch.terminal_logprice)
    est = complex(np.mean(z))
    if z.size > 1 and u != 0.0:
        se = complex(
            float(np.std(z.real, ddof=1)) / math.sqrt(z.size),
            float(np.std(z.imag, ddof=1)) / math.sqrt(z.size),
        )
    else:
        se = 0.0 + 0.0j
    return est, se
