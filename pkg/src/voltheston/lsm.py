"""Least-squares Monte Carlo pricing of Bermudan options on path batches.

Backward induction over a grid of exercise dates with cross-sectional
regression of discounted continuation values on a tensor basis in the spot
and variance levels:

    f1(S / K) * f2(max(V, 0) / var_scale),   f1, f2 in {1} u {e^{-z} L_i(z)},

with L_i the Laguerre polynomials of the requested orders.  The regression
runs on in-the-money paths; thin cross-sections fall back to all paths and
degenerate design matrices to a ridge solve, both flagged in the result.
The fitted policy is valued in sample by default; a separate entry point
re-values a frozen policy on an independent batch, which gives a debiased
lower bound.

Critical prices (the largest spot where the Bermudan value equals the
immediate payoff) are extracted by bisection over a pricing closure, meant
to be built on `PathBatch.with_spot` so every spot level reuses common
random numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial import laguerre

from .errors import CriticalPriceNotFound
from .simulate import PathBatch, SimGrid

__all__ = [
    "ExerciseGrid",
    "BasisSpec",
    "PricingResult",
    "basis_eval",
    "put_payoff",
    "default_basis",
    "bermudan_price",
    "bermudan_price_out_of_sample",
    "bermudan_in_N",
    "critical_price",
]


@dataclass(frozen=True)
class ExerciseGrid:
    """Strictly increasing exercise dates t_0 < ... < t_N with t_N = T.

    The count parameter N is the number of dates minus one, matching the
    convention that an N-date problem offers N + 1 exercise opportunities
    including both endpoints.  Every date must sit on the simulation grid of
    the batch it is used with; `step_indices` performs that matching.
    """

    dates: tuple[float, ...]

    def __post_init__(self) -> None:
        dates = tuple(float(t) for t in self.dates)
        object.__setattr__(self, "dates", dates)
        if not dates:
            raise ValueError("at least one exercise date is required")
        if dates[0] < 0.0:
            raise ValueError(f"dates must be nonnegative, got {dates[0]}")
        if dates[-1] <= 0.0:
            raise ValueError("the final exercise date must be positive")
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise ValueError("dates must be strictly increasing")

    @classmethod
    def equidistant(cls, maturity: float, n: int) -> "ExerciseGrid":
        """The n + 1 dates i * maturity / n, i = 0..n."""
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        if maturity <= 0.0:
            raise ValueError(f"maturity must be positive, got {maturity}")
        return cls(tuple(i * maturity / n for i in range(n)) + (maturity,))

    @property
    def n(self) -> int:
        """Count parameter N (dates minus one)."""
        return len(self.dates) - 1

    @property
    def mesh(self) -> float:
        """Largest spacing between consecutive dates (0 for a single date)."""
        if len(self.dates) == 1:
            return 0.0
        return float(np.max(np.diff(self.dates)))

    def step_indices(self, grid: SimGrid) -> np.ndarray:
        """Simulation step index of each date, or a ValueError off the grid."""
        dates = np.asarray(self.dates)
        steps = np.rint(dates / grid.dt).astype(np.int64)
        if np.any(np.abs(steps * grid.dt - dates) > 1e-9 * max(1.0, grid.maturity)):
            raise ValueError("every exercise date must coincide with a simulation node")
        if steps[-1] != grid.n_steps:
            raise ValueError(
                f"last exercise date {self.dates[-1]} is not the batch horizon {grid.maturity}"
            )
        return steps


@dataclass(frozen=True)
class BasisSpec:
    """Regression family: tensor products over {1} u {e^{-z} L_i(z)}.

    strike scales the spot argument (z1 = S / strike) and var_scale the
    variance argument (z2 = max(V, 0) / var_scale).  With the default orders
    (0, 1, 2) and the constant included the family has 16 members.
    """

    strike: float
    var_scale: float
    laguerre_orders: tuple[int, ...] = (0, 1, 2)
    include_constant: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "laguerre_orders", tuple(int(i) for i in self.laguerre_orders))
        if self.strike <= 0.0:
            raise ValueError(f"strike must be positive, got {self.strike}")
        if self.var_scale <= 0.0:
            raise ValueError(f"var_scale must be positive, got {self.var_scale}")
        orders = self.laguerre_orders
        if any(i < 0 for i in orders) or len(set(orders)) != len(orders):
            raise ValueError(f"orders must be distinct and nonnegative, got {orders}")
        if not orders and not self.include_constant:
            raise ValueError("the family must contain at least one function")

    @property
    def size(self) -> int:
        """Number of tensor-product regressors."""
        k = len(self.laguerre_orders) + (1 if self.include_constant else 0)
        return k * k


def default_basis(strike: float, nu_bar: float) -> BasisSpec:
    """The 16-function family with the variance scaled by nu_bar.

    A zero long-run level leaves nothing to scale by; the variance argument
    is then passed through unscaled.
    """
    return BasisSpec(strike=strike, var_scale=nu_bar if nu_bar > 0.0 else 1.0)


def _family(spec: BasisSpec, z: np.ndarray) -> np.ndarray:
    cols = []
    if spec.include_constant:
        cols.append(np.ones_like(z))
    if spec.laguerre_orders:
        damp = np.exp(-z)
        for i in spec.laguerre_orders:
            coef = np.zeros(i + 1)
            coef[i] = 1.0
            cols.append(damp * laguerre.lagval(z, coef))
    return np.stack(cols, axis=-1)


def basis_eval(spec: BasisSpec, s, v) -> np.ndarray:
    """Evaluate the tensor family; returns shape (..., spec.size).

    The spot must be positive; the variance may be negative and is clamped
    at zero before scaling.  Entry order is row-major in (spot function,
    variance function), the constant (when included) coming first on each
    axis.
    """
    s = np.asarray(s, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(s <= 0.0):
        raise ValueError("spot values must be positive")
    f1 = _family(spec, s / spec.strike)
    f2 = _family(spec, np.maximum(v, 0.0) / spec.var_scale)
    out = f1[..., :, None] * f2[..., None, :]
    return out.reshape(out.shape[:-2] + (spec.size,))


def put_payoff(strike: float) -> Callable[[np.ndarray], np.ndarray]:
    """The put payoff (strike - S)^+ as a reusable callable."""
    if strike <= 0.0:
        raise ValueError(f"strike must be positive, got {strike}")

    def payoff(s: np.ndarray) -> np.ndarray:
        return np.maximum(strike - np.asarray(s, dtype=float), 0.0)

    return payoff


@dataclass(frozen=True)
class PricingResult:
    """Value of the induced stopping policy plus regression diagnostics.

    exercise_fraction_per_date[j] is the fraction of paths whose cash flow
    is realised at date j (the final entry also counts paths that never
    exercise and expire worthless).  regression_condition_numbers holds one
    entry per date, nan where no regression ran (the final date, and dates
    held for lack of in-the-money paths).  ridge_dates, all_path_dates and
    held_dates list the date indices where the respective fallback fired.
    """

    price: float
    stderr: float
    n_paths: int
    exercise_fraction_per_date: tuple[float, ...]
    regression_condition_numbers: tuple[float, ...]
    ridge_dates: tuple[int, ...]
    all_path_dates: tuple[int, ...]
    held_dates: tuple[int, ...]


def _solve_regression(design: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float, bool]:
    """Least squares via SVD; ridge with eps = 1e-10 * s_max^2 on deficiency."""
    u, s, vt = np.linalg.svd(design, full_matrices=False)
    smax = float(s[0])
    if smax == 0.0:
        return np.zeros(design.shape[1]), np.inf, True
    tol = smax * max(design.shape) * np.finfo(float).eps
    uy = u.T @ y
    if s[-1] <= tol:
        eps = 1e-10 * smax * smax
        coef = vt.T @ (s / (s * s + eps) * uy)
        ridged = True
    else:
        coef = vt.T @ (uy / s)
        ridged = False
    cond = smax / float(s[-1]) if s[-1] > 0.0 else np.inf
    return coef, cond, ridged


def _induct(
    batch: PathBatch,
    dates: tuple[float, ...],
    cols: Sequence[int],
    payoff: Callable[[np.ndarray], np.ndarray],
    spec: BasisSpec,
    r: float,
    frozen_coeffs: Optional[list[Optional[np.ndarray]]] = None,
):
    """Backward induction; learns coefficients unless frozen ones are given."""
    n_dates = len(dates)
    n_paths = batch.n_paths
    disc = np.array([math.exp(-r * t) for t in dates])

    s_last = np.exp(batch.logprice[:, cols[-1]])
    cf = np.asarray(payoff(s_last), dtype=float)
    if cf.shape != (n_paths,):
        raise ValueError("payoff must map a path vector to a path vector")
    cf = cf.copy()
    cf_date = np.full(n_paths, n_dates - 1, dtype=np.int64)

    conds = [math.nan] * n_dates
    ridge_dates: list[int] = []
    all_path_dates: list[int] = []
    held_dates: list[int] = []
    coeffs: list[Optional[np.ndarray]] = [None] * n_dates
    learning = frozen_coeffs is None

    for j in range(n_dates - 2, -1, -1):
        s_j = np.exp(batch.logprice[:, cols[j]])
        pay_now = np.asarray(payoff(s_j), dtype=float)
        itm = pay_now > 0.0
        n_itm = int(np.count_nonzero(itm))

        if learning:
            if n_itm < spec.size:
                held_dates.append(j)
                continue
            v_j = batch.variance[:, cols[j]]
            y = cf * (disc[cf_date] / disc[j])
            if n_itm < 4 * spec.size:
                design_all = basis_eval(spec, s_j, v_j)
                coef, cond, ridged = _solve_regression(design_all, y)
                design_itm = design_all[itm]
                all_path_dates.append(j)
            else:
                design_itm = basis_eval(spec, s_j[itm], v_j[itm])
                coef, cond, ridged = _solve_regression(design_itm, y[itm])
            conds[j] = cond
            if ridged:
                ridge_dates.append(j)
            coeffs[j] = coef
        else:
            coef = frozen_coeffs[j]
            if coef is None or n_itm == 0:
                continue
            v_j = batch.variance[:, cols[j]]
            design_itm = basis_eval(spec, s_j[itm], v_j[itm])

        continuation = design_itm @ coef
        exercise = pay_now[itm] >= continuation
        idx = np.flatnonzero(itm)[exercise]
        cf[idx] = pay_now[itm][exercise]
        cf_date[idx] = j

    vals = cf * disc[cf_date]
    # identical samples have mean vals[0] and spread 0 exactly; np.mean's
    # pairwise sums can be an ulp off, which matters in degenerate cases
    if np.ptp(vals) == 0.0:
        price = float(vals[0])
        stderr = 0.0
    else:
        price = float(np.mean(vals))
        stderr = float(np.std(vals, ddof=1)) / math.sqrt(n_paths) if n_paths > 1 else 0.0
    fractions = np.bincount(cf_date, minlength=n_dates) / n_paths
    result = PricingResult(
        price=price,
        stderr=stderr,
        n_paths=n_paths,
        exercise_fraction_per_date=tuple(fractions),
        regression_condition_numbers=tuple(conds),
        ridge_dates=tuple(sorted(ridge_dates)),
        all_path_dates=tuple(sorted(all_path_dates)),
        held_dates=tuple(sorted(held_dates)),
    )
    return result, coeffs


def _grid_columns(batch: PathBatch, grid: ExerciseGrid) -> list[int]:
    steps = grid.step_indices(batch.grid)
    return [batch.column_of(int(k)) for k in steps]


def bermudan_price(
    batch: PathBatch,
    grid: ExerciseGrid,
    payoff: Callable[[np.ndarray], np.ndarray],
    spec: BasisSpec,
    r: Optional[float] = None,
) -> PricingResult:
    """Value the Bermudan option on the batch (in-sample policy value).

    payoff maps a vector of spot levels to the immediate exercise values;
    it must be bounded for the regression to be meaningful.  Exercise is
    decided on in-the-money paths by comparing the immediate payoff with
    the fitted continuation value, ties exercising.  The single-date grid
    {T} reproduces the European Monte Carlo price exactly.

    Fallbacks, all recorded in the result: dates with fewer in-the-money
    paths than regressors hold; dates with fewer than four times as many
    regress on all paths; rank-deficient designs switch to a ridge solve.
    """
    if r is None:
        r = batch.params.r
    cols = _grid_columns(batch, grid)
    result, _ = _induct(batch, grid.dates, cols, payoff, spec, float(r))
    return result


def bermudan_price_out_of_sample(
    fit_batch: PathBatch,
    value_batch: PathBatch,
    grid: ExerciseGrid,
    payoff: Callable[[np.ndarray], np.ndarray],
    spec: BasisSpec,
    r: Optional[float] = None,
) -> PricingResult:
    """Fit the policy on one batch and value it on an independent one.

    Removes the in-sample selection bias of `bermudan_price`; the result is
    a clean lower bound estimate for the Bermudan value.  Diagnostics other
    than exercise fractions refer to the valuation pass, whose regressions
    are frozen, so its condition numbers are all nan.
    """
    if r is None:
        r = value_batch.params.r
    if abs(fit_batch.grid.maturity - value_batch.grid.maturity) > 1e-12:
        raise ValueError("fit and valuation batches must share the horizon")
    fit_cols = _grid_columns(fit_batch, grid)
    _, coeffs = _induct(fit_batch, grid.dates, fit_cols, payoff, spec, float(r))
    value_cols = _grid_columns(value_batch, grid)
    result, _ = _induct(
        value_batch, grid.dates, value_cols, payoff, spec, float(r), frozen_coeffs=coeffs
    )
    return result


def bermudan_in_N(
    batch: PathBatch,
    counts: Sequence[int],
    payoff: Callable[[np.ndarray], np.ndarray],
    spec: BasisSpec,
    r: Optional[float] = None,
) -> list[PricingResult]:
    """Price on equidistant exercise grids with N in counts, one batch.

    Reusing a single batch across the grids prices the whole refinement
    sequence under common random numbers, so the differences between
    consecutive prices carry far less Monte Carlo noise than the prices.
    """
    return [
        bermudan_price(batch, ExerciseGrid.equidistant(batch.grid.maturity, int(n)), payoff, spec, r)
        for n in counts
    ]


def critical_price(
    pricing: Callable[[float], PricingResult],
    strike: float,
    bounds: tuple[float, float],
    tol: float = 1e-2,
) -> float:
    """Largest spot in bounds where the put value matches (strike - S0)^+.

    pricing maps a spot level to a PricingResult and should reuse common
    random numbers across levels (`PathBatch.with_spot` makes that free).
    A level matches when price - payoff <= max(3 * stderr, tol); bisection
    refines the match boundary to width tol and returns the largest level
    confirmed to match.  When even the lower bound fails to match, no
    critical price exists in the range and CriticalPriceNotFound is raised.
    """
    lo, hi = float(bounds[0]), float(bounds[1])
    if not 0.0 < lo < hi:
        raise ValueError(f"bounds must satisfy 0 < lo < hi, got {bounds}")
    if tol <= 0.0:
        raise ValueError(f"tol must be positive, got {tol}")

    def matches(s0: float) -> bool:
        res = pricing(s0)
        eps = max(3.0 * res.stderr, tol)
        return res.price - max(strike - s0, 0.0) <= eps

    if not matches(lo):
        raise CriticalPriceNotFound(
            f"price exceeds the immediate payoff everywhere in [{lo}, {hi}]"
        )
    if matches(hi):
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if matches(mid):
            lo = mid
        else:
            hi = mid
    return lo
