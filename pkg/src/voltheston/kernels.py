"""Exponential-sum approximation of the singular power-law memory kernel.

The fractional kernel

    K(t) = t**(alpha - 1) / Gamma(alpha),        1/2 < alpha <= 1,

is completely monotone and can be written as a Laplace transform of the
measure  mu(dx) = x**(-alpha) / (Gamma(alpha) Gamma(1-alpha)) dx  on
(0, inf).  Chopping the half line into cells [eta_{i-1}, eta_i) and replacing
the measure on each cell by a point mass at its barycentre yields

    K_n(t) = sum_i c_i * exp(-x_i t),
    c_i = mu([eta_{i-1}, eta_i)),      x_i = (1/c_i) * int_cell x mu(dx),

which turns the Volterra variance process into an (n+1)-dimensional Markov
system.  For geometric cells eta_i = ratio**(i - n/2) both the weights and
the nodes have closed forms, and the squared L2(0,T) distance between K and
K_n is available in closed form as well, so the cell ratio can be tuned by a
one-dimensional minimisation.

Quality of a fit is always measured through :func:`l2_error_squared`; the
simulation and transform layers consume the resulting
:class:`MultiExpKernel` without ever needing the singular kernel again.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Union

import numpy as np
from scipy import integrate, optimize, special

from .params import HestonParams

__all__ = [
    "FractionalKernel",
    "GeometricPartition",
    "MeasureDensity",
    "MultiExpKernel",
    "KernelChoice",
    "build_multiexp",
    "build_multiexp_general",
    "l2_error_squared",
    "optimize_ratio",
    "RatioFit",
    "regularized_lower_gamma",
    "v0_curve",
    "v0_integral",
]

#: Default search bracket for the cell ratio.  The lower end keeps the
#: geometric grid non-degenerate; 500 is far beyond any optimum seen for
#: n >= 2 at maturities of practical interest.
RATIO_BRACKET = (1.0 + 1e-6, 500.0)


@dataclass(frozen=True)
class FractionalKernel:
    """The power kernel t**(alpha-1)/Gamma(alpha) with alpha in (1/2, 1].

    alpha = 1 gives the flat kernel of the classical square-root model;
    alpha < 1 gives a kernel that is singular at zero and produces rough
    sample paths of the variance.
    """

    alpha: float

    def __post_init__(self) -> None:
        if not 0.5 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (1/2, 1], got {self.alpha}")

    def __call__(self, t):
        """Evaluate K(t) for t > 0 (scalar or array)."""
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0.0):
            raise ValueError("kernel evaluation requires t > 0")
        return t ** (self.alpha - 1.0) / math.gamma(self.alpha)

    def integral(self, t):
        """int_0^t K(s) ds = t**alpha / Gamma(1+alpha), valid for t >= 0."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0):
            raise ValueError("kernel integral requires t >= 0")
        return t ** self.alpha / math.gamma(1.0 + self.alpha)

    def norm2_squared(self, horizon: float) -> float:
        """Squared L2(0, horizon) norm, finite because alpha > 1/2."""
        if horizon <= 0.0:
            raise ValueError("horizon must be positive")
        a = self.alpha
        return horizon ** (2.0 * a - 1.0) / ((2.0 * a - 1.0) * math.gamma(a) ** 2)


@dataclass(frozen=True)
class MeasureDensity:
    """Density of a nonnegative mixing measure on (0, inf).

    Wraps a plain callable so that generic cell constructions can be reused
    for kernels other than the fractional one.  The density only has to be
    integrable against 1 and x on every bounded cell away from zero.
    """

    density: Callable[[np.ndarray], np.ndarray]

    @classmethod
    def fractional(cls, alpha: float) -> "MeasureDensity":
        """Mixing density of the power kernel: x**(-alpha)/(Gamma(alpha)Gamma(1-alpha))."""
        if not 0.5 < alpha < 1.0:
            raise ValueError(
                f"fractional mixing density needs alpha in (1/2, 1), got {alpha}"
            )
        norm = math.gamma(alpha) * math.gamma(1.0 - alpha)

        def dens(x):
            x = np.asarray(x, dtype=float)
            return x ** (-alpha) / norm

        return cls(dens)

    def __call__(self, x):
        return self.density(x)


@dataclass(frozen=True)
class GeometricPartition:
    """Geometric cells eta_i = ratio**(i - n/2), i = 0..n, on (0, inf).

    The grid is centred at 1 on a log scale and the cell width ratio is
    constant, which is what makes the fitted weights and nodes closed-form.
    """

    n: int
    ratio: float

    def __post_init__(self) -> None:
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if not math.isfinite(self.ratio) or self.ratio <= 1.0:
            raise ValueError(f"ratio must be finite and > 1, got {self.ratio}")

    @property
    def edges(self) -> np.ndarray:
        """Cell edges eta_0 < ... < eta_n."""
        i = np.arange(self.n + 1, dtype=float)
        return self.ratio ** (i - self.n / 2.0)


def regularized_lower_gamma(a, x):
    """Regularised lower incomplete gamma P(a, x) = gamma(a, x) / Gamma(a).

    Thin wrapper over scipy's implementation (series for small x, continued
    fraction for large x) with the domain checks this library relies on.
    P(a, 0) = 0 and P(a, inf) = 1; P is increasing in x for fixed a > 0.
    """
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(a <= 0.0):
        raise ValueError("shape parameter a must be positive")
    if np.any(x < 0.0):
        raise ValueError("argument x must be nonnegative")
    return special.gammainc(a, x)


@dataclass(frozen=True, eq=False)
class MultiExpKernel:
    """Finite sum of exponentials K_n(t) = sum_i weights[i] * exp(-nodes[i] t).

    Weights are positive and nodes strictly increasing and positive, except
    for the flat one-factor special case (weight 1, node 0) used to embed the
    classical square-root model; that case is marked with ``classical=True``
    and can only be built through :meth:`classical_heston`.

    An empty kernel (no terms) is allowed and evaluates to zero; it is
    occasionally useful as a baseline in error computations.
    """

    weights: np.ndarray
    nodes: np.ndarray
    partition_ratio: float | None = None
    classical: bool = field(default=False)

    def __post_init__(self) -> None:
        w = np.atleast_1d(np.asarray(self.weights, dtype=float)).copy()
        x = np.atleast_1d(np.asarray(self.nodes, dtype=float)).copy()
        if w.size == 0:
            w = w.reshape(0)
            x = np.asarray(x, dtype=float).reshape(0)
        if w.shape != x.shape or w.ndim != 1:
            raise ValueError("weights and nodes must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(x))):
            raise ValueError("weights and nodes must be finite")
        if self.classical:
            if not (w.size == 1 and w[0] == 1.0 and x[0] == 0.0):
                raise ValueError("classical kernel is exactly weight 1, node 0")
        else:
            if np.any(w <= 0.0):
                raise ValueError("weights must be positive")
            if np.any(x <= 0.0):
                raise ValueError("nodes must be positive")
            if np.any(np.diff(x) <= 0.0):
                raise ValueError("nodes must be strictly increasing")
        w.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "nodes", x)

    @classmethod
    def classical_heston(cls) -> "MultiExpKernel":
        """Flat kernel K_n = 1: the classical square-root volatility model."""
        return cls(np.array([1.0]), np.array([0.0]), None, classical=True)

    @property
    def n(self) -> int:
        return int(self.weights.size)

    def __call__(self, t):
        """Evaluate K_n(t) for t >= 0 (scalar or array)."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0):
            raise ValueError("kernel evaluation requires t >= 0")
        if self.n == 0:
            return np.zeros_like(t)
        return np.exp(-np.multiply.outer(t, self.nodes)) @ self.weights

    def integral(self, t):
        """int_0^t K_n(s) ds = sum_i (c_i/x_i)(1 - exp(-x_i t)), node 0 giving c_i t."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0):
            raise ValueError("kernel integral requires t >= 0")
        if self.n == 0:
            return np.zeros_like(t)
        x = self.nodes
        xt = np.multiply.outer(t, x)
        safe_x = np.where(x > 0.0, x, 1.0)
        per_node = np.where(x > 0.0, -np.expm1(-xt) / safe_x, t[..., None])
        return per_node @ self.weights


def build_multiexp(kernel: FractionalKernel, partition: GeometricPartition) -> MultiExpKernel:
    """Closed-form exponential-sum fit of the power kernel on geometric cells.

    Each cell carries its exact measure mass as weight and its barycentre as
    node:

        c_i = (ratio**(1-a) - 1) / (Gamma(a) Gamma(2-a)) * ratio**((1-a)(i-1-n/2)),
        x_i = (1-a)/(2-a) * (ratio**(2-a) - 1)/(ratio**(1-a) - 1) * ratio**(i-1-n/2),

    for i = 1..n with a = alpha.  alpha = 1 is rejected: the flat kernel has
    no mixing density, use :meth:`MultiExpKernel.classical_heston` instead.
    """
    a = kernel.alpha
    if a >= 1.0:
        raise ValueError(
            "alpha = 1 has no exponential-sum representation; "
            "use MultiExpKernel.classical_heston() for the flat kernel"
        )
    n, rn = partition.n, partition.ratio
    i = np.arange(1, n + 1, dtype=float)
    c = (
        (rn ** (1.0 - a) - 1.0)
        / (math.gamma(a) * math.gamma(2.0 - a))
        * rn ** ((1.0 - a) * (i - 1.0 - n / 2.0))
    )
    x = (
        (1.0 - a)
        / (2.0 - a)
        * (rn ** (2.0 - a) - 1.0)
        / (rn ** (1.0 - a) - 1.0)
        * rn ** (i - 1.0 - n / 2.0)
    )
    return MultiExpKernel(c, x, partition_ratio=rn)


def build_multiexp_general(measure: MeasureDensity, edges) -> MultiExpKernel:
    """Mass/barycentre fit for an arbitrary mixing density on given cells.

    Integrates the density and its first moment over every cell with
    adaptive quadrature.  Cells of numerically zero mass are dropped.  A
    non-integrable or non-finite cell raises a ValueError naming the cell.
    """
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2:
        raise ValueError("edges must be a 1-d array with at least two entries")
    if np.any(edges <= 0.0) or np.any(np.diff(edges) <= 0.0):
        raise ValueError("edges must be positive and strictly increasing")

    weights, nodes = [], []
    for i in range(edges.size - 1):
        lo, hi = edges[i], edges[i + 1]
        try:
            mass, _ = integrate.quad(measure, lo, hi, limit=200)
            moment, _ = integrate.quad(lambda x: x * measure(x), lo, hi, limit=200)
        except Exception as exc:
            raise ValueError(f"quadrature failed on cell {i} = [{lo}, {hi}]") from exc
        if not (math.isfinite(mass) and math.isfinite(moment)) or mass < 0.0:
            raise ValueError(f"density is not integrable on cell {i} = [{lo}, {hi}]")
        if mass <= 0.0 or moment <= 0.0:
            continue
        weights.append(mass)
        nodes.append(moment / mass)
    return MultiExpKernel(np.array(weights), np.array(nodes))


def l2_error_squared(kernel: FractionalKernel, approx: MultiExpKernel, horizon: float) -> float:
    """Squared L2(0, horizon) distance between the power kernel and a fit.

    Expanding the square gives three closed-form pieces:

        |K_n|^2   = sum_{i,j} c_i c_j (1 - exp(-(x_i+x_j) T)) / (x_i + x_j),
        <K, K_n>  = sum_i c_i x_i**(-a) P(a, x_i T),
        |K|^2     = T**(2a-1) / ((2a-1) Gamma(a)**2),

    with P the regularised lower incomplete gamma.  Zero nodes are handled by
    their limits ((x_i + x_j) -> 0 gives T, x**(-a) P(a, xT) -> T**a/Gamma(1+a)).
    Tiny negative round-off is clamped to zero; a result below -1e-12 trips a
    warning because it indicates a genuinely inconsistent input.
    """
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    a = kernel.alpha
    T = float(horizon)
    c, x = approx.weights, approx.nodes

    if approx.n:
        s = x[:, None] + x[None, :]
        safe_s = np.where(s > 0.0, s, 1.0)
        gram_terms = np.where(s > 0.0, -np.expm1(-safe_s * T) / safe_s, T)
        gram = float(c @ gram_terms @ c)

        safe_x = np.where(x > 0.0, x, 1.0)
        cross_terms = np.where(
            x > 0.0,
            safe_x ** (-a) * special.gammainc(a, safe_x * T),
            T ** a / math.gamma(1.0 + a),
        )
        cross = float(c @ cross_terms)
    else:
        gram = 0.0
        cross = 0.0

    total = gram - 2.0 * cross + kernel.norm2_squared(T)
    if total < -1e-12:
        warnings.warn(
            f"l2_error_squared came out at {total}, well below zero; "
            "the inputs are inconsistent",
            RuntimeWarning,
        )
    return max(total, 0.0)


class RatioFit(NamedTuple):
    """Result of the cell-ratio search."""

    ratio: float
    norm2: float
    at_bracket_edge: bool


def optimize_ratio(
    kernel: FractionalKernel,
    n: int,
    horizon: float,
    bracket: tuple[float, float] = RATIO_BRACKET,
) -> RatioFit:
    """Tune the geometric cell ratio to minimise the L2 fit error.

    Runs a bounded scalar minimisation (golden section with parabolic
    interpolation, absolute x tolerance 1e-6) of
    ``l2_error_squared(kernel, build_multiexp(kernel, partition), horizon)``
    over the ratio.  A minimiser within ten tolerances of either bracket end
    sets ``at_bracket_edge`` and emits a warning, since it usually means the
    bracket clipped the optimum.
    """
    lo, hi = bracket
    if not lo < hi:
        raise ValueError(f"bracket must satisfy lo < hi, got {bracket}")
    if lo <= 1.0:
        raise ValueError("bracket must stay above ratio = 1")

    def objective(ratio: float) -> float:
        part = GeometricPartition(n, float(ratio))
        return l2_error_squared(kernel, build_multiexp(kernel, part), horizon)

    xatol = 1e-6
    ratio = float(optimize.fminbound(objective, lo, hi, xtol=xatol, maxfun=500))
    norm2 = objective(ratio)
    at_edge = min(ratio - lo, hi - ratio) < 10.0 * xatol
    if at_edge:
        warnings.warn(
            f"ratio optimum {ratio} sits at the bracket edge {bracket}",
            RuntimeWarning,
        )
    return RatioFit(ratio, norm2, at_edge)


KernelChoice = Union[FractionalKernel, MultiExpKernel]


def v0_curve(params: HestonParams, kernel: KernelChoice, t):
    """Forward variance input v_0(t) = V_0 + lam * nu_bar * int_0^t K(s) ds.

    Closed form for both kernel flavours:  the power kernel integrates to
    t**alpha/Gamma(1+alpha), the exponential sum to
    sum_i (c_i/x_i)(1 - exp(-x_i t)).  Accepts scalar or array t >= 0.
    """
    t = np.asarray(t, dtype=float)
    return params.v0 + params.lam * params.nu_bar * kernel.integral(t)


def v0_integral(params: HestonParams, kernel: KernelChoice, t):
    """Antiderivative int_0^t v_0(s) ds, used by the transform layer.

    For the power kernel the inner double integral collapses to
    t**(1+alpha)/Gamma(2+alpha); for an exponential sum it is
    sum_i (c_i/x_i) (t - (1 - exp(-x_i t))/x_i), with the node-zero limit
    c_i t**2 / 2.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise ValueError("antiderivative requires t >= 0")
    base = params.v0 * t
    scale = params.lam * params.nu_bar
    if isinstance(kernel, FractionalKernel):
        a = kernel.alpha
        return base + scale * t ** (1.0 + a) / math.gamma(2.0 + a)
    if isinstance(kernel, MultiExpKernel):
        if kernel.n == 0:
            return base
        x = kernel.nodes
        xt = np.multiply.outer(t, x)
        safe_x = np.where(x > 0.0, x, 1.0)
        inner = np.where(
            x > 0.0,
            (t[..., None] + np.expm1(-xt) / safe_x) / safe_x,
            0.5 * t[..., None] ** 2,
        )
        return base + scale * (inner @ kernel.weights)
    raise TypeError(f"unsupported kernel type {type(kernel).__name__}")
