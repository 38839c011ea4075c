"""Riccati-Volterra equations and the exponential affine transform.

For the model of :mod:`voltheston.params` the conditional Fourier-Laplace
functional of (log price, variance curve) is exponentially affine: with

    R(w, p) = (w^2 - w)/2 + (rho eta w - lam + eta^2 p / 2) p

and psi solving the convolution equation

    psi(t) = int_0^inf h(xi) K(t + xi) dxi + (K * R(w, psi))(t),

one has, for Re(w) in [0, 1] and piecewise-constant h with Re(h) <= 0,

    E_t[ exp(w X_T + int h(xi) v_T(xi) dxi) ]
        = exp( w (X_t + r (T-t)) + int_0^inf Psi(T-t, xi) v_t(xi) dxi ),

where v_t is the adjusted forward variance curve and Psi(t, xi) equals
h(xi - t) for xi >= t and R(w, psi(t - xi)) for xi < t.

Two solvers are provided.  For an exponential-sum kernel, psi decomposes
over the factors,

    psi(t) = sum_i c_i (H_i exp(-x_i t) + g_i(t)),
    g_i' = -x_i g_i + R(w, psi),   g_i(0) = 0,
    H_i = int_0^inf h(xi) exp(-x_i xi) dxi,

and each factor is advanced by an exact integrating-factor step in the
linear part, which stays stable for nodes of any stiffness.  For the power
kernel the equation is an Abel integral equation and is solved by the
standard fractional Adams predictor-corrector.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import BlowUpError
from .kernels import FractionalKernel, KernelChoice, MultiExpKernel, v0_curve, v0_integral
from .params import HestonParams

__all__ = [
    "TransformQuery",
    "PsiSolution",
    "riccati_rhs",
    "solve_psi_lifted",
    "solve_psi_fractional",
    "laplace_transform_t0",
    "transform_batch",
    "conditional_transform",
    "adjusted_forward_curve",
]

#: Magnitude cap beyond which a Riccati iterate is declared divergent.
PSI_CAP = 1e8

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


@dataclass(frozen=True)
class TransformQuery:
    """One transform evaluation point: exponent w and boundary weight h.

    w must satisfy 0 <= Re(w) <= 1 (the strip on which the transform is
    known to exist for bounded payoff transforms).  h is piecewise constant
    on [breaks[j], breaks[j+1]) with complex values of nonpositive real
    part, and zero beyond the last break; an empty h is the plain Fourier
    case.  Tuples rather than arrays so that queries compare by value.
    """

    w: complex
    horizon: float
    h_breaks: tuple[float, ...] = ()
    h_values: tuple[complex, ...] = ()

    def __post_init__(self) -> None:
        w = complex(self.w)
        object.__setattr__(self, "w", w)
        if not 0.0 <= w.real <= 1.0:
            raise ValueError(f"Re(w) must lie in [0, 1], got {w.real}")
        if not (math.isfinite(self.horizon) and self.horizon > 0.0):
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        br = tuple(float(b) for b in self.h_breaks)
        hv = tuple(complex(v) for v in self.h_values)
        object.__setattr__(self, "h_breaks", br)
        object.__setattr__(self, "h_values", hv)
        if br or hv:
            if len(br) != len(hv) + 1:
                raise ValueError("need one more break than h values")
            if br[0] < 0.0 or any(b >= c for b, c in zip(br, br[1:])):
                raise ValueError("h breaks must be nonnegative and increasing")
            if not all(cmath.isfinite(v) for v in hv):
                raise ValueError("h values must be finite")
            if any(v.real > 0.0 for v in hv):
                raise ValueError("h values must have nonpositive real part")

    @classmethod
    def pure(cls, w: complex, horizon: float) -> "TransformQuery":
        """Query with h identically zero."""
        return cls(w, horizon)

    @property
    def is_pure(self) -> bool:
        return len(self.h_values) == 0


@dataclass(frozen=True, eq=False)
class PsiSolution:
    """Riccati solution on a uniform grid over [0, horizon].

    values[k] is psi(times[k]).  For the exponential-sum solver, factors[i]
    holds the per-factor component H_i exp(-x_i t) + g_i(t), so that
    psi = weights @ factors at every node.
    """

    query: TransformQuery
    kernel: KernelChoice
    times: np.ndarray
    values: np.ndarray
    dt: float
    factors: Optional[np.ndarray] = None

    @property
    def horizon(self) -> float:
        return self.query.horizon


def riccati_rhs(params: HestonParams, w, p):
    """The quadratic map R(w, p) = (w^2 - w)/2 + (rho eta w - lam + eta^2 p/2) p."""
    w = np.asarray(w)
    p = np.asarray(p)
    lin = params.rho * params.eta * w - params.lam
    return 0.5 * (w * w - w) + (lin + 0.5 * params.eta**2 * p) * p


def _h_factor_coefficients(query: TransformQuery, nodes: np.ndarray) -> np.ndarray:
    """H_i = int h(xi) exp(-x_i xi) dxi, exact for piecewise-constant h."""
    H = np.zeros(nodes.shape, dtype=complex)
    for j, val in enumerate(query.h_values):
        a, b = query.h_breaks[j], query.h_breaks[j + 1]
        safe = np.where(nodes > 0.0, nodes, 1.0)
        piece = np.where(
            nodes > 0.0,
            (np.exp(-safe * a) - np.exp(-safe * b)) / safe,
            b - a,
        )
        H = H + val * piece
    return H


def _grid(horizon: float, dt: Optional[float]) -> tuple[int, float]:
    """Number of steps and effective step for a uniform grid over [0, horizon]."""
    if dt is None:
        dt = 1e-3 * horizon
    if not (0.0 < dt <= horizon):
        raise ValueError(f"dt must lie in (0, horizon], got {dt}")
    n_steps = max(1, round(horizon / dt))
    return n_steps, horizon / n_steps


def solve_psi_lifted(
    params: HestonParams,
    approx: MultiExpKernel,
    query: TransformQuery,
    dt: Optional[float] = None,
) -> PsiSolution:
    """March the factor system of the Riccati equation for a sum kernel.

    Each factor receives an exact exponential step in its linear part and an
    explicit (frozen over the step) evaluation of R:

        g_i(t + dt) = exp(-x_i dt) g_i(t) + (1 - exp(-x_i dt))/x_i * R(w, psi(t)),

    with the node-zero limit dt * R.  First order in dt, unconditionally
    stable in the stiff direction.  Aborts with :class:`BlowUpError` if
    |psi| exceeds 1e8 before the horizon.
    """
    if approx.n == 0:
        raise ValueError("cannot solve on an empty kernel")
    n_steps, dt = _grid(query.horizon, dt)
    c, x = approx.weights, approx.nodes
    w = query.w

    H = _h_factor_coefficients(query, x)
    decay = np.exp(-x * dt)
    gain = np.where(x > 0.0, -np.expm1(-x * dt) / np.where(x > 0.0, x, 1.0), dt)

    times = np.arange(n_steps + 1) * dt
    factors = np.zeros((x.size, n_steps + 1), dtype=complex)
    values = np.zeros(n_steps + 1, dtype=complex)
    factors[:, 0] = H
    values[0] = c @ H

    has_h = bool(np.any(H != 0.0))
    g = np.zeros(x.size, dtype=complex)
    for k in range(n_steps):
        rhs = riccati_rhs(params, w, values[k])
        g = decay * g + gain * rhs
        comp = H * np.exp(-x * times[k + 1]) + g if has_h else g
        psi_next = c @ comp
        if not np.isfinite(psi_next) or abs(psi_next) > PSI_CAP:
            raise BlowUpError(
                f"Riccati iterate exceeded {PSI_CAP:g} at t = {times[k + 1]:.6g}",
                t=float(times[k + 1]),
            )
        factors[:, k + 1] = comp
        values[k + 1] = psi_next

    return PsiSolution(query=query, kernel=approx, times=times, values=values, dt=dt, factors=factors)


def transform_batch(
    params: HestonParams,
    kernel: KernelChoice,
    ws: np.ndarray,
    horizon: float,
    dt: Optional[float] = None,
) -> np.ndarray:
    """Time-zero transform E[exp(w X_T)] for a whole array of exponents.

    Equivalent to solving each pure query and assembling the transform, but
    vectorised across w, which is what a Fourier quadrature grid needs.  For
    an exponential-sum kernel the trapezoid accumulation of the exponent
    integral runs alongside the march, so nothing of size (steps x batch) is
    ever stored.  The fractional path keeps its R history (the Adams scheme
    needs it anyway) and integrates it at the end.
    """
    ws = np.asarray(ws, dtype=complex)
    if ws.ndim != 1 or ws.size == 0:
        raise ValueError("ws must be a nonempty 1-d array")
    if np.any(ws.real < 0.0) or np.any(ws.real > 1.0):
        raise ValueError("every exponent must satisfy Re(w) in [0, 1]")
    if isinstance(kernel, MultiExpKernel):
        term_r = _exponent_integral_lifted(params, kernel, ws, horizon, dt)
    else:
        term_r = _exponent_integral_fractional(params, kernel, ws, horizon, dt)
    return np.exp(ws * (params.x0 + params.r * horizon) + term_r)


def _exponent_integral_lifted(
    params: HestonParams,
    approx: MultiExpKernel,
    ws: np.ndarray,
    horizon: float,
    dt: Optional[float],
) -> np.ndarray:
    """int_0^T R(w, psi(xi)) v0(T - xi) dxi for each w, trapezoid on the march grid."""
    if approx.n == 0:
        raise ValueError("cannot solve on an empty kernel")
    n_steps, dt = _grid(horizon, dt)
    c, x = approx.weights, approx.nodes

    decay = np.exp(-x * dt)[:, None]
    gain = np.where(x > 0.0, -np.expm1(-x * dt) / np.where(x > 0.0, x, 1.0), dt)[:, None]

    times = np.arange(n_steps + 1) * dt
    curve = v0_curve(params, approx, horizon - times)
    lin = params.rho * params.eta * ws - params.lam
    quad = 0.5 * params.eta**2
    const = 0.5 * (ws * ws - ws)

    psi = np.zeros(ws.size, dtype=complex)
    g = np.zeros((x.size, ws.size), dtype=complex)
    acc = np.zeros(ws.size, dtype=complex)
    for k in range(n_steps):
        rhs = const + (lin + quad * psi) * psi
        acc += (0.5 * dt if k == 0 else dt) * curve[k] * rhs
        g = decay * g + gain * rhs
        psi = c @ g
        amax = np.max(np.abs(psi))
        if not np.isfinite(amax) or amax > PSI_CAP:
            raise BlowUpError(
                f"Riccati iterate exceeded {PSI_CAP:g} at t = {times[k + 1]:.6g}",
                t=float(times[k + 1]),
            )
    acc += 0.5 * dt * curve[n_steps] * (const + (lin + quad * psi) * psi)
    return acc


def _exponent_integral_fractional(
    params: HestonParams,
    kernel: FractionalKernel,
    ws: np.ndarray,
    horizon: float,
    dt: Optional[float],
) -> np.ndarray:
    """Fractional-Adams analogue of :func:`_exponent_integral_lifted`."""
    n_steps, dt = _grid(horizon, dt)
    a = kernel.alpha
    m = np.arange(n_steps + 1, dtype=float)
    bw_rev = (dt**a / math.gamma(a + 1.0) * ((m[:n_steps] + 1.0) ** a - m[:n_steps] ** a))[::-1]
    cw_rev = (
        (m[:n_steps] + 2.0) ** (a + 1.0)
        - 2.0 * (m[:n_steps] + 1.0) ** (a + 1.0)
        + m[:n_steps] ** (a + 1.0)
    )[::-1]
    q = dt**a / math.gamma(a + 2.0)

    times = m * dt
    lin = params.rho * params.eta * ws - params.lam
    quad = 0.5 * params.eta**2
    const = 0.5 * (ws * ws - ws)

    rhs_hist = np.zeros((n_steps + 1, ws.size), dtype=complex)
    rhs_hist[0] = const
    for k in range(n_steps):
        pred = bw_rev[n_steps - 1 - k :] @ rhs_hist[: k + 1]
        rhs_pred = const + (lin + quad * pred) * pred
        head = (k ** (a + 1.0) - (k - a) * (k + 1.0) ** a) * rhs_hist[0]
        tail = cw_rev[n_steps - k :] @ rhs_hist[1 : k + 1] if k >= 1 else 0.0
        nxt = q * (rhs_pred + head + tail)
        amax = np.max(np.abs(nxt))
        if not np.isfinite(amax) or amax > PSI_CAP:
            raise BlowUpError(
                f"Riccati iterate exceeded {PSI_CAP:g} at t = {times[k + 1]:.6g}",
                t=float(times[k + 1]),
            )
        rhs_hist[k + 1] = const + (lin + quad * nxt) * nxt

    tw = np.full(n_steps + 1, dt)
    tw[0] = tw[-1] = 0.5 * dt
    return (tw * v0_curve(params, kernel, horizon - times)) @ rhs_hist


def solve_psi_fractional(
    params: HestonParams,
    kernel: FractionalKernel,
    query: TransformQuery,
    dt: Optional[float] = None,
) -> PsiSolution:
    """Fractional Adams predictor-corrector for psi = K * R(w, psi), h = 0.

    The equation is the Abel-kernel fixed point psi = I^alpha R(w, psi(.)),
    discretised with the product rectangle rule as predictor and the product
    trapezoid rule as corrector.  Convolution weights depend only on the lag,
    so every step is a dot product against the stored history of R values.
    """
    if not query.is_pure:
        raise ValueError("the fractional solver supports h = 0 only")
    n_steps, dt = _grid(query.horizon, dt)
    a = kernel.alpha
    w = query.w

    m = np.arange(n_steps + 1, dtype=float)
    # predictor: dt^a/Gamma(a+1) * ((m+1)^a - m^a), lag m
    bw = dt**a / math.gamma(a + 1.0) * ((m[: n_steps] + 1.0) ** a - m[: n_steps] ** a)
    # corrector interior: (m+2)^(a+1) - 2 (m+1)^(a+1) + m^(a+1), lag m
    cw = (m[: n_steps] + 2.0) ** (a + 1.0) - 2.0 * (m[: n_steps] + 1.0) ** (a + 1.0) + m[
        : n_steps
    ] ** (a + 1.0)
    q = dt**a / math.gamma(a + 2.0)
    bw_rev = bw[::-1]
    cw_rev = cw[::-1]

    times = m * dt
    values = np.zeros(n_steps + 1, dtype=complex)
    rhs_hist = np.zeros(n_steps + 1, dtype=complex)
    rhs_hist[0] = riccati_rhs(params, w, values[0])

    for k in range(n_steps):
        pred = bw_rev[n_steps - 1 - k :] @ rhs_hist[: k + 1]
        rhs_pred = riccati_rhs(params, w, pred)
        # corrector: trapezoid-product weights; lag-dependent part for j>=1,
        # plus the k-dependent weight on the oldest node j=0
        head = (k ** (a + 1.0) - (k - a) * (k + 1.0) ** a) * rhs_hist[0]
        tail = cw_rev[n_steps - k :] @ rhs_hist[1 : k + 1] if k >= 1 else 0.0
        nxt = q * (rhs_pred + head + tail)
        if not np.isfinite(nxt) or abs(nxt) > PSI_CAP:
            raise BlowUpError(
                f"Riccati iterate exceeded {PSI_CAP:g} at t = {times[k + 1]:.6g}",
                t=float(times[k + 1]),
            )
        values[k + 1] = nxt
        rhs_hist[k + 1] = riccati_rhs(params, w, nxt)

    return PsiSolution(query=query, kernel=kernel, times=times, values=values, dt=dt, factors=None)


def laplace_transform_t0(params: HestonParams, psi: PsiSolution) -> complex:
    """Time-zero transform E[exp(w X_T + int h(xi) v_T(xi) dxi)].

    Assembled from the solved psi as

        exp( w (X_0 + r T) + int h(xi) v_0(xi + T) dxi
             + int_0^T R(w, psi(xi)) v_0(T - xi) dxi ),

    with the h term exact (antiderivative of the forward curve) and the R
    term by the trapezoid rule on psi's own grid.
    """
    query = psi.query
    T = query.horizon
    w = query.w

    term_h = 0.0 + 0.0j
    for j, val in enumerate(query.h_values):
        lo, hi = query.h_breaks[j] + T, query.h_breaks[j + 1] + T
        term_h += val * (v0_integral(params, psi.kernel, hi) - v0_integral(params, psi.kernel, lo))

    rhs = riccati_rhs(params, w, psi.values)
    curve = v0_curve(params, psi.kernel, T - psi.times)
    term_r = _trapezoid(rhs * curve, dx=psi.dt)
    return complex(np.exp(w * (params.x0 + params.r * T) + term_h + term_r))


def adjusted_forward_curve(
    params: HestonParams,
    approx: MultiExpKernel,
    t: float,
    factor_values: np.ndarray,
    xi_grid: np.ndarray,
) -> np.ndarray:
    """Forward variance curve v_t(xi) = v0(t + xi) + sum_i c_i exp(-x_i xi) Y_i.

    factor_values may be a single state of shape (n,) or a batch (paths, n);
    the returned curve has shape (len(xi_grid),) or (paths, len(xi_grid)).
    v_t(0) is the spot variance at time t.
    """
    xi_grid = np.asarray(xi_grid, dtype=float)
    if np.any(xi_grid < 0.0):
        raise ValueError("curve offsets must be nonnegative")
    Y = np.asarray(factor_values, dtype=float)
    if Y.shape[-1] != approx.n:
        raise ValueError(f"expected {approx.n} factor values, got shape {Y.shape}")
    base = v0_curve(params, approx, t + xi_grid)
    mix = (approx.weights[:, None] * np.exp(-np.multiply.outer(approx.nodes, xi_grid)))
    return base + Y @ mix


def conditional_transform(
    params: HestonParams,
    psi: PsiSolution,
    t: float,
    x_t,
    factor_values: np.ndarray,
) -> np.ndarray:
    """Conditional transform E_t[exp(w X_T)] from a simulated state.

    Requires an h = 0 query solved on an exponential-sum kernel, and t on
    psi's grid.  x_t and factor_values may be batched (shapes (paths,) and
    (paths, n)); the result matches the batch shape.

        L_t = exp( w (X_t + r (T-t))
                   + int_0^(T-t) R(w, psi(T - t - xi)) v_t(xi) dxi ).
    """
    if not psi.query.is_pure:
        raise ValueError("conditional transform requires h = 0")
    approx = psi.kernel
    if not isinstance(approx, MultiExpKernel):
        raise ValueError("conditional transform requires an exponential-sum kernel")
    T = psi.horizon
    if not 0.0 <= t <= T + 1e-12:
        raise ValueError(f"t must lie in [0, horizon], got {t}")
    tau = T - t
    j = int(round(tau / psi.dt))
    if abs(tau - j * psi.dt) > 1e-9 * max(1.0, T):
        raise ValueError(f"t = {t} does not land on the psi grid (dt = {psi.dt})")

    w = psi.query.w
    x_t = np.asarray(x_t, dtype=float)
    scalar_in = x_t.ndim == 0
    Y = np.atleast_2d(np.asarray(factor_values, dtype=float))
    if Y.shape[-1] != approx.n:
        raise ValueError(f"expected {approx.n} factor values, got shape {Y.shape}")

    if j == 0:
        integral = np.zeros(Y.shape[0], dtype=complex)
    else:
        # int R(w, psi(tau - xi)) v_t(xi) dxi splits into a scalar piece from
        # the input curve and one weight per factor, so the path batch never
        # meets the quadrature grid
        xi = psi.times[: j + 1]
        rw = riccati_rhs(params, w, psi.values[j::-1])
        rw = rw * psi.dt
        rw[0] *= 0.5
        rw[-1] *= 0.5
        base = v0_curve(params, approx, t + xi) @ rw
        mix = (approx.weights[:, None] * np.exp(-np.multiply.outer(approx.nodes, xi))) @ rw
        integral = base + Y @ mix

    out = np.exp(w * (np.atleast_1d(x_t) + params.r * tau) + integral)
    return complex(out[0]) if scalar_in else out
