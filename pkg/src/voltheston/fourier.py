"""European option prices by Fourier inversion of the affine transform.

The call is computed on the strip Re(w) = 1/2, which lies inside the band
[0, 1] on which the transform is known to exist, so no damping parameter has
to be chosen:

    C = S0 - (sqrt(F K) e^{-rT} / pi)
             * int_0^inf Re[ e^{i u k} phi(u) ] / (u^2 + 1/4) du,

with F = S0 e^{rT} the forward, k = log(F / K), and phi(u) the transform of
the forward-normalised log price at w = 1/2 + i u.  The put follows by
parity, which therefore holds to machine precision by construction.  The
integral is truncated at u_max and evaluated by composite Gauss-Legendre
panels; the tail is bounded by fitting the exponential decay rate of |phi|
near u_max.

The Riccati march is first order in its step with a clean leading term, so
the exponent is Richardson-extrapolated from one march at dt and one at
2 dt, phi = phi_fine^2 / phi_coarse, which buys about four digits at 1.5x
the cost of the fine march alone.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .kernels import KernelChoice
from .params import HestonParams
from .riccati import transform_batch

__all__ = ["EuropeanSpec", "EuropeanDiagnostics", "european_price"]

#: Gauss-Legendre order used within each quadrature panel.
_PANEL_ORDER = 20


@dataclass(frozen=True)
class EuropeanSpec:
    """Contract of one European option: strike, maturity, and side."""

    strike: float
    maturity: float
    option_kind: str = "put"

    def __post_init__(self) -> None:
        if not (math.isfinite(self.strike) and self.strike > 0.0):
            raise ValueError(f"strike must be positive, got {self.strike}")
        if not (math.isfinite(self.maturity) and self.maturity > 0.0):
            raise ValueError(f"maturity must be positive, got {self.maturity}")
        if self.option_kind not in ("put", "call"):
            raise ValueError(f"option_kind must be 'put' or 'call', got {self.option_kind!r}")


class EuropeanDiagnostics(NamedTuple):
    """Both sides of the parity pair plus quadrature health indicators."""

    call: float
    put: float
    tail_estimate: float
    truncated: bool
    u_max: float
    n_nodes: int


def _panel_rule(u_max: float, n_points: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights on [0, u_max]."""
    n_panels = max(1, -(-int(n_points) // _PANEL_ORDER))
    x, w = np.polynomial.legendre.leggauss(_PANEL_ORDER)
    edges = np.linspace(0.0, u_max, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * np.broadcast_to(w, (n_panels, w.size))).ravel()
    return nodes, weights


def european_price(
    params: HestonParams,
    kernel: KernelChoice,
    spec: EuropeanSpec,
    quad: tuple[float, int] = (200.0, 2000),
    dt: Optional[float] = None,
) -> tuple[float, EuropeanDiagnostics]:
    """Price a European put or call under the given kernel.

    quad = (u_max, n_points) controls the inversion integral; dt is the fine
    Riccati march step (default maturity/2000), with the extrapolation
    partner automatically at twice that.  Returns (price, diagnostics);
    diagnostics always carries both the call and the put.  A RuntimeWarning
    is raised when the quadrature tail estimate exceeds 1e-6 of the price.
    """
    u_max, n_points = quad
    if not (u_max > 0.0 and n_points > 0):
        raise ValueError(f"quadrature parameters must be positive, got {quad}")
    T = spec.maturity
    strike = spec.strike
    disc = math.exp(-params.r * T)
    s0 = params.s0

    if params.v0 == 0.0 and params.nu_bar == 0.0:
        # variance is identically zero: the spot is deterministic
        call = max(s0 - strike * disc, 0.0)
        put = max(strike * disc - s0, 0.0)
        diag = EuropeanDiagnostics(call, put, 0.0, False, float(u_max), 0)
        return (put if spec.option_kind == "put" else call), diag

    if dt is None:
        dt = T / 2000.0
    n_fine = 2 * max(1, round(T / (2.0 * dt)))
    u, gw = _panel_rule(float(u_max), int(n_points))
    # two probe nodes past the grid estimate the decay rate of |phi|
    ws = 0.5 + 1j * np.concatenate([u, [0.95 * u_max, u_max]])
    log_fwd = params.x0 + params.r * T
    fine = transform_batch(params, kernel, ws, T, T / n_fine) * np.exp(-ws * log_fwd)
    coarse = transform_batch(params, kernel, ws, T, 2.0 * T / n_fine) * np.exp(-ws * log_fwd)
    phi = np.where(np.abs(coarse) > 1e-280, fine * fine / np.where(coarse == 0, 1.0, coarse), fine)

    k_log = log_fwd - math.log(strike)
    integrand = np.real(np.exp(1j * u * k_log) * phi[:-2]) / (u * u + 0.25)
    prefactor = math.sqrt(s0 * strike * disc) / math.pi
    call = s0 - prefactor * float(gw @ integrand)
    put = call - s0 + strike * disc

    # |phi| ~ e^{-rate u} near the cutoff; bound the tail by the larger of
    # the fitted-decay and the plain 1/u^2 envelope integrals
    a_in, a_end = abs(phi[-2]), abs(phi[-1])
    tail = prefactor * a_end / u_max
    if 0.0 < a_end < a_in:
        rate = math.log(a_in / a_end) / (0.05 * u_max)
        tail = min(tail, prefactor * a_end / (u_max * u_max * rate))
    price = put if spec.option_kind == "put" else call
    truncated = tail > 1e-6 * max(abs(price), 1e-12)
    if truncated:
        warnings.warn(
            f"quadrature tail estimate {tail:.3g} exceeds 1e-6 of the price; "
            f"increase u_max ({u_max:g})",
            RuntimeWarning,
            stacklevel=2,
        )
    diag = EuropeanDiagnostics(float(call), float(put), float(tail), truncated, float(u_max), u.size)
    return float(price), diag
