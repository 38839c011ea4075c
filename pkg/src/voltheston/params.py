"""Model parameters for the Volterra square-root volatility model.

The asset follows a log-price diffusion whose instantaneous variance is a
square-root process with a memory kernel:

    X_t = X_0 + int_0^t (r - V_s/2) ds + int_0^t sqrt(V_s) dB_s,
    V_t = v_0(t) - lam * int_0^t K(t-s) V_s ds
               + eta * int_0^t K(t-s) sqrt(V_s) dW_s,

with d<B, W>_t = rho dt and forward variance input
v_0(t) = V_0 + lam * nu_bar * int_0^t K(s) ds.  The kernel K is either the
singular power kernel t**(alpha-1)/Gamma(alpha) or a finite sum of
exponentials approximating it; the choice lives in :mod:`voltheston.kernels`,
not here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class HestonParams:
    """Scalar coefficients of the variance and log-price dynamics.

    Parameters
    ----------
    v0 : float
        Initial instantaneous variance V_0 >= 0.
    nu_bar : float
        Long-run variance level >= 0 entering the forward curve.
    lam : float
        Mean-reversion speed >= 0 (written lambda in most references;
        renamed because ``lambda`` is reserved in Python).
    eta : float
        Volatility of variance >= 0.
    rho : float
        Spot/variance correlation in [-1, 1].
    r : float
        Continuously compounded risk-free rate.
    x0 : float
        Initial log spot, i.e. log(S_0).
    """

    v0: float
    nu_bar: float
    lam: float
    eta: float
    rho: float
    r: float
    x0: float

    def __post_init__(self) -> None:
        if self.v0 < 0.0:
            raise ValueError(f"v0 must be >= 0, got {self.v0}")
        if self.nu_bar < 0.0:
            raise ValueError(f"nu_bar must be >= 0, got {self.nu_bar}")
        if self.lam < 0.0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.eta < 0.0:
            raise ValueError(f"eta must be >= 0, got {self.eta}")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [-1, 1], got {self.rho}")
        for name in ("v0", "nu_bar", "lam", "eta", "rho", "r", "x0"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def s0(self) -> float:
        """Initial spot level exp(x0)."""
        return math.exp(self.x0)

    def with_spot(self, s0: float) -> "HestonParams":
        """Copy of the parameters with a new initial spot level."""
        if s0 <= 0.0:
            raise ValueError(f"spot must be positive, got {s0}")
        return replace(self, x0=math.log(s0))

    @classmethod
    def from_spot(
        cls,
        v0: float,
        nu_bar: float,
        lam: float,
        eta: float,
        rho: float,
        r: float,
        s0: float,
    ) -> "HestonParams":
        """Build from a spot level instead of a log spot."""
        if s0 <= 0.0:
            raise ValueError(f"spot must be positive, got {s0}")
        return cls(v0, nu_bar, lam, eta, rho, r, math.log(s0))
