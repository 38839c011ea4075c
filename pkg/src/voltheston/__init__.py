"""Bermudan and European option pricing under rough-Heston dynamics.

The variance process follows a stochastic Volterra equation whose fractional
kernel is approximated by a sum of exponentials, turning the model into a
finite Markov system of mean-reverting factors.  The package provides

- kernel fitting: :mod:`voltheston.kernels` (geometric partitions, L2
  optimisation of the cell ratio);
- transform pricing: :mod:`voltheston.riccati` and :mod:`voltheston.fourier`
  (Riccati solvers for the exponent, Fourier inversion for European puts);
- simulation: :mod:`voltheston.simulate` (counter-based RNG, reproducible
  across thread counts and batch sizes);
- early exercise: :mod:`voltheston.lsm` (least-squares Monte Carlo on a
  Laguerre product basis, critical-price search);
- a batch CLI: :mod:`voltheston.cli`.
"""

from .errors import BlowUpError, ConfigError, CriticalPriceNotFound, NumericsError
from .fourier import EuropeanSpec, european_price
from .kernels import (
    FractionalKernel,
    GeometricPartition,
    MultiExpKernel,
    RatioFit,
    build_multiexp,
    l2_error_squared,
    optimize_ratio,
    v0_curve,
    v0_integral,
)
from .lsm import (
    BasisSpec,
    ExerciseGrid,
    PricingResult,
    basis_eval,
    bermudan_in_N,
    bermudan_price,
    bermudan_price_out_of_sample,
    critical_price,
    default_basis,
    put_payoff,
)
from .params import HestonParams
from .riccati import (
    PsiSolution,
    TransformQuery,
    adjusted_forward_curve,
    conditional_transform,
    laplace_transform_t0,
    solve_psi_fractional,
    solve_psi_lifted,
)
from .simulate import PathBatch, SimGrid, empirical_cf, european_mc_price, simulate

__version__ = "0.1.0"

__all__ = [
    "BasisSpec",
    "BlowUpError",
    "ConfigError",
    "CriticalPriceNotFound",
    "EuropeanSpec",
    "ExerciseGrid",
    "FractionalKernel",
    "GeometricPartition",
    "HestonParams",
    "MultiExpKernel",
    "NumericsError",
    "PathBatch",
    "PricingResult",
    "PsiSolution",
    "RatioFit",
    "SimGrid",
    "TransformQuery",
    "adjusted_forward_curve",
    "basis_eval",
    "bermudan_in_N",
    "bermudan_price",
    "bermudan_price_out_of_sample",
    "conditional_transform",
    "critical_price",
    "default_basis",
    "empirical_cf",
    "european_mc_price",
    "european_price",
    "l2_error_squared",
    "laplace_transform_t0",
    "optimize_ratio",
    "put_payoff",
    "simulate",
    "solve_psi_fractional",
    "solve_psi_lifted",
    "v0_curve",
    "v0_integral",
    "__version__",
]
