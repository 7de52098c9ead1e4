"""Regression and density estimation with kernels that solve Fokker-Planck equations.

Every fitted function is a finite sum of time-dependent kernels
``K_t(x, x')``, so it satisfies the kernel's PDE exactly.
"""
__version__ = "0.1.0"

from ._backend import NAME as BACKEND
from .density import DensityEstimate, kde_snapshot, kme_combined, kme_risk
from .errors import ConfigError, KernelDomainError, NotPSDError, NumericalError
from .kernels import Family, KernelModel, SpectralBasis, pde_residual, truncation_order
from .linalg import pinv, stacked_min_norm_lstsq, sym_sqrt_psd
from .regression import (
    FitResult,
    GramSystem,
    assemble,
    empirical_risk,
    fit,
    fit_with_initial,
    representer_optimality_check,
)
from .snapshots import Snapshot, SnapshotSet

__all__ = [
    "BACKEND",
    "ConfigError",
    "DensityEstimate",
    "Family",
    "FitResult",
    "GramSystem",
    "KernelDomainError",
    "KernelModel",
    "NotPSDError",
    "NumericalError",
    "Snapshot",
    "SnapshotSet",
    "SpectralBasis",
    "assemble",
    "empirical_risk",
    "fit",
    "fit_with_initial",
    "kde_snapshot",
    "kme_combined",
    "kme_risk",
    "pde_residual",
    "pinv",
    "representer_optimality_check",
    "stacked_min_norm_lstsq",
    "sym_sqrt_psd",
    "truncation_order",
]
