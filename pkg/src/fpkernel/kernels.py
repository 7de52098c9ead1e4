"""Time-dependent kernels that solve Fokker-Planck equations exactly.

Four families are supported:

``gaussian_heat``
    Free-space heat kernel ``(4 pi D t)^(-1/2) exp(-(x - x')^2 / (4 D t))``.
    The default ``D = 1/2`` gives ``(2 pi t)^(-1/2) exp(-(x - x')^2 / (2 t))``,
    which solves ``u_t = u_xx / 2``. Use ``D = 1`` for ``u_t = u_xx``.
``dirichlet_heat``
    Heat equation ``u_t = u_xx`` on ``[0, 1]`` with ``u = 0`` at both ends;
    ``phi_n = sqrt(2) sin(n pi x)``, ``lambda_n = n^2 pi^2``, ``n >= 1``.
``neumann_heat``
    Heat equation on ``[0, 1]`` with zero flux at both ends;
    ``phi_0 = 1``, ``phi_n = sqrt(2) cos(n pi x)``, ``lambda_n = n^2 pi^2``.
``ornstein_uhlenbeck``
    ``dX = -theta X dt + sigma dW``. With ``s^2 = sigma^2 / (2 theta)`` the
    eigenpairs are ``lambda_n = n theta`` and
    ``phi_n(x) = s^(-1/2) (sqrt(2 pi) n!)^(-1/2) exp(-u^2/2) He_n(u)``,
    ``u = x / s``, orthonormal under the weight ``exp(x^2 / (2 s^2))``.

Spectral kernels are ``K_t(x, x') = sum_n exp(-lambda_n t) phi_n(x) phi_n(x')``
truncated by a relative tail criterion (see :meth:`KernelModel.truncation_order`).
"""
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
import math

import numpy as np

from . import _backend
from .errors import KernelDomainError

_EPS = np.finfo(float).eps

_FAMILY_CODES = {"dirichlet_heat": 1, "neumann_heat": 2, "ornstein_uhlenbeck": 3}


class Family(str, Enum):
    GAUSSIAN_HEAT = "gaussian_heat"
    DIRICHLET_HEAT = "dirichlet_heat"
    NEUMANN_HEAT = "neumann_heat"
    ORNSTEIN_UHLENBECK = "ornstein_uhlenbeck"


@dataclass(frozen=True)
class KernelModel:
    """An immutable time-dependent kernel family.

    Parameters
    ----------
    family : Family or str
    diffusion : float
        Diffusion coefficient ``D`` of ``gaussian_heat`` (ignored otherwise).
    theta, sigma : float
        Mean-reversion speed and volatility of ``ornstein_uhlenbeck``.
    truncation_tol : float
        Relative size below which eigen-modes are dropped.
    max_terms : int
        Hard cap on the highest retained mode index.
    t_floor : float
        Smallest admissible time; kernels degenerate to Dirac deltas at 0.
    backend : str, optional
        Force the ``"python"`` or ``"cython"`` core; ``None`` picks the fastest
        available one.
    """

    family: Family
    diffusion: float = 0.5
    theta: float = 1.0
    sigma: float = math.sqrt(2.0)
    truncation_tol: float = 1e-12
    max_terms: int = 10_000
    t_floor: float = 1e-6
    backend: str = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        for name in ("diffusion", "theta", "sigma", "t_floor"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")
        if not 0 < self.truncation_tol < 1:
            raise ValueError(f"truncation_tol must lie in (0, 1), got {self.truncation_tol!r}")
        if int(self.max_terms) != self.max_terms or self.max_terms < 1:
            raise ValueError(f"max_terms must be a positive integer, got {self.max_terms!r}")
        _backend.get(self.backend)

    # -- structure -----------------------------------------------------

    @property
    def is_spectral(self):
        return self.family is not Family.GAUSSIAN_HEAT

    @property
    def bounded(self):
        return self.family in (Family.DIRICHLET_HEAT, Family.NEUMANN_HEAT)

    @property
    def domain(self):
        return (0.0, 1.0) if self.bounded else (-math.inf, math.inf)

    @property
    def first_mode(self):
        """Index of the leading eigen-mode (``sin(0) = 0`` drops ``n = 0``)."""
        return 1 if self.family is Family.DIRICHLET_HEAT else 0

    @property
    def length_scale(self):
        """Stationary standard deviation ``sqrt(sigma^2 / (2 theta))`` of the OU process."""
        return math.sqrt(self.sigma**2 / (2.0 * self.theta))

    @property
    def _core(self):
        return _backend.get(self.backend)

    def eigenvalues(self, n):
        n = np.asarray(n, dtype=float)
        if self.family is Family.ORNSTEIN_UHLENBECK:
            return n * self.theta
        if self.bounded:
            return n * n * math.pi**2
        raise ValueError("gaussian_heat has a continuous spectrum")

    def mode_weights(self, t, n):
        """Temporal factors ``exp(-lambda_n t)`` as a ``(len(t), len(n))`` array."""
        return np.exp(-np.multiply.outer(np.asarray(t, dtype=float), self.eigenvalues(n)))

    def basis(self, x, n_lo, n_hi):
        """Eigenfunction values ``phi_n(x_i)`` for ``n_lo <= n < n_hi``."""
        x = np.ascontiguousarray(np.atleast_1d(x), dtype=np.float64)
        code = _FAMILY_CODES[self.family.value]
        return self._core.basis_matrix(code, x, int(n_lo), int(n_hi), self.length_scale)

    def drift(self, x):
        x = np.asarray(x, dtype=float)
        if self.family is Family.ORNSTEIN_UHLENBECK:
            return -self.theta * x
        return np.zeros_like(x)

    @property
    def diffusion_coefficient(self):
        """Constant ``D`` in ``L = -d/dx mu + d^2/dx^2 D``."""
        if self.family is Family.GAUSSIAN_HEAT:
            return self.diffusion
        if self.family is Family.ORNSTEIN_UHLENBECK:
            return self.sigma**2 / 2.0
        return 1.0

    def potential(self, x):
        """Weight potential: the basis is orthonormal under ``exp(potential)``."""
        x = np.asarray(x, dtype=float)
        if self.family is Family.ORNSTEIN_UHLENBECK:
            return x * x / (2.0 * self.length_scale**2)
        return np.zeros_like(x)

    # -- validation ----------------------------------------------------

    def check_times(self, t):
        t = np.asarray(t, dtype=float)
        bad = ~(t >= self.t_floor)
        if bad.any():
            idx = np.flatnonzero(bad.ravel())
            raise KernelDomainError(
                f"time {t.ravel()[idx[0]]!r} (index {int(idx[0])}) is below t_floor={self.t_floor!r}"
            )

    def check_positions(self, x, what="position"):
        x = np.asarray(x, dtype=float)
        lo, hi = self.domain
        bad = ~((x >= lo) & (x <= hi))
        if bad.any():
            idx = np.flatnonzero(bad.ravel())
            raise KernelDomainError(
                f"{what} {x.ravel()[idx[0]]!r} (index {int(idx[0])}) outside domain "
                f"[{lo}, {hi}] of {self.family.value}"
            )

    # -- evaluation ----------------------------------------------------

    def truncation_order(self, t):
        """Highest retained mode index at time ``t``.

        Smallest ``N`` past the leading mode with
        ``exp(-lambda_N t) / max(exp(-lambda_lead t), eps) < truncation_tol``,
        capped at ``max_terms``. Closed-form families return 1.
        """
        self.check_times(t)
        return _truncation_order(self, float(t))

    def _row_weights(self, t, n_terms):
        t = np.asarray(t, dtype=float)
        lo = self.first_mode
        if n_terms is None:
            uniq, inverse = np.unique(t, return_inverse=True)
            orders = np.array([_truncation_order(self, float(u)) for u in uniq], dtype=int)[inverse]
        else:
            orders = np.full(t.shape, int(n_terms))
        hi = int(orders.max()) + 1 if orders.size else lo
        n = np.arange(lo, hi)
        w = self.mode_weights(t, n)
        w[n[None, :] > orders[:, None]] = 0.0
        return np.ascontiguousarray(w), lo, hi

    def gram(self, x, t, centers, n_terms=None):
        """Matrix ``M[r, c] = K_{t_r}(x_r, centers_c)``; the kernel time is the row's.

        ``n_terms`` forces the highest mode index for every row (spectral
        families only); by default it follows :meth:`truncation_order`.
        """
        x = np.ascontiguousarray(np.atleast_1d(x), dtype=np.float64).ravel()
        t = np.ascontiguousarray(np.broadcast_to(np.asarray(t, dtype=np.float64), x.shape))
        centers = np.ascontiguousarray(np.atleast_1d(centers), dtype=np.float64).ravel()
        self.check_times(t)
        self.check_positions(x, "row position")
        self.check_positions(centers, "center")
        if not self.is_spectral:
            return self._core.gaussian_gram(x, t, centers, self.diffusion)
        w, lo, hi = self._row_weights(t, n_terms)
        return self._core.modal_gram(self.basis(x, lo, hi), self.basis(centers, lo, hi), w)

    def evaluate(self, t, x, xp, n_terms=None):
        """``K_t(x, x')`` with broadcasting; returns a float for scalar input."""
        t, x, xp = np.broadcast_arrays(
            np.asarray(t, dtype=float), np.asarray(x, dtype=float), np.asarray(xp, dtype=float)
        )
        shape = t.shape
        t, x, xp = (np.ascontiguousarray(a.ravel()) for a in (t, x, xp))
        self.check_times(t)
        self.check_positions(x)
        self.check_positions(xp)
        if not self.is_spectral:
            out = self._core.gaussian_pairs(x, t, xp, self.diffusion)
        else:
            w, lo, hi = self._row_weights(t, n_terms)
            out = self._core.modal_pairs(self.basis(x, lo, hi), self.basis(xp, lo, hi), w)
        out = np.asarray(out).reshape(shape)
        return float(out) if out.ndim == 0 else out

    __call__ = evaluate

    def stationary_density(self):
        """The normalized ``t -> inf`` limit density, or ``None`` if there is none."""
        if self.family is Family.NEUMANN_HEAT:
            return lambda x: np.ones_like(np.asarray(x, dtype=float))
        if self.family is Family.ORNSTEIN_UHLENBECK:
            s = self.length_scale
            return lambda x: np.exp(-0.5 * (np.asarray(x, dtype=float) / s) ** 2) / (
                s * math.sqrt(2.0 * math.pi)
            )
        return None

    def spectral_basis(self):
        if not self.is_spectral:
            raise ValueError("gaussian_heat has no discrete eigenbasis")
        return SpectralBasis(self)


@lru_cache(maxsize=4096)
def _truncation_order(model, t):
    if not model.is_spectral:
        return 1
    lead = model.first_mode
    if model.max_terms <= lead:
        return int(model.max_terms)
    n = np.arange(lead + 1, model.max_terms + 1)
    log_lead = max(-float(model.eigenvalues(lead)) * t, math.log(_EPS))
    below = np.flatnonzero(-model.eigenvalues(n) * t - log_lead < math.log(model.truncation_tol))
    return int(n[below[0]]) if below.size else int(model.max_terms)


@dataclass(frozen=True)
class SpectralBasis:
    """Eigen-decomposition view of a spectral :class:`KernelModel`."""

    model: KernelModel

    @property
    def first_mode(self):
        return self.model.first_mode

    @property
    def domain(self):
        return self.model.domain

    def eigenvalue(self, n):
        return self.model.eigenvalues(n)

    def eigenfunction(self, n, x):
        x = np.asarray(x, dtype=float)
        return self.model.basis(x.ravel(), n, n + 1)[:, 0].reshape(x.shape)

    def weight(self, x):
        return np.exp(self.model.potential(x))

    def quadrature_interval(self, n_std=8.0):
        """Finite interval for integrals: the domain, or +-n_std stationary std for OU."""
        if self.model.bounded:
            return self.model.domain
        s = self.model.length_scale
        return (-n_std * s, n_std * s)


def truncation_order(model, t):
    return model.truncation_order(t)


def gram(model, rows, centers):
    """Gram matrix for ``rows`` given as ``(position, time)`` pairs."""
    rows = np.asarray(rows, dtype=float).reshape(-1, 2)
    return model.gram(rows[:, 0], rows[:, 1], centers)


def hermite(n, u):
    """Probabilists' Hermite polynomial ``He_n(u)`` via the three-term recurrence."""
    if n < 0:
        raise ValueError("n must be >= 0")
    u = np.asarray(u, dtype=float)
    prev, cur = np.ones_like(u), u.copy()
    if n == 0:
        return prev if prev.ndim else float(prev)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, n):
            prev, cur = cur, u * cur - k * prev
    return cur if cur.ndim else float(cur)


def stationary_density(model):
    return model.stationary_density()


def function_pde_residual(model, f, t, x, h_t=1e-4, h_x=1e-4):
    """``|df/dt - L f|`` by central differences for a function ``f(x, t)``.

    ``f`` must accept arrays of positions and times of equal length. ``x``
    may be an array; ``t`` is broadcast against it.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), x.shape).astype(float)
    if np.any(t - h_t < model.t_floor):
        raise KernelDomainError(f"stencil time t - h_t falls below t_floor={model.t_floor}")
    lo, hi = model.domain
    if np.any(x - 2 * h_x < lo) or np.any(x + 2 * h_x > hi):
        raise KernelDomainError("finite-difference stencil leaves the domain")
    d_t = (f(x, t + h_t) - f(x, t - h_t)) / (2.0 * h_t)
    left, mid, right = f(x - h_x, t), f(x, t), f(x + h_x, t)
    mu_l, mu_r = model.drift(x - h_x), model.drift(x + h_x)
    big_d = model.diffusion_coefficient
    l_f = -(mu_r * right - mu_l * left) / (2.0 * h_x) + big_d * (right - 2.0 * mid + left) / h_x**2
    return np.abs(d_t - l_f)


def pde_residual(model, t, x, xp, h_t=1e-4, h_x=1e-4):
    """Finite-difference residual of ``d/dt K - L_x K`` at ``(t, x, x')``.

    The mode count is frozen at the stencil's earliest time so every stencil
    point evaluates the same finite (hence exact) eigen-sum.
    """
    t_min = float(np.min(t)) - h_t
    n_terms = model.truncation_order(max(t_min, model.t_floor)) if model.is_spectral else None
    xp = float(xp)

    def f(xs, ts):
        return model.evaluate(ts, xs, xp, n_terms=n_terms)

    out = function_pde_residual(model, f, t, x, h_t, h_x)
    return float(out[0]) if np.ndim(x) == 0 else out
