"""Ground truth for experiments: exact spectral evolution, sampling, SDE paths."""
from dataclasses import dataclass
import math

import numpy as np
from scipy.integrate import simpson

from .kernels import Family
from .snapshots import Snapshot

SAMPLING_GRID_NODES = 4097


def make_rng(seed, *path_index):
    """PCG64 generator keyed by ``seed`` and an optional path index."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=path_index)))


# -- spectral functions ------------------------------------------------------


@dataclass(frozen=True)
class SpectralFunction:
    """``u(x, t) = sum_n g_n exp(-lambda_n t) phi_n(x)`` in a model's eigenbasis."""

    model: object
    coefficients: np.ndarray

    @property
    def modes(self):
        lo = self.model.first_mode
        return np.arange(lo, lo + len(self.coefficients))

    def __call__(self, x, t):
        return evolve(self, t, x)


def project(basis, g, n_terms, quad_nodes=4001):
    """Coefficients ``g_n = <g, phi_n>`` under the basis weight, by Simpson's rule.

    ``basis`` is a :class:`~fpkernel.kernels.SpectralBasis` (or a spectral
    ``KernelModel``). OU integrals are truncated to +-8 stationary std.
    """
    if quad_nodes < 3:
        raise ValueError("need at least 3 quadrature nodes")
    if not hasattr(basis, "model"):
        basis = basis.spectral_basis()
    model = basis.model
    lo, hi = basis.quadrature_interval()
    x = np.linspace(lo, hi, quad_nodes)
    n_lo = model.first_mode
    phi = model.basis(x, n_lo, n_lo + n_terms)
    integrand = (np.asarray(g(x), dtype=float) * basis.weight(x))[:, None] * phi
    coef = simpson(integrand, x=x, axis=0)
    return SpectralFunction(model, coef)


def evolve(f, t, x):
    """Evaluate the evolved function at ``(x, t)``; ``t = 0`` is allowed.

    ``x`` and ``t`` broadcast against each other.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be nonnegative")
    scalar = np.ndim(x) == 0 and t.ndim == 0
    x, t = np.broadcast_arrays(np.asarray(x, dtype=float), t)
    n = f.modes
    phi = f.model.basis(x.ravel(), n[0], n[-1] + 1)
    decay = np.exp(-np.outer(t.ravel(), f.model.eigenvalues(n)))
    values = (phi * decay) @ f.coefficients
    return float(values[0]) if scalar else values.reshape(x.shape)


def sample_evolved(f, t, n, seed, grid_nodes=SAMPLING_GRID_NODES, stream=()):
    """Draw ``n`` points from the evolved density by inverse-CDF on a grid.

    ``stream`` is an optional tuple of integers selecting an independent
    generator under the same seed (one per snapshot, say).
    """
    if n == 0:
        return np.zeros(0)
    model = f.model
    if not model.bounded:
        raise ValueError("sampling requires a bounded domain")
    lo, hi = model.domain
    grid = np.linspace(lo, hi, grid_nodes)
    dens = evolve(f, t, grid)
    if dens.min() < -1e-9:
        raise ValueError(f"evolved density is negative ({dens.min():.3e}) on the sampling grid")
    dens = np.clip(dens, 0.0, None)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
    if cdf[-1] <= 0:
        raise ValueError("evolved density has zero mass")
    cdf /= cdf[-1]
    u = make_rng(seed, *stream).uniform(size=n)
    return np.interp(u, cdf, grid)


# -- profiles used by the bundled experiments --------------------------------


def tent(x, height=0.5, slope=1.0):
    """``height - slope * |x - 1/2|``."""
    return height - slope * np.abs(np.asarray(x, dtype=float) - 0.5)


def sine_error(x, amplitude=0.2):
    """Deterministic measurement error ``amplitude * sin(2 pi x)``."""
    return amplitude * np.sin(2.0 * np.pi * np.asarray(x, dtype=float))


def beta_density(x):
    """Beta(1, 4) density ``4 (1 - x)^3`` on ``[0, 1]``."""
    return 4.0 * (1.0 - np.asarray(x, dtype=float)) ** 3


def gaussian_bump(x, t=0.0, diffusion=0.5):
    """N(1/2, 1) density evolved by free heat flow: variance ``1 + 2 D t``."""
    var = 1.0 + 2.0 * diffusion * t
    x = np.asarray(x, dtype=float)
    return np.exp(-((x - 0.5) ** 2) / (2.0 * var)) / np.sqrt(2.0 * np.pi * var)


# -- stochastic simulation ---------------------------------------------------


@dataclass(frozen=True)
class SdeSpec:
    """``dX = mu(X) dt + sigma(X) dW`` with an optional boundary policy."""

    drift: object
    diffusion: object
    boundary: str = "none"
    domain: tuple = (-math.inf, math.inf)

    def __post_init__(self):
        if self.boundary not in ("none", "reflect", "absorb"):
            raise ValueError(f"unknown boundary policy {self.boundary!r}")

    @classmethod
    def from_model(cls, model):
        """The Ito process whose density obeys ``model``'s Fokker-Planck equation.

        Neumann boundaries map to reflection and Dirichlet boundaries to absorption.
        """
        sig = math.sqrt(2.0 * model.diffusion_coefficient)
        boundary = {Family.NEUMANN_HEAT: "reflect", Family.DIRICHLET_HEAT: "absorb"}.get(
            model.family, "none"
        )
        return cls(model.drift, lambda x: np.full_like(np.asarray(x, dtype=float), sig), boundary, model.domain)


def _reflect(x, lo, hi):
    for _ in range(64):
        below, above = x < lo, x > hi
        if not (below.any() or above.any()):
            break
        x = np.where(below, 2.0 * lo - x, x)
        x = np.where(above, 2.0 * hi - x, x)
    return x


def simulate_paths(spec, x0, dt, n_steps, n_paths, seed, keep_paths=True):
    """Euler-Maruyama for many independent paths.

    Path ``i`` draws its increments from ``make_rng(seed, i)``. Absorbed paths
    hold the boundary value at the absorption step and NaN afterwards (final
    positions keep the boundary value).

    Returns
    -------
    ndarray
        ``(n_paths, n_steps + 1)`` if ``keep_paths`` else final positions.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    z = np.empty((n_paths, n_steps))
    for i in range(n_paths):
        z[i] = make_rng(seed, i).standard_normal(n_steps)
    lo, hi = spec.domain
    sqdt = math.sqrt(dt)
    x = np.full(n_paths, float(x0))
    alive = np.ones(n_paths, dtype=bool)
    paths = np.empty((n_paths, n_steps + 1)) if keep_paths else None
    if keep_paths:
        paths[:, 0] = x
    for m in range(n_steps):
        step = np.asarray(spec.drift(x)) * dt + np.asarray(spec.diffusion(x)) * sqdt * z[:, m]
        x = np.where(alive, x + step, x)
        if spec.boundary == "reflect":
            x = _reflect(x, lo, hi)
        elif spec.boundary == "absorb":
            hit = alive & ((x <= lo) | (x >= hi))
            x = np.where(hit, np.clip(x, lo, hi), x)
            if keep_paths:
                paths[:, m + 1] = np.where(alive, x, np.nan)
            alive &= ~hit
            continue
        if keep_paths:
            paths[:, m + 1] = x
    return paths if keep_paths else x


def euler_maruyama(spec, x0, dt, n_steps, seed):
    """One Euler-Maruyama path; an absorbed path is cut at the absorption step."""
    path = simulate_paths(spec, x0, dt, n_steps, 1, seed)[0]
    stop = np.flatnonzero(np.isnan(path))
    return path[: stop[0]] if stop.size else path


def synth_measurements(truth, sensors, t, error=None, seed=None, stream=()):
    """Noisy readings ``truth(x, t) + error`` at the sensor positions.

    ``error`` is ``None``, a callable ``e(x)`` added deterministically, or a
    float standard deviation for i.i.d. Gaussian noise drawn from ``seed``
    (and ``stream``, as in :func:`sample_evolved`).
    """
    x = np.asarray(sensors, dtype=float).ravel()
    y = np.asarray(truth(x, t), dtype=float) * np.ones_like(x)
    if callable(error):
        y = y + np.asarray(error(x), dtype=float)
    elif error is not None and error != 0:
        y = y + float(error) * make_rng(seed, *stream).standard_normal(x.size)
    return Snapshot(t, x, y)
