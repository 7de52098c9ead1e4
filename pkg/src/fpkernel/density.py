"""Kernel density estimation with time-dependent kernels.

An estimate is ``rho(x, t) = sum_j beta_j K_t(x, c_j)``: a weighted sum of
point masses at the centers, evolved by the kernel's dynamics. The combined
estimator chooses ``beta`` to minimise the snapshot-averaged kernel-mean
risk over all samples at once.
"""
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import simpson

from .linalg import default_rtol, stacked_min_norm_lstsq, sym_sqrt_psd


@dataclass(frozen=True)
class DensityEstimate:
    model: object
    coefficients: np.ndarray
    centers: np.ndarray
    renormalized: bool = False

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=float).ravel()
        centers = np.asarray(self.centers, dtype=float).ravel()
        if coef.shape != centers.shape:
            raise ValueError(f"{coef.size} coefficients for {centers.size} centers")
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "centers", centers)

    def evaluate(self, x, t):
        scalar = np.ndim(x) == 0
        x = np.atleast_1d(np.asarray(x, dtype=float))
        values = self.model.gram(x.ravel(), t, self.centers) @ self.coefficients
        return float(values[0]) if scalar else values.reshape(x.shape)

    __call__ = evaluate

    def __add__(self, other):
        if not np.array_equal(self.centers, other.centers):
            raise ValueError("estimates must share centers to be added")
        return replace(self, coefficients=self.coefficients + other.coefficients)


def evaluate_density(estimate, x, t):
    return estimate.evaluate(x, t)


def kde_snapshot(model, sample, t=None):
    """Classical estimator with equal weights ``1/N`` on each sample point.

    ``t`` (the sampling time) is validated but does not enter the weights;
    the estimate can be evaluated at any admissible time.
    """
    sample = np.asarray(sample, dtype=float).ravel()
    if sample.size == 0:
        raise ValueError("empty sample")
    if t is not None:
        model.check_times(t)
    model.check_positions(sample, "sample")
    return DensityEstimate(model, np.full(sample.size, 1.0 / sample.size), sample)


def snapshot_weights(data, k):
    """Vector with ``1/N_k`` on snapshot ``k``'s samples and 0 elsewhere."""
    v = np.zeros(data.total)
    v[data.block(k)] = 1.0 / data.sizes[k]
    return v


def embed_snapshot_estimator(model, data, k):
    """The single-snapshot estimator of snapshot ``k`` over all centers of ``data``."""
    return DensityEstimate(model, snapshot_weights(data, k), data.positions)


def _time_grams(model, data):
    x = data.positions
    return [model.gram(x, tk, x) for tk in data.times]


def kme_combined(model, data, rtol=None, clamp_tol=1e-10):
    """Simultaneous estimator from all snapshots.

    Solves ``min_beta sum_k ||L_k v_k - L_k beta||^2`` with ``L_k`` the
    symmetric square root of the Gram matrix at ``t_k`` over the union of
    all samples, and ``v_k`` the equal-weight vector of snapshot ``k``.

    The minimizer is unique for strictly positive definite kernels, but
    Gram matrices at small times are numerically singular. The solve is
    therefore posed for ``beta - v`` with ``v`` the mean of the ``v_k``, so
    unresolved directions fall back to pooled equal weights rather than to
    zero; a single snapshot then yields ``1/N`` exactly. The singular
    values of ``L_k`` are square roots of Gram eigenvalues, so the default
    cutoff for the stacked solve is ``sqrt(n * eps)`` rather than ``n * eps``.
    """
    if len(data) == 0:
        raise ValueError("empty snapshot set")
    for k, snap in enumerate(data):
        if len(snap) == 0:
            raise ValueError(f"snapshot {k} (t={snap.t}) is empty")
    targets = [snapshot_weights(data, k) for k in range(len(data))]
    pooled = np.mean(targets, axis=0)
    blocks = []
    for v_k, gram_k in zip(targets, _time_grams(model, data)):
        root = sym_sqrt_psd(gram_k, clamp_tol)
        blocks.append((root, root @ (v_k - pooled)))
    if rtol is None:
        rtol = np.sqrt(default_rtol((data.total, data.total)))
    beta = pooled + stacked_min_norm_lstsq(blocks, rtol)
    return DensityEstimate(model, beta, data.positions)


def kme_risk(estimate, data):
    """Snapshot-averaged kernel-mean risk, constant term included.

    For snapshot ``k`` the risk is
    ``beta^T K_k beta - (2/N_k) sum_i (K_k beta)_i + mean_i K_k(x_i, x_i)``
    with ``K_k`` the Gram matrix at ``t_k`` between the snapshot's samples
    and the estimate's centers.
    """
    beta = estimate.coefficients
    c = estimate.centers
    model = estimate.model
    total = 0.0
    for snap in data:
        quad = beta @ (model.gram(c, snap.t, c) @ beta)
        cross = model.gram(snap.x, snap.t, c) @ beta
        diag = model.evaluate(snap.t, snap.x, snap.x)
        total += quad - 2.0 * cross.mean() + np.mean(diag)
    return float(total / len(data))


def mass_and_negativity_report(estimate, t, quadrature_nodes=2001):
    """Simpson-quadrature mass and minimum nodal value on a bounded domain."""
    model = estimate.model
    if not model.bounded:
        raise NotImplementedError("mass diagnostics need a bounded domain")
    if quadrature_nodes < 3:
        raise ValueError("need at least 3 quadrature nodes")
    lo, hi = model.domain
    grid = np.linspace(lo, hi, quadrature_nodes)
    values = estimate.evaluate(grid, t)
    return float(simpson(values, x=grid)), float(values.min())


def renormalize(estimate, t, quadrature_nodes=2001):
    """Clip negative coefficients and rescale to unit mass at time ``t``.

    Not part of the risk-minimising estimator; provided for plotting.
    """
    clipped = replace(estimate, coefficients=np.clip(estimate.coefficients, 0.0, None))
    mass, _ = mass_and_negativity_report(clipped, t, quadrature_nodes)
    if mass <= 0:
        raise ValueError("estimate has no positive mass to renormalize")
    return replace(clipped, coefficients=clipped.coefficients / mass, renormalized=True)
