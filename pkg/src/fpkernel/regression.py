"""Spatio-temporal kernel regression with exact PDE solutions.

Candidate functions are ``f(x, t) = sum_{i,k} a_{i,k} K_t(x, x_i^(k))`` with
time-independent coefficients, so every fit solves the kernel's PDE. The
coefficients minimise the snapshot-averaged squared loss

    R(f) = (1/T) sum_k (1/N_k) sum_i (f(x_i^(k), t_k) - y_i^(k))^2

and are taken as the minimum-norm minimiser (pseudo-inverse solution).
"""
from dataclasses import dataclass

import numpy as np

from .errors import KernelDomainError
from .linalg import pinv
from .snapshots import Snapshot, SnapshotSet

LOSSES = ("squared",)


@dataclass(frozen=True)
class GramSystem:
    """Assembled representer system.

    ``matrix[r, c] = K_{t_r}(x_r, x_c)`` where row and column ``r`` both index
    the flat, snapshot-grouped samples. ``row_weights`` are ``1/sqrt(N_k)``
    so that an unweighted least-squares solve of ``W K a = W y`` minimises the
    snapshot-averaged risk even when snapshot sizes differ.
    """

    model: object
    matrix: np.ndarray
    target: np.ndarray
    row_positions: np.ndarray
    row_times: np.ndarray
    snapshot_index: np.ndarray
    sample_index: np.ndarray
    row_weights: np.ndarray

    @property
    def centers(self):
        return self.row_positions

    def index_of(self, i, k):
        """Flat index of sample ``i`` in snapshot ``k``."""
        hit = np.flatnonzero((self.snapshot_index == k) & (self.sample_index == i))
        if hit.size == 0:
            raise IndexError(f"no sample ({i}, {k})")
        return int(hit[0])


@dataclass(frozen=True)
class FitResult:
    """Coefficients of a fitted time-dependent kernel expansion."""

    model: object
    coefficients: np.ndarray
    centers: np.ndarray
    center_times: np.ndarray
    center_snapshot: np.ndarray
    center_index: np.ndarray
    residual_norm: float
    rank: int = -1

    def predict(self, x, t, n_terms=None):
        """Evaluate ``f(x, t)``; ``x`` may be an array, ``t`` broadcasts against it."""
        scalar = np.ndim(x) == 0 and np.ndim(t) == 0
        x = np.atleast_1d(np.asarray(x, dtype=float))
        t = np.broadcast_to(np.asarray(t, dtype=float), x.shape)
        shape = x.shape
        values = self.model.gram(x.ravel(), t.ravel(), self.centers, n_terms=n_terms) @ self.coefficients
        return float(values[0]) if scalar else values.reshape(shape)

    __call__ = predict


def _row_weights(data):
    return np.repeat(1.0 / np.sqrt(data.sizes), data.sizes)


def assemble(model, data):
    """Build the ``N_total x N_total`` representer system for ``data``."""
    if len(data) == 0:
        raise ValueError("empty snapshot set")
    for k, snap in enumerate(data):
        if len(snap) == 0:
            raise ValueError(f"snapshot {k} (t={snap.t}) is empty")
    x = data.positions
    t = data.sample_times
    try:
        matrix = model.gram(x, t, x)
    except KernelDomainError as exc:
        raise KernelDomainError(f"while assembling the Gram matrix: {exc}") from exc
    return GramSystem(
        model=model,
        matrix=matrix,
        target=data.targets,
        row_positions=x,
        row_times=t,
        snapshot_index=data.snapshot_index,
        sample_index=data.sample_index,
        row_weights=_row_weights(data),
    )


def _solve(matrix, target, weights, rtol):
    a_pinv, report = pinv(weights[:, None] * matrix, rtol)
    return a_pinv @ (weights * target), report.rank


def fit(system, rtol=None):
    """Minimum-norm risk minimiser ``a* = (W K)^+ W y``."""
    coef, rank = _solve(system.matrix, system.target, system.row_weights, rtol)
    residual = system.matrix @ coef - system.target
    return FitResult(
        model=system.model,
        coefficients=coef,
        centers=system.row_positions.copy(),
        center_times=system.row_times.copy(),
        center_snapshot=system.snapshot_index.copy(),
        center_index=system.sample_index.copy(),
        residual_norm=float(np.linalg.norm(residual)),
        rank=rank,
    )


def predict(fit_result, x, t):
    return fit_result.predict(x, t)


def _risk(residual, data):
    sq = residual**2
    per_snapshot = [sq[data.block(k)].mean() for k in range(len(data))]
    return float(np.mean(per_snapshot))


def empirical_risk(fit_result, data, loss="squared"):
    """Snapshot-averaged empirical risk of a fitted function on ``data``."""
    if loss not in LOSSES:
        raise ValueError(f"unsupported loss {loss!r}; available: {LOSSES}")
    pred = fit_result.predict(data.positions, data.sample_times)
    return _risk(pred - data.targets, data)


def fit_with_initial(model, data, initial, t_epsilon=1e-6, weight=1.0, rtol=None):
    """Fit with a soft initial condition.

    The initial snapshot (usually at ``t0 = 0``) enters as an extra block of
    measurement rows and centers evaluated at ``max(t0, t_epsilon)``, because
    ``K_0`` is a Dirac delta. ``weight`` multiplies the initial block's loss
    contribution; 1 weighs it like any data snapshot.
    """
    if t_epsilon < model.t_floor:
        raise KernelDomainError(f"t_epsilon={t_epsilon!r} is below t_floor={model.t_floor!r}")
    if weight <= 0:
        raise ValueError("weight must be positive")
    if initial is None or len(initial) == 0:
        return fit(assemble(model, data), rtol)
    t0 = max(initial.t, t_epsilon)
    if len(data) and t0 >= data.times[0]:
        raise ValueError(f"initial time {t0} must precede the first snapshot at {data.times[0]}")
    combined = SnapshotSet([Snapshot(t0, initial.x, initial.y), *data])
    system = assemble(model, combined)
    weights = system.row_weights.copy()
    weights[combined.block(0)] *= np.sqrt(weight)
    system = GramSystem(**{**system.__dict__, "row_weights": weights})
    return fit(system, rtol)


@dataclass(frozen=True)
class OptimalityReport:
    representer_risk: float
    enlarged_risk: float
    n_extra: int
    tolerance: float

    @property
    def holds(self):
        """Whether the enlarged expansion failed to beat the representer fit."""
        return self.enlarged_risk >= self.representer_risk - self.tolerance


def representer_optimality_check(model, data, extra_centers, rtol=None, tol=1e-9):
    """Compare the representer fit with a fit that also uses off-sample centers.

    ``extra_centers`` are positions (or ``(position, time)`` pairs, whose
    time is ignored: expansion kernels always take the query time).
    """
    extra = np.asarray(extra_centers, dtype=float)
    if extra.ndim == 2:
        extra = extra[:, 0]
    extra = extra.ravel()
    system = assemble(model, data)
    base = fit(system, rtol)
    base_risk = _risk(system.matrix @ base.coefficients - system.target, data)
    if extra.size == 0:
        return OptimalityReport(base_risk, base_risk, 0, tol)
    wide = np.hstack([system.matrix, model.gram(system.row_positions, system.row_times, extra)])
    coef, _ = _solve(wide, system.target, system.row_weights, rtol)
    wide_risk = _risk(wide @ coef - system.target, data)
    return OptimalityReport(base_risk, wide_risk, int(extra.size), tol)
