"""Static space-time Gaussian kernel baselines.

Time is treated as one more coordinate: observations ``(x_i, t_k, y_i)`` are
weighted by ``exp(-((x - x_i)^2 + (t - t_k)^2) / (2 s^2))`` with a single
isotropic bandwidth ``s``.
"""
import numpy as np

from .dynamics import make_rng
from .linalg import pinv
from .snapshots import SnapshotSet

METHODS = ("nadaraya_watson", "static_pinv")


def _flatten(samples):
    if not samples.labelled or samples.total == 0:
        raise ValueError("baselines need a nonempty labelled snapshot set")
    return samples.positions, samples.sample_times, samples.targets


def _query(x, t):
    x = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    t = np.broadcast_to(np.asarray(t, dtype=float), x.shape).ravel()
    return x, t


def _sq_dist(qx, qt, px, pt):
    return (qx[:, None] - px[None, :]) ** 2 + (qt[:, None] - pt[None, :]) ** 2


def idw_predict(samples, s, x, t, return_fallback=False):
    """Nadaraya-Watson prediction ``sum w y / sum w`` at ``(x, t)``.

    Where every weight underflows to zero the nearest observation in
    ``(x, t)`` is used instead; ``return_fallback=True`` also returns a mask
    marking those queries.
    """
    if not s > 0:
        raise ValueError(f"bandwidth must be positive, got {s!r}")
    scalar = np.ndim(x) == 0 and np.ndim(t) == 0
    px, pt, py = _flatten(samples)
    qx, qt = _query(x, t)
    d2 = _sq_dist(qx, qt, px, pt)
    with np.errstate(divide="ignore", invalid="ignore"):
        # s * s may underflow; an exact hit then keeps weight 1
        w = np.exp(-np.where(d2 == 0.0, 0.0, d2 / (2.0 * s * s)))
    norm = w.sum(axis=1)
    fallback = norm == 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        pred = (w @ py) / norm
    if fallback.any():
        pred[fallback] = py[np.argmin(d2[fallback], axis=1)]
    if scalar:
        pred, fallback = float(pred[0]), bool(fallback[0])
    return (pred, fallback) if return_fallback else pred


def static_kernel_predict(samples, s, x, t, rtol=None):
    """Least-squares fit with the static space-time Gaussian kernel (pseudo-inverse)."""
    if not s > 0:
        raise ValueError(f"bandwidth must be positive, got {s!r}")
    px, pt, py = _flatten(samples)
    gram = np.exp(-_sq_dist(px, pt, px, pt) / (2.0 * s * s))
    coef = pinv(gram, rtol)[0] @ py
    qx, qt = _query(x, t)
    pred = np.exp(-_sq_dist(qx, qt, px, pt) / (2.0 * s * s)) @ coef
    return float(pred[0]) if np.ndim(x) == 0 and np.ndim(t) == 0 else pred


def predictor(method):
    if method == "nadaraya_watson":
        return idw_predict
    if method == "static_pinv":
        return static_kernel_predict
    raise ValueError(f"unknown baseline method {method!r}; available: {METHODS}")


def _folds(samples, folds, seed, by):
    if by == "point":
        order = make_rng(seed).permutation(samples.total)
        parts = np.array_split(order, folds)
    elif by == "snapshot":
        parts = [
            np.concatenate([np.arange(samples.total)[samples.block(k)] for k in range(f, len(samples), folds)])
            if f < len(samples) else np.zeros(0, dtype=int)
            for f in range(folds)
        ]
    else:
        raise ValueError(f"unknown fold structure {by!r}")
    for i, part in enumerate(parts):
        if part.size == 0:
            raise ValueError(f"fold {i} is empty ({folds} folds for {samples.total} samples, by {by})")
    return parts


def cv_scores(samples, grid, folds=5, seed=0, by="point", method="nadaraya_watson"):
    """Mean squared held-out prediction error for each bandwidth in ``grid``."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ValueError("empty bandwidth grid")
    if folds < 2:
        raise ValueError("need at least 2 folds")
    predict = predictor(method)
    px, pt, py = _flatten(samples)
    parts = _folds(samples, folds, seed, by)
    scores = np.zeros(grid.size)
    for held in parts:
        train = np.setdiff1d(np.arange(px.size), held)
        train_set = SnapshotSet.from_arrays(pt[train], px[train], py[train])
        for j, s in enumerate(grid):
            err = predict(train_set, s, px[held], pt[held]) - py[held]
            scores[j] += np.sum(err**2)
    return scores / px.size


def cross_validate_bandwidth(samples, grid, folds=5, seed=0, by="point", method="nadaraya_watson"):
    """Bandwidth from ``grid`` with the smallest cross-validated error."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    scores = cv_scores(samples, grid, folds, seed, by, method)
    return float(grid[int(np.argmin(scores))])
