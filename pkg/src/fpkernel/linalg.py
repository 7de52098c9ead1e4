"""SVD pseudo-inverse, PSD square root and stacked minimum-norm least squares."""
from dataclasses import dataclass

import numpy as np

from .errors import NotPSDError, NumericalError


@dataclass(frozen=True)
class PinvReport:
    rank: int
    singular_values: np.ndarray
    rtol_used: float


def default_rtol(shape):
    """Standard numerical-rank rule: ``max(m, n) * eps`` relative to sigma_max."""
    return max(shape) * np.finfo(float).eps


def _as_matrix(a):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def pinv(a, rtol=None):
    """Moore-Penrose pseudo-inverse via SVD.

    Singular values below ``rtol * sigma_max`` are treated as zero. Raises
    :class:`NumericalError` if a kept singular value is so small that the
    pseudo-inverse overflows.

    Returns
    -------
    a_pinv : ndarray, shape (n, m)
    report : PinvReport
    """
    a = _as_matrix(a)
    if rtol is None:
        rtol = default_rtol(a.shape)
    if not 0 <= rtol < 1:
        raise ValueError(f"rtol must lie in [0, 1), got {rtol!r}")
    m, n = a.shape
    if m == 0 or n == 0:
        return np.zeros((n, m)), PinvReport(0, np.zeros(0), float(rtol))
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge for a {m}x{n} matrix: {exc}") from exc
    keep = s > rtol * s[0] if s[0] > 0 else np.zeros_like(s, dtype=bool)
    s_inv = np.zeros_like(s)
    with np.errstate(over="ignore", divide="ignore"):
        s_inv[keep] = 1.0 / s[keep]
    if not np.isfinite(s_inv).all():
        raise NumericalError(f"pseudo-inverse overflows: smallest kept singular value {s[keep][-1]:.3e}")
    a_pinv = (vt.T * s_inv) @ u.T
    return a_pinv, PinvReport(int(keep.sum()), s, float(rtol))


def sym_sqrt_psd(k, clamp_tol=1e-10):
    """Symmetric square root ``L = V diag(sqrt(lambda)) V^T`` of a PSD matrix.

    Eigenvalues in ``[-clamp_tol * lambda_max, 0)`` are clamped to zero;
    anything more negative raises :class:`NotPSDError`. Positive eigenvalues
    below the roundoff level ``n * eps * lambda_max`` are zeroed as well:
    their square roots would turn noise into singular values of order
    ``sqrt(eps)``, which downstream pseudo-inverses cannot tell from signal.
    """
    k = _as_matrix(k)
    if k.shape[0] != k.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {k.shape}")
    scale = np.abs(k).max() if k.size else 0.0
    if scale == 0.0:
        return np.zeros_like(k)
    if np.abs(k - k.T).max() > 1e-10 * scale:
        raise ValueError("matrix is not symmetric within 1e-10 relative")
    evals, evecs = np.linalg.eigh(0.5 * (k + k.T))
    lam_max = evals[-1]
    if lam_max <= 0:
        if evals[0] < -clamp_tol * scale:
            raise NotPSDError(f"matrix has eigenvalue {evals[0]:.3e} < 0", float(evals[0]))
        return np.zeros_like(k)
    if evals[0] < -clamp_tol * lam_max:
        raise NotPSDError(
            f"matrix is not positive semi-definite: eigenvalue {evals[0]:.3e} "
            f"below -clamp_tol * lambda_max = {-clamp_tol * lam_max:.3e}",
            float(evals[0]),
        )
    noise = default_rtol(k.shape) * lam_max
    root = np.sqrt(np.where(evals > noise, evals, 0.0))
    return (evecs * root) @ evecs.T


def stacked_min_norm_lstsq(blocks, rtol=None):
    """Minimum-norm minimizer of ``sum_k ||A_k x - b_k||^2``.

    Parameters
    ----------
    blocks : sequence of (A_k, b_k)
        All ``A_k`` must share the column count.
    """
    blocks = list(blocks)
    if not blocks:
        raise ValueError("no blocks given")
    mats, rhs = [], []
    ncols = None
    for idx, (a_k, b_k) in enumerate(blocks):
        a_k = _as_matrix(a_k)
        b_k = np.asarray(b_k, dtype=float).ravel()
        if ncols is None:
            ncols = a_k.shape[1]
        if a_k.shape[1] != ncols:
            raise ValueError(f"block {idx} has {a_k.shape[1]} columns, expected {ncols}")
        if b_k.size != a_k.shape[0]:
            raise ValueError(f"block {idx}: rhs length {b_k.size} != rows {a_k.shape[0]}")
        mats.append(a_k)
        rhs.append(b_k)
    a = np.vstack(mats)
    a_pinv, _ = pinv(a, rtol)
    return a_pinv @ np.concatenate(rhs)
