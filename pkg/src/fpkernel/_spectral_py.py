"""Pure-numpy implementation of the modal kernel core.

Same signatures and numerical conventions as the compiled ``_spectral``
extension; used when the extension is not built or when
``FPKERNEL_PURE_PYTHON=1`` is set.
"""
import numpy as np

_RESCALE = 1e100
_CHUNK = 1 << 22


def _sinpi(v):
    r = np.fmod(v, 2.0)
    r = np.where(r < 0.0, r + 2.0, r)
    sign = np.where(r >= 1.0, -1.0, 1.0)
    r = np.where(r >= 1.0, r - 1.0, r)
    r = np.where(r > 0.5, 1.0 - r, r)
    return sign * np.sin(np.pi * r)


def _cospi(v):
    r = np.fmod(np.abs(v), 2.0)
    r = np.where(r > 1.0, 2.0 - r, r)
    return np.sin(np.pi * (0.5 - r))


def basis_matrix(family, x, n_lo, n_hi, scale):
    """Eigenfunctions phi_n(x_i) for n in [n_lo, n_hi), one row per point."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    nmodes = n_hi - n_lo
    if nmodes <= 0:
        return np.zeros((x.size, 0))
    n = np.arange(n_lo, n_hi, dtype=np.float64)
    if family == 1:
        return np.sqrt(2.0) * _sinpi(np.multiply.outer(x, n))
    if family == 2:
        out = np.sqrt(2.0) * _cospi(np.multiply.outer(x, n))
        if n_lo == 0:
            out[:, 0] = 1.0
        return out
    if family == 3:
        return _hermite_functions(x / scale, n_lo, n_hi) / np.sqrt(scale)
    raise ValueError(f"unknown spectral family code {family}")


def _hermite_functions(u, n_lo, n_hi):
    # normalized recurrence with deferred Gaussian factor; rescaled to avoid overflow
    out = np.zeros((u.size, n_hi - n_lo))
    psi_prev = np.zeros_like(u)
    psi = np.full_like(u, (2.0 * np.pi) ** -0.25)
    logscale = -0.5 * u * u
    lnrescale = np.log(_RESCALE)
    for n in range(n_hi):
        if n >= n_lo:
            out[:, n - n_lo] = psi * np.exp(logscale)
        psi_next = (u * psi - np.sqrt(float(n)) * psi_prev) / np.sqrt(float(n + 1))
        psi_prev = psi
        psi = psi_next
        big = np.abs(psi) > _RESCALE
        if big.any():
            psi = np.where(big, psi / _RESCALE, psi)
            psi_prev = np.where(big, psi_prev / _RESCALE, psi_prev)
            logscale = np.where(big, logscale + lnrescale, logscale)
    return out


def modal_gram(a, b, w):
    """M[r, c] = sum_n w[r, n] * (a[r, n] * b[c, n])."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    nrows, nmodes = a.shape
    if b.shape[1] != nmodes or w.shape != a.shape:
        raise ValueError("modal_gram: inconsistent shapes")
    out = np.zeros((nrows, b.shape[0]))
    if nmodes == 0:
        return out
    step = max(1, _CHUNK // max(1, b.shape[0] * nmodes))
    for lo in range(0, nrows, step):
        hi = min(nrows, lo + step)
        prod = a[lo:hi, None, :] * b[None, :, :]
        out[lo:hi] = (w[lo:hi, None, :] * prod).sum(axis=-1)
    return out


def gaussian_gram(x, t, centers, diffusion):
    """Heat kernel (4 pi D t)^(-1/2) exp(-(x - c)^2 / (4 D t))."""
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    four_dt = 4.0 * diffusion * t
    d = x[:, None] - centers[None, :]
    return (1.0 / np.sqrt(np.pi * four_dt))[:, None] * np.exp(-(d * d) / four_dt[:, None])


def modal_pairs(a, b, w):
    """out[i] = sum_n w[i, n] * (a[i, n] * b[i, n])."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if a.shape != b.shape or w.shape != a.shape:
        raise ValueError("modal_pairs: inconsistent shapes")
    return (w * (a * b)).sum(axis=-1)


def gaussian_pairs(x, t, y, diffusion):
    four_dt = 4.0 * diffusion * np.asarray(t, dtype=np.float64)
    d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    return (1.0 / np.sqrt(np.pi * four_dt)) * np.exp(-(d * d) / four_dt)
