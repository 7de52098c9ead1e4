# cython: language_level=3
"""Compiled core for modal kernel sums.

Mirrors ``fpkernel._spectral_py`` function for function. Products are formed
as ``w * (a * b)`` so that swapping the two kernel arguments is bit-exact.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, exp, sqrt, fmod, fabs, log, M_PI

cnp.import_array()

DEF RESCALE = 1e100

cdef double _sinpi(double v) noexcept nogil:
    cdef double r = fmod(v, 2.0)
    cdef double sign = 1.0
    if r < 0.0:
        r += 2.0
    if r >= 1.0:
        r -= 1.0
        sign = -1.0
    if r > 0.5:
        r = 1.0 - r
    return sign * sin(M_PI * r)


cdef double _cospi(double v) noexcept nogil:
    cdef double r = fmod(fabs(v), 2.0)
    if r > 1.0:
        r = 2.0 - r
    return sin(M_PI * (0.5 - r))


def basis_matrix(int family, const double[::1] x, int n_lo, int n_hi, double scale):
    """Eigenfunctions phi_n(x_i) for n in [n_lo, n_hi), one row per point."""
    cdef Py_ssize_t npts = x.shape[0]
    cdef Py_ssize_t nmodes = n_hi - n_lo
    out_arr = np.zeros((npts, max(nmodes, 0)), dtype=np.float64)
    if nmodes <= 0:
        return out_arr
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, n
    cdef double root2 = sqrt(2.0)
    cdef double u, psi, psi_prev, psi_next, logscale, norm0, amp
    cdef double lnrescale = log(RESCALE)
    with nogil:
        if family == 1:
            for i in range(npts):
                for n in range(n_lo, n_hi):
                    out[i, n - n_lo] = root2 * _sinpi(n * x[i])
        elif family == 2:
            for i in range(npts):
                for n in range(n_lo, n_hi):
                    if n == 0:
                        out[i, 0] = 1.0
                    else:
                        out[i, n - n_lo] = root2 * _cospi(n * x[i])
        elif family == 3:
            norm0 = (2.0 * M_PI) ** -0.25
            amp = 1.0 / sqrt(scale)
            for i in range(npts):
                u = x[i] / scale
                psi_prev = 0.0
                psi = norm0
                logscale = -0.5 * u * u
                for n in range(n_hi):
                    if n >= n_lo:
                        out[i, n - n_lo] = amp * psi * exp(logscale)
                    psi_next = (u * psi - sqrt(<double>n) * psi_prev) / sqrt(<double>(n + 1))
                    psi_prev = psi
                    psi = psi_next
                    if fabs(psi) > RESCALE:
                        psi /= RESCALE
                        psi_prev /= RESCALE
                        logscale += lnrescale
    return out_arr


def modal_gram(const double[:, ::1] a, const double[:, ::1] b, const double[:, ::1] w):
    """M[r, c] = sum_n w[r, n] * (a[r, n] * b[c, n])."""
    cdef Py_ssize_t nrows = a.shape[0]
    cdef Py_ssize_t ncols = b.shape[0]
    cdef Py_ssize_t nmodes = a.shape[1]
    if b.shape[1] != nmodes or w.shape[0] != nrows or w.shape[1] != nmodes:
        raise ValueError("modal_gram: inconsistent shapes")
    out_arr = np.zeros((nrows, ncols), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t r, c, n
    cdef double acc
    with nogil:
        for r in range(nrows):
            for c in range(ncols):
                acc = 0.0
                for n in range(nmodes):
                    acc = acc + w[r, n] * (a[r, n] * b[c, n])
                out[r, c] = acc
    return out_arr


def gaussian_gram(const double[::1] x, const double[::1] t, const double[::1] centers, double diffusion):
    """Heat kernel (4 pi D t)^(-1/2) exp(-(x - c)^2 / (4 D t))."""
    cdef Py_ssize_t nrows = x.shape[0]
    cdef Py_ssize_t ncols = centers.shape[0]
    out_arr = np.empty((nrows, ncols), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t r, c
    cdef double four_dt, norm, d
    with nogil:
        for r in range(nrows):
            four_dt = 4.0 * diffusion * t[r]
            norm = 1.0 / sqrt(M_PI * four_dt)
            for c in range(ncols):
                d = x[r] - centers[c]
                out[r, c] = norm * exp(-(d * d) / four_dt)
    return out_arr


def modal_pairs(const double[:, ::1] a, const double[:, ::1] b, const double[:, ::1] w):
    """out[i] = sum_n w[i, n] * (a[i, n] * b[i, n])."""
    cdef Py_ssize_t npts = a.shape[0]
    cdef Py_ssize_t nmodes = a.shape[1]
    if b.shape[0] != npts or b.shape[1] != nmodes or w.shape[0] != npts or w.shape[1] != nmodes:
        raise ValueError("modal_pairs: inconsistent shapes")
    out_arr = np.zeros(npts, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, n
    cdef double acc
    with nogil:
        for i in range(npts):
            acc = 0.0
            for n in range(nmodes):
                acc = acc + w[i, n] * (a[i, n] * b[i, n])
            out[i] = acc
    return out_arr


def gaussian_pairs(const double[::1] x, const double[::1] t, const double[::1] y, double diffusion):
    cdef Py_ssize_t npts = x.shape[0]
    out_arr = np.empty(npts, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    cdef double four_dt, d
    with nogil:
        for i in range(npts):
            four_dt = 4.0 * diffusion * t[i]
            d = x[i] - y[i]
            out[i] = (1.0 / sqrt(M_PI * four_dt)) * exp(-(d * d) / four_dt)
    return out_arr
