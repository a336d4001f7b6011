# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled scan kernels; same algorithm and signature as ``_kernels_py``.

The Lanczos loop runs without the GIL; triangular solves and Gram-Schmidt
products go through the BLAS shipped with SciPy (``ztrsv``, ``zgemv``) and the
tridiagonal Ritz problem through LAPACK ``dstev``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, isfinite, NAN
from libc.stdlib cimport malloc, free
from scipy.linalg.cython_blas cimport ztrsv, zgemv, dznrm2
from scipy.linalg.cython_lapack cimport dstev

cnp.import_array()


cdef int _ritz_max(double* alpha, double* beta, int k,
                   double* d, double* e, double* zv, double* work,
                   double* theta, double* last) noexcept nogil:
    cdef int i, info = 0, ldz = k
    cdef char jobz = b'V'
    if k == 1:
        theta[0] = alpha[0]
        last[0] = 1.0
        return 0
    for i in range(k):
        d[i] = alpha[i]
    for i in range(k - 1):
        e[i] = beta[i]
    dstev(&jobz, &k, d, e, zv, &ldz, work, &info)
    if info != 0:
        return info
    theta[0] = d[k - 1]
    # eigenvector of the largest value is column k-1; its last component
    last[0] = zv[(k - 1) * ldz + (k - 1)]
    return 0


cdef (double, bint) _tri_sigma_min(const double complex* t, int n, double complex z,
                                   const double complex* v0, double tol, int maxiter,
                                   double complex* a, double complex* q, double complex* w,
                                   double complex* proj, double* alpha, double* beta,
                                   double* d, double* e, double* zv, double* work) noexcept nogil:
    """``t`` is row-major; ``a`` receives ``zI - t`` column-major (so BLAS sees it untransposed)."""
    cdef int i, j, k, info, one = 1
    cdef double complex s, zero_c = 0.0, one_c = 1.0, mone_c = -1.0
    cdef double nrm, b, theta = 0.0, last = 0.0
    cdef char up = b'U', notr = b'N', conj = b'C', nonunit = b'N'
    for i in range(n):
        if z - t[i * n + i] == 0:
            return 0.0, True
    if maxiter > n:
        maxiter = n
    # column-major A[i, j] = a[i + j n]; only the upper triangle is referenced
    for j in range(n):
        for i in range(j + 1):
            a[i + j * n] = -t[i * n + j]
        a[j + j * n] = a[j + j * n] + z
    nrm = dznrm2(&n, <double complex*>v0, &one)
    for i in range(n):
        q[i] = v0[i] / nrm
    for j in range(maxiter):
        # w = (A^H A)^{-1} q_j : solve A^H y = q_j, then A w = y
        for i in range(n):
            w[i] = q[j * n + i]
        ztrsv(&up, &conj, &nonunit, &n, a, &n, w, &one)
        ztrsv(&up, &notr, &nonunit, &n, a, &n, w, &one)
        s = 0
        for i in range(n):
            if not (isfinite(w[i].real) and isfinite(w[i].imag)):
                return NAN, False
            s = s + q[j * n + i].conjugate() * w[i]
        alpha[j] = s.real
        k = j + 1
        # two passes of classical Gram-Schmidt against q_0..q_j
        for i in range(2):
            zgemv(&conj, &n, &k, &one_c, q, &n, w, &one, &zero_c, proj, &one)
            zgemv(&notr, &n, &k, &mone_c, q, &n, proj, &one, &one_c, w, &one)
        b = dznrm2(&n, w, &one)
        beta[j] = b
        info = _ritz_max(alpha, beta, k, d, e, zv, work, &theta, &last)
        if info != 0 or theta <= 0:
            return NAN, False
        if b * fabs(last) <= tol * theta or b <= 1e-300 or j == n - 1:
            return 1.0 / sqrt(theta), True
        for i in range(n):
            q[k * n + i] = w[i] / b
    return 1.0 / sqrt(theta), False


def tri_sigma_min_scan(t, zs, v0, double tol=1e-12, int maxiter=80):
    """Smallest singular value of ``z I - t`` (``t`` upper triangular) for each ``z``.

    Returns ``(values, converged)`` arrays.
    """
    cdef const double complex[:, ::1] tv = np.ascontiguousarray(t, dtype=np.complex128)
    cdef const double complex[::1] vv = np.ascontiguousarray(v0, dtype=np.complex128)
    cdef double complex[::1] zv_in = np.ascontiguousarray(np.asarray(zs, dtype=np.complex128).ravel())
    cdef int n = <int>tv.shape[0]
    cdef Py_ssize_t m = zv_in.shape[0], i
    cdef int kmax = <int>min(maxiter, n)
    if vv.shape[0] != n or tv.shape[1] != n:
        raise ValueError("t must be square and v0 must match its dimension")
    out = np.empty(m, dtype=np.float64)
    ok = np.empty(m, dtype=np.bool_)
    if m == 0:
        return out, ok
    cdef double[::1] outv = out
    cdef cnp.npy_bool[::1] okv = ok
    # q holds kmax + 1 columns: the next Lanczos vector is written before the convergence check
    cdef double complex* a = <double complex*>malloc(<size_t>n * n * sizeof(double complex))
    cdef double complex* q = <double complex*>malloc(<size_t>n * (kmax + 1) * sizeof(double complex))
    cdef double complex* w = <double complex*>malloc(<size_t>n * sizeof(double complex))
    cdef double complex* proj = <double complex*>malloc(<size_t>(kmax + 1) * sizeof(double complex))
    cdef double* alpha = <double*>malloc(<size_t>(kmax + 1) * sizeof(double))
    cdef double* beta = <double*>malloc(<size_t>(kmax + 1) * sizeof(double))
    cdef double* d = <double*>malloc(<size_t>(kmax + 1) * sizeof(double))
    cdef double* e = <double*>malloc(<size_t>(kmax + 1) * sizeof(double))
    cdef double* zz = <double*>malloc(<size_t>(kmax + 1) * (kmax + 1) * sizeof(double))
    cdef double* work = <double*>malloc(<size_t>2 * (kmax + 1) * sizeof(double))
    cdef double val
    cdef bint conv
    try:
        if not (a and q and w and proj and alpha and beta and d and e and zz and work):
            raise MemoryError()
        with nogil:
            for i in range(m):
                val, conv = _tri_sigma_min(&tv[0, 0], n, zv_in[i], &vv[0], tol, kmax, a, q, w, proj,
                                           alpha, beta, d, e, zz, work)
                outv[i] = val
                okv[i] = conv
    finally:
        free(a)
        free(q)
        free(w)
        free(proj)
        free(alpha)
        free(beta)
        free(d)
        free(e)
        free(zz)
        free(work)
    return out, ok
