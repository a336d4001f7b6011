"""Pure-Python implementation of the scan kernels (fallback for ``_kernels``)."""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla


def _ritz_max(alpha, beta):
    k = len(alpha)
    if k == 1:
        return alpha[0], 1.0
    w, v = sla.eigh_tridiagonal(np.asarray(alpha), np.asarray(beta[:k - 1]))
    return w[-1], v[-1, -1]


def tri_sigma_min(t: np.ndarray, z: complex, v0: np.ndarray, tol: float, maxiter: int):
    """Smallest singular value of ``z I - t`` for upper-triangular ``t``.

    Inverse Lanczos (full reorthogonalization) on ``(A^H A)^{-1}``.
    Returns ``(sigma, converged)``.
    """
    n = t.shape[0]
    a = -t.copy()
    a[np.diag_indices(n)] += z
    if np.any(np.diag(a) == 0):
        return 0.0, True
    ah = a.conj().T
    maxiter = min(maxiter, n)
    q = np.empty((n, maxiter), dtype=np.complex128)
    alpha: list[float] = []
    beta: list[float] = []
    x = v0 / np.linalg.norm(v0)
    theta = 0.0
    for j in range(maxiter):
        q[:, j] = x
        y = sla.solve_triangular(ah, x, lower=True, check_finite=False)
        w = sla.solve_triangular(a, y, lower=False, check_finite=False)
        if not np.all(np.isfinite(w)):
            return np.nan, False
        alpha.append(float(np.vdot(x, w).real))
        qj = q[:, :j + 1]
        # two passes of classical Gram-Schmidt
        w = w - qj @ (qj.conj().T @ w)
        w = w - qj @ (qj.conj().T @ w)
        b = float(np.linalg.norm(w))
        beta.append(b)
        theta, last = _ritz_max(alpha, beta)
        if theta <= 0:
            return np.nan, False
        if b * abs(last) <= tol * theta or b <= 1e-300 or j == n - 1:
            return 1.0 / np.sqrt(theta), True
        x = w / b
    return 1.0 / np.sqrt(theta), False


def tri_sigma_min_scan(t, zs, v0, tol=1e-12, maxiter=80):
    t = np.ascontiguousarray(t, dtype=np.complex128)
    v0 = np.ascontiguousarray(v0, dtype=np.complex128)
    zs = np.asarray(zs, dtype=np.complex128).ravel()
    out = np.empty(zs.size)
    ok = np.empty(zs.size, dtype=bool)
    for i, z in enumerate(zs):
        out[i], ok[i] = tri_sigma_min(t, complex(z), v0, tol, maxiter)
    return out, ok
