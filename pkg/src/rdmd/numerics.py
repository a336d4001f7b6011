"""Dense complex linear-algebra kernels.

Thin, contract-checked wrappers over LAPACK (through :mod:`scipy.linalg`).
Every other module goes through these so that tolerances and failure modes
are uniform.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

DEFAULT_PINV_RTOL = 1e-12
SOLVE_RCOND_MIN = 1e-14


class NumericFailure(RuntimeError):
    """An iterative kernel did not converge or produced non-finite output."""


class SingularityError(NumericFailure):
    """A linear system is too close to singular to solve reliably."""

    def __init__(self, msg: str, ratio: float, z: complex | None = None):
        super().__init__(msg)
        self.ratio = ratio
        self.z = z


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    """Return ``m`` as a finite 2-D complex array (raises ``ValueError`` otherwise)."""
    a = np.asarray(m)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    a = a.astype(np.complex128, copy=False)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def _square(a: np.ndarray, name: str) -> None:
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got {a.shape}")


@dataclass(frozen=True)
class SvdFactors:
    left_vectors: np.ndarray
    singular_values: np.ndarray
    right_vectors: np.ndarray
    rank_tolerance: float

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.singular_values > self.rank_tolerance))

    def reconstruct(self) -> np.ndarray:
        return (self.left_vectors * self.singular_values) @ self.right_vectors.conj().T


def svd(m, rel_tol: float = DEFAULT_PINV_RTOL) -> SvdFactors:
    """Thin SVD ``m = U diag(s) V^H`` with descending ``s``.

    ``right_vectors`` holds V (not V^H).
    """
    a = as_matrix(m)
    if a.size == 0:
        raise ValueError("svd of an empty matrix")
    try:
        u, s, vh = sla.svd(a, full_matrices=False, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        try:
            u, s, vh = sla.svd(a, full_matrices=False, lapack_driver="gesvd")
        except np.linalg.LinAlgError as exc:
            raise NumericFailure(f"SVD did not converge: {exc}") from exc
    tol = rel_tol * (s[0] if s.size else 0.0)
    return SvdFactors(u, s, vh.conj().T, float(tol))


def pinv(m, rel_tol: float = DEFAULT_PINV_RTOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse, dropping singular values below ``rel_tol * s_max``."""
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    a = as_matrix(m)
    if not np.any(a):
        return np.zeros((a.shape[1], a.shape[0]), dtype=np.complex128)
    f = svd(a, rel_tol)
    keep = f.singular_values > f.rank_tolerance
    v = f.right_vectors[:, keep]
    u = f.left_vectors[:, keep]
    return (v / f.singular_values[keep]) @ u.conj().T


def eig(m) -> list[tuple[complex, np.ndarray]]:
    """Eigenpairs of a general square matrix, repeated per algebraic multiplicity.

    LAPACK ``zgeev``: Hessenberg-QR to Schur form, eigenvectors by
    back-substitution, each normalized to unit 2-norm.
    """
    a = as_matrix(m)
    _square(a, "eig input")
    try:
        w, v = sla.eig(a)
    except np.linalg.LinAlgError as exc:
        raise NumericFailure(f"eigensolver did not converge: {exc}") from exc
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(v))):
        raise NumericFailure("eigensolver produced non-finite output")
    return [(complex(w[i]), v[:, i]) for i in range(w.size)]


def eigvals(m) -> np.ndarray:
    a = as_matrix(m)
    _square(a, "eig input")
    try:
        w = sla.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise NumericFailure(f"eigensolver did not converge: {exc}") from exc
    return w


def spectral_norm(m) -> float:
    a = as_matrix(m)
    if a.size == 0:
        return 0.0
    return float(sla.svdvals(a)[0])


def sigma_min(m) -> float:
    """Smallest singular value of a square matrix."""
    a = as_matrix(m)
    _square(a, "sigma_min input")
    try:
        s = sla.svdvals(a)
    except np.linalg.LinAlgError as exc:
        raise NumericFailure(f"SVD did not converge: {exc}") from exc
    return float(s[-1])


def solve(m, rhs) -> np.ndarray:
    """Solve ``m x = rhs``; refuses systems with ``sigma_min/sigma_max <= 1e-14``."""
    a = as_matrix(m)
    _square(a, "solve matrix")
    b = np.asarray(rhs, dtype=np.complex128)
    vec = b.ndim == 1
    b = b.reshape(a.shape[0], -1)
    s = sla.svdvals(a)
    ratio = float(s[-1] / s[0]) if s[0] > 0 else 0.0
    if ratio <= SOLVE_RCOND_MIN:
        raise SingularityError(f"near-singular system (sigma_min/sigma_max = {ratio:.3e})", ratio)
    x = sla.solve(a, b, check_finite=False)
    return x.ravel() if vec else x
