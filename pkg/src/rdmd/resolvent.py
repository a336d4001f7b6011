"""Pseudo-resolvent evaluation, pseudospectral scans and pseudoeigenfunctions.

The data-driven resolvent is assembled through the Sherman-Morrison-Woodbury
identity with ``A = zI``, ``U = -X^+`` and ``V = Y``::

    R_N(z) = I/z + X^+ (I - Y X^+ / z)^{-1} Y / z**2

which equals ``(zI - K_N)^{-1}`` with ``K_N = X^+ Y``.  In generator mode
``Y`` is replaced by the finite-difference data ``(Y - X)/dt``.

Norms of ``R_N`` are evaluated as ``sigma_min(zI - K_N)`` (``1/||R_N||``).
Grid scans share one complex Schur factorization ``K_N = Q T Q^H`` and run
inverse Lanczos on the triangular factor in the compiled kernel.
"""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import kernels, numerics
from .dictionary import SnapshotMatrices
from .edmd import derivative_snapshots

POLE_GUARD = 1e-8
LANCZOS_TOL = 1e-12
LANCZOS_MAXITER = 80


class PoleError(numerics.NumericFailure):
    pass


class EigenvalueHit(numerics.SingularityError):
    pass


@dataclass
class ResolventEvaluator:
    """Precomputed factors for evaluating ``R_N(z)`` along several routes.

    ``psi_x_pinv`` and ``psi_y`` are stored with the square-root quadrature
    weights already applied; they are ``None`` for evaluators built from a
    bare matrix (SMW route unavailable).
    """

    matrix: np.ndarray
    mode: str = "koopman"
    psi_x_pinv: np.ndarray | None = None
    psi_y: np.ndarray | None = None
    _product: np.ndarray | None = field(default=None, repr=False)
    _schur: tuple | None = field(default=None, repr=False)
    _eigs: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.matrix = numerics.as_matrix(self.matrix, "operator matrix")
        if self.matrix.shape[0] != self.matrix.shape[1]:
            raise ValueError("operator matrix must be square")
        if self.mode not in ("koopman", "generator"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.psi_x_pinv is not None:
            n, m = self.psi_x_pinv.shape
            if self.psi_y.shape != (m, n) or n != self.n:
                raise ValueError("inconsistent snapshot factor shapes")

    @classmethod
    def from_snapshots(cls, snap: SnapshotMatrices, mode: str = "koopman",
                       rel_tol: float = numerics.DEFAULT_PINV_RTOL) -> "ResolventEvaluator":
        sw = snap.sqrt_w
        xp = numerics.pinv(sw * snap.psi_x, rel_tol)
        if mode == "koopman":
            y = sw * snap.psi_y
        elif mode == "generator":
            y = sw * derivative_snapshots(snap)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        return cls(xp @ y, mode, xp, y)

    @classmethod
    def from_matrix(cls, k, mode: str = "koopman") -> "ResolventEvaluator":
        return cls(np.asarray(k), mode)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def has_snapshots(self) -> bool:
        return self.psi_x_pinv is not None

    @property
    def cached_product(self) -> np.ndarray:
        """``Y X^+`` (M x M), formed on first use."""
        if not self.has_snapshots:
            raise ValueError("evaluator has no snapshot data")
        if self._product is None:
            self._product = self.psi_y @ self.psi_x_pinv
        return self._product

    @property
    def schur(self) -> tuple[np.ndarray, np.ndarray]:
        if self._schur is None:
            t, q = sla.schur(self.matrix, output="complex")
            self._schur = (t, q)
        return self._schur

    @property
    def eigenvalues(self) -> np.ndarray:
        if self._eigs is None:
            self._eigs = numerics.eigvals(self.matrix)
        return self._eigs

    def perturbed(self, delta: np.ndarray) -> "ResolventEvaluator":
        """Copy whose direct-route matrix is ``K + delta``; snapshot factors untouched.

        Test hook for negative controls of the SMW cross-check.
        """
        return ResolventEvaluator(self.matrix + delta, self.mode, self.psi_x_pinv, self.psi_y)


def smw_resolvent(ev: ResolventEvaluator, z: complex) -> np.ndarray:
    """``R_N(z)`` assembled from the snapshot factors by Sherman-Morrison-Woodbury."""
    z = complex(z)
    if z == 0:
        raise PoleError("SMW resolvent has a pole at z = 0")
    if abs(z) < POLE_GUARD:
        return direct_resolvent(ev, z)
    p = ev.cached_product
    inner = np.eye(p.shape[0], dtype=np.complex128) - p / z
    try:
        core = numerics.solve(inner, ev.psi_y)
    except numerics.SingularityError as exc:
        raise numerics.SingularityError(f"SMW inner system singular at z = {z}", exc.ratio, z) from exc
    return np.eye(ev.n) / z + (ev.psi_x_pinv @ core) / z ** 2


def direct_resolvent(ev: ResolventEvaluator, z: complex) -> np.ndarray:
    """``(zI - K_N)^{-1}`` by a dense solve."""
    a = complex(z) * np.eye(ev.n) - ev.matrix
    try:
        return numerics.solve(a, np.eye(ev.n, dtype=np.complex128))
    except numerics.SingularityError as exc:
        raise EigenvalueHit(f"z = {z} is (numerically) an eigenvalue", exc.ratio, complex(z)) from exc


def inv_resolvent_norm(ev: ResolventEvaluator, z: complex, method: str = "svd") -> float:
    """``1/||R_N(z)||`` as ``sigma_min(zI - K_N)``; 0 at exact eigenvalues.

    ``method``: ``svd`` (dense), ``schur`` (triangular kernel), ``smw``
    (spectral norm of the SMW-assembled resolvent).
    """
    z = complex(z)
    if method == "svd":
        return numerics.sigma_min(z * np.eye(ev.n) - ev.matrix)
    if method == "schur":
        return float(_schur_scan(ev, np.array([z]))[0])
    if method == "smw":
        try:
            return 1.0 / numerics.spectral_norm(smw_resolvent(ev, z))
        except numerics.SingularityError:
            return 0.0
    raise ValueError(f"unknown method {method!r}")


def _start_vector(n: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(20240917))
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


def _schur_scan(ev: ResolventEvaluator, zs: np.ndarray) -> np.ndarray:
    t, _ = ev.schur
    vals, ok = kernels.tri_sigma_min_scan(t, zs, _start_vector(ev.n), LANCZOS_TOL, LANCZOS_MAXITER)
    bad = ~ok | ~np.isfinite(vals)
    for i in np.flatnonzero(bad):
        vals[i] = numerics.sigma_min(zs[i] * np.eye(ev.n) - t)
    return vals


def scan_points(ev: ResolventEvaluator, zs, method: str = "schur", threads: int = 1) -> np.ndarray:
    """``1/||R_N(z)||`` at each point.

    With ``threads > 1`` the Schur route splits the points into contiguous
    chunks evaluated concurrently (the compiled kernel releases the GIL);
    every point is computed independently, so results do not depend on the
    thread count.
    """
    zs = np.asarray(zs, dtype=np.complex128).ravel()
    if method == "schur":
        if threads > 1 and zs.size > 1:
            ev.schur  # factor once before the workers share it
            chunks = np.array_split(zs, min(threads, zs.size))
            with ThreadPoolExecutor(max_workers=threads) as pool:
                return np.concatenate(list(pool.map(lambda c: _schur_scan(ev, c), chunks)))
        return _schur_scan(ev, zs)
    return np.array([inv_resolvent_norm(ev, z, method) for z in zs])


@dataclass(frozen=True)
class PseudospectrumGrid:
    points: np.ndarray
    inv_norms: np.ndarray
    grid_kind: str
    params: dict
    shape: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.points.shape != self.inv_norms.shape:
            raise ValueError("points and inv_norms must have equal length")
        if np.any(self.inv_norms < 0):
            raise ValueError("inverse resolvent norms must be non-negative")

    def to_csv(self, path, detected: np.ndarray | None = None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            head = ["re(z)", "im(z)", "inv_norm"]
            if detected is not None:
                head.append("detected")
            w.writerow(head)
            for i, (z, v) in enumerate(zip(self.points, self.inv_norms)):
                row = [f"{z.real:.17g}", f"{z.imag:.17g}", f"{v:.17g}"]
                if detected is not None:
                    row.append(int(detected[i]))
                w.writerow(row)

    @classmethod
    def from_csv(cls, path, grid_kind: str = "points") -> "PseudospectrumGrid":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0] + 1j * data[:, 1], data[:, 2], grid_kind, {})


def circle_points(radius: float, n_points: int, center: complex = 0.0) -> np.ndarray:
    return center + radius * np.exp(2j * np.pi * np.arange(n_points) / n_points)


def scan_circle(ev: ResolventEvaluator, radius: float, n_points: int = 360,
                method: str = "schur", threads: int = 1) -> PseudospectrumGrid:
    if radius <= 0:
        raise ValueError("radius must be positive")
    if n_points < 4:
        raise ValueError("n_points must be >= 4")
    zs = circle_points(radius, n_points)
    return PseudospectrumGrid(zs, scan_points(ev, zs, method, threads), "circle",
                              {"radius": radius, "n_points": n_points})


def rectangle_points(re_range, im_range, nx: int, ny: int) -> np.ndarray:
    """Row-major grid: rows run over the imaginary axis, columns over the real."""
    xs = np.linspace(re_range[0], re_range[1], nx)
    ys = np.linspace(im_range[0], im_range[1], ny)
    return (xs[None, :] + 1j * ys[:, None]).ravel()


def scan_rectangle(ev: ResolventEvaluator, re_range, im_range, nx: int = 101, ny: int = 101,
                   method: str = "schur", threads: int = 1) -> PseudospectrumGrid:
    if nx < 2 or ny < 2:
        raise ValueError("nx and ny must be >= 2")
    zs = rectangle_points(re_range, im_range, nx, ny)
    if method == "smw":
        vals = np.array([inv_resolvent_norm(ev, z, "svd" if abs(z) < POLE_GUARD else "smw") for z in zs])
    else:
        vals = scan_points(ev, zs, method, threads)
    return PseudospectrumGrid(zs, vals, "rectangle",
                              {"re_range": list(re_range), "im_range": list(im_range), "nx": nx, "ny": ny},
                              (ny, nx))


@dataclass(frozen=True)
class DetectionResult:
    threshold: float
    mask: np.ndarray
    grid: PseudospectrumGrid

    @property
    def detected(self) -> np.ndarray:
        return self.grid.points[self.mask]

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    def to_csv(self, path) -> None:
        self.grid.to_csv(path, detected=self.mask)


def detect(grid: PseudospectrumGrid, threshold: float) -> DetectionResult:
    """Grid points with ``inv_norm < threshold`` (strict)."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    return DetectionResult(float(threshold), grid.inv_norms < threshold, grid)


@dataclass(frozen=True)
class Pseudoeigenfunction:
    z: complex
    coeffs: np.ndarray
    amplification: float


def _fix_phase(v: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(v)))
    out = v * (abs(v[i]) / v[i])
    out[i] = abs(v[i])  # exactly real, free of the rounding in the rotation
    return out


def pseudoeigenfunction(ev: ResolventEvaluator, z: complex) -> Pseudoeigenfunction:
    """Direction maximally amplified by ``R_N(z)``.

    The right singular vector of ``zI - K_N`` for its smallest singular value;
    at an exact eigenvalue this is an eigenvector (amplification ``inf``).
    """
    z = complex(z)
    f = numerics.svd(z * np.eye(ev.n) - ev.matrix)
    s = f.singular_values[-1]
    v = f.right_vectors[:, -1]
    v = _fix_phase(v / np.linalg.norm(v))
    amp = np.inf if s == 0 else 1.0 / s
    return Pseudoeigenfunction(z, v, float(amp))
