"""Clustering of pseudoeigenfunctions and per-cluster spectral summaries.

Pipeline: pseudoeigenfunctions on a z-grid -> Gram-weighted principal angles
-> similarity matrix -> normalized-Laplacian embedding -> fuzzy C-means ->
smoothed spectral measures and least-squares reconstructions per cluster.

The spectral measure is a Poisson-smoothed moment surrogate, not a rigorous
measure computation; outputs carry ``kind = "poisson-moment surrogate"``.
"""
from __future__ import annotations

import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .dictionary import SnapshotMatrices
from .resolvent import Pseudoeigenfunction

WHITEN_JITTER = 1e-12
RANK_RTOL = 1e-10


class DegenerateSubspace(ValueError):
    pass


@dataclass
class PseudoeigenFamily:
    members: list[Pseudoeigenfunction]
    data_gram: np.ndarray
    real_closure: bool = True

    def __post_init__(self):
        n = self.data_gram.shape[0]
        for m in self.members:
            if m.coeffs.shape != (n,):
                raise ValueError("all members must share the Gram dimension")

    def __len__(self) -> int:
        return len(self.members)

    @property
    def coeffs(self) -> np.ndarray:
        return np.column_stack([m.coeffs for m in self.members])

    @property
    def points(self) -> np.ndarray:
        return np.array([m.z for m in self.members])

    def block(self, i: int, width: int = 1) -> np.ndarray:
        """Coefficient block spanning member ``i`` (and grid neighbours when ``width > 1``)."""
        n = len(self.members)
        lo = i - (width - 1) // 2
        idx = [(lo + j) % n for j in range(width)]
        b = np.column_stack([self.members[j].coeffs for j in idx])
        if self.real_closure:
            b = np.hstack([b, b.conj()])
        return b


class _Whitener:
    def __init__(self, g: np.ndarray):
        n = g.shape[0]
        gg = 0.5 * (g + g.conj().T) + WHITEN_JITTER * max(1.0, float(np.trace(g).real) / n) * np.eye(n)
        self.l = sla.cholesky(gg, lower=True)

    def basis(self, block: np.ndarray) -> np.ndarray:
        """Orthonormal basis (Euclidean after whitening) of the span of ``block``."""
        w = self.l.conj().T @ block
        u, s, _ = np.linalg.svd(w, full_matrices=False)
        if s.size == 0 or s[0] == 0:
            raise DegenerateSubspace("coefficient block has rank zero")
        r = int(np.count_nonzero(s > RANK_RTOL * s[0]))
        return u[:, :r]


def _angles_from_bases(qu: np.ndarray, qv: np.ndarray) -> np.ndarray:
    s = np.linalg.svd(qu.conj().T @ qv, compute_uv=False)
    return np.sort(np.arccos(np.clip(s, 0.0, 1.0)))


def principal_angles(u, v, g) -> np.ndarray:
    """Principal angles (ascending, radians) between spans of ``u`` and ``v`` in the ``g`` inner product."""
    u = np.asarray(u, dtype=np.complex128).reshape(np.shape(u)[0], -1)
    v = np.asarray(v, dtype=np.complex128).reshape(np.shape(v)[0], -1)
    w = _Whitener(np.asarray(g, dtype=np.complex128))
    return _angles_from_bases(w.basis(u), w.basis(v))


@dataclass(frozen=True)
class SimilarityMatrix:
    s: np.ndarray

    def __post_init__(self):
        if not np.allclose(self.s, self.s.T, atol=1e-12):
            raise ValueError("similarity must be symmetric")


def _aggregate(angles: np.ndarray, how: str) -> float:
    c2 = np.cos(angles) ** 2
    if how == "mean_cos2":
        return float(np.mean(c2))
    if how == "min_cos":
        return float(np.min(np.cos(angles)))
    raise ValueError(f"unknown angle aggregation {how!r}")


def similarity(fam: PseudoeigenFamily, subspace_width: int = 1,
               angle_aggregation: str = "mean_cos2", threads: int = 1) -> SimilarityMatrix:
    """``s_ij`` = mean of cos^2 of the principal angles between member subspaces.

    Upper-triangle rows are computed concurrently when ``threads > 1`` and
    then mirrored; each entry is independent, so the result is thread-count
    invariant.
    """
    if subspace_width < 1:
        raise ValueError("subspace_width must be >= 1")
    _aggregate(np.zeros(1), angle_aggregation)  # reject unknown names before any work
    w = _Whitener(fam.data_gram)
    bases = [w.basis(fam.block(i, subspace_width)) for i in range(len(fam))]
    n = len(bases)

    def row(i):
        return [_aggregate(_angles_from_bases(bases[i], bases[j]), angle_aggregation) for j in range(i + 1, n)]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(row, range(n)))
    else:
        rows = [row(i) for i in range(n)]
    s = np.eye(n)
    for i, r in enumerate(rows):
        s[i, i + 1:] = r
        s[i + 1:, i] = r
    return SimilarityMatrix(np.clip(s, 0.0, 1.0))


@dataclass(frozen=True)
class Embedding:
    coords: np.ndarray
    eigenvalues: np.ndarray
    isolated: np.ndarray


def spectral_embed(s: SimilarityMatrix, k_embed: int) -> Embedding:
    """Rows of the ``k_embed`` lowest eigenvectors of ``I - D^-1/2 S D^-1/2``, row-normalized."""
    if k_embed < 1:
        raise ValueError("k_embed must be >= 1")
    a = np.array(s.s, dtype=float)
    n = a.shape[0]
    # self-similarity is excluded from the degree so isolated nodes are visible
    off = a - np.diag(np.diag(a))
    deg = off.sum(axis=1)
    isolated = deg <= 1e-12
    dinv = np.where(isolated, 0.0, 1.0 / np.sqrt(np.where(isolated, 1.0, deg)))
    lap = np.eye(n) - dinv[:, None] * off * dinv[None, :]
    w, v = np.linalg.eigh(0.5 * (lap + lap.T))
    k = min(k_embed, n)
    x = v[:, :k].copy()
    for j in range(k):
        i = int(np.argmax(np.abs(x[:, j])))
        if x[i, j] < 0:
            x[:, j] = -x[:, j]
    norms = np.linalg.norm(x, axis=1)
    nz = norms > 1e-300
    x[nz] /= norms[nz, None]
    return Embedding(x, w[:k], isolated)


@dataclass
class FuzzyClusters:
    membership: np.ndarray
    centers: np.ndarray
    fuzzifier: float
    objective: list[float] = field(default_factory=list)
    iterations: int = 0
    degenerate: list[int] = field(default_factory=list)

    @property
    def labels(self) -> np.ndarray:
        # argmax returns the lowest index on ties
        return np.argmax(self.membership, axis=1)

    @property
    def n_clusters(self) -> int:
        return self.membership.shape[1]

    def entropy(self) -> float:
        """Mean membership entropy (natural log) over points."""
        u = np.clip(self.membership, 1e-300, 1.0)
        return float(np.mean(-np.sum(self.membership * np.log(u), axis=1)))


def _kmeanspp(x: np.ndarray, c: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = [x[int(rng.integers(n))]]
    for _ in range(1, c):
        d2 = np.min(((x[:, None, :] - np.array(centers)[None]) ** 2).sum(-1), axis=1)
        tot = d2.sum()
        if tot <= 0:
            centers.append(x[int(rng.integers(n))])
        else:
            centers.append(x[int(rng.choice(n, p=d2 / tot))])
    return np.array(centers)


def _memberships(x: np.ndarray, centers: np.ndarray, m: float) -> np.ndarray:
    d = np.sqrt(((x[:, None, :] - centers[None]) ** 2).sum(-1))
    u = np.empty_like(d)
    zero = d <= 1e-14
    for i in range(x.shape[0]):
        if zero[i].any():
            u[i] = zero[i] / zero[i].sum()
        else:
            r = (d[i][:, None] / d[i][None, :]) ** (2.0 / (m - 1.0))
            u[i] = 1.0 / r.sum(axis=1)
    return u / u.sum(axis=1, keepdims=True)


def _objective(x, centers, u, m) -> float:
    d2 = ((x[:, None, :] - centers[None]) ** 2).sum(-1)
    return float(np.sum(u ** m * d2))


def fuzzy_cmeans(embedding, c: int = 3, fuzzifier: float = 2.0, seed: int = 0,
                 tol: float = 1e-6, max_iter: int = 300) -> FuzzyClusters:
    """Fuzzy C-means with k-means++ seeding from ``numpy.random.default_rng(seed)``."""
    if c < 2:
        raise ValueError("need at least two clusters")
    if fuzzifier <= 1:
        raise ValueError("fuzzifier must exceed 1")
    x = np.asarray(embedding.coords if isinstance(embedding, Embedding) else embedding, dtype=float)
    rng = np.random.default_rng(seed)
    centers = _kmeanspp(x, c, rng)
    u = _memberships(x, centers, fuzzifier)
    hist = [_objective(x, centers, u, fuzzifier)]
    it = 0
    for it in range(1, max_iter + 1):
        um = u ** fuzzifier
        centers = (um.T @ x) / np.maximum(um.sum(axis=0), 1e-300)[:, None]
        u_new = _memberships(x, centers, fuzzifier)
        hist.append(_objective(x, centers, u_new, fuzzifier))
        delta = np.max(np.abs(u_new - u))
        u = u_new
        if delta < tol:
            break
    degenerate = [j for j in range(c) if np.all(u[:, j] < 1e-6)]
    if degenerate:
        warnings.warn(f"fuzzy C-means produced empty clusters {degenerate}", RuntimeWarning)
    return FuzzyClusters(u, centers, fuzzifier, hist, it, degenerate)


@dataclass(frozen=True)
class SpectralMeasure:
    angles: np.ndarray
    density: np.ndarray
    smoothing: float
    moment_count: int
    c0: float
    truncated_at: int | None = None

    @property
    def mass(self) -> float:
        # periodic trapezoid on the uniform grid
        return float(self.density.sum() * (2 * np.pi / self.angles.size))

    def peak_angle(self, positive: bool = True) -> float:
        mask = self.angles >= 0 if positive else np.ones(self.angles.size, bool)
        i = int(np.argmax(np.where(mask, self.density, -np.inf)))
        return float(self.angles[i])


def angle_grid(n: int = 2048) -> np.ndarray:
    return -np.pi + 2 * np.pi * np.arange(n) / n


def spectral_measure(coeffs, k, g, epsilon: float = 0.05, moment_count: int = 200,
                     angles: np.ndarray | None = None) -> SpectralMeasure:
    """Poisson-smoothed density from moments ``c_j = v^H G K^j v``."""
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if moment_count < 1:
        raise ValueError("moment_count must be >= 1")
    v = np.asarray(coeffs, dtype=np.complex128).ravel()
    kk = np.asarray(getattr(k, "k", k), dtype=np.complex128)
    g = np.asarray(g, dtype=np.complex128)
    th = angle_grid() if angles is None else np.asarray(angles, dtype=float)
    gv = g.conj().T @ v  # so that c_j = (G^H v)^H K^j v
    c = np.zeros(moment_count + 1, dtype=np.complex128)
    w = v.copy()
    truncated = None
    # null-Gram vectors have c_0 at rounding level, so the growth scale is floored
    floor = np.finfo(float).eps * float(np.linalg.norm(g, 2)) * float(np.vdot(v, v).real)
    scale = max(abs(np.vdot(gv, v)), floor, 1e-300)
    for j in range(moment_count + 1):
        if j:
            w = kk @ w
        cj = np.vdot(gv, w)
        if j and (not np.isfinite(cj) or abs(cj) > 1e6 * scale):
            truncated = j - 1
            warnings.warn(f"moment growth: truncated at j = {truncated}", RuntimeWarning)
            break
        c[j] = cj
    jmax = moment_count if truncated is None else truncated
    js = np.arange(1, jmax + 1)
    damp = (1 - epsilon) ** js
    series = c[0].real + 2 * np.real((damp * c[1:jmax + 1])[None, :] * np.exp(-1j * np.outer(th, js))).sum(axis=1)
    dens = np.maximum(series / (2 * np.pi), 0.0)
    return SpectralMeasure(th, dens, epsilon, jmax, float(c[0].real), truncated)


@dataclass(frozen=True)
class Reconstruction:
    components: np.ndarray  # (c, M)
    total: np.ndarray
    ridge: bool


def reconstruct(signal, snap: SnapshotMatrices, clusters: FuzzyClusters,
                fam: PseudoeigenFamily, labels: np.ndarray | None = None) -> Reconstruction:
    """Joint weighted least-squares fit of ``signal`` on all evaluated members, summed per cluster.

    Each member contributes the real and imaginary parts of ``psi_x @ coeffs``.
    A rank-deficient design falls back to a ridge solution whose penalty on
    each member is its residual ``1/amplification``, so among equally good
    fits the one carried by the most accurate pseudoeigenfunctions is chosen.
    """
    s = np.asarray(signal, dtype=float).ravel()
    m = snap.psi_x.shape[0]
    if s.size != m:
        raise ValueError(f"signal length {s.size} != snapshot rows {m}")
    lab = clusters.labels if labels is None else np.asarray(labels)
    evals = snap.psi_x @ fam.coeffs  # (M, n)
    design = np.hstack([evals.real, evals.imag])
    sw = np.sqrt(snap.weights)
    a = design * sw[:, None]
    b = s * sw
    sv = np.linalg.svd(a, compute_uv=False)
    ridge = bool(sv[-1] <= 1e-10 * sv[0])
    if ridge:
        resid = np.array([1.0 / mb.amplification if np.isfinite(mb.amplification) else 0.0
                          for mb in fam.members])
        resid = np.maximum(resid, 1e-300)
        inv_pen2 = np.tile(1.0 / resid ** 2, 2)
        inv_pen2 /= inv_pen2.max()
        # minimize ||P coef|| subject to the fit: coef = P^-2 A^T (A P^-2 A^T + lam I)^-1 b
        ap = a * inv_pen2[None, :]
        gram = a @ ap.T
        lam = 1e-10 * max(np.trace(gram) / m, 1e-300)
        coef = ap.T @ np.linalg.solve(gram + lam * np.eye(m), b)
    else:
        coef = np.linalg.lstsq(a, b, rcond=None)[0]
    n = evals.shape[1]
    parts = design * coef[None, :]
    member_fit = parts[:, :n] + parts[:, n:]
    comps = np.zeros((clusters.n_clusters, m))
    for j in range(clusters.n_clusters):
        comps[j] = member_fit[:, lab == j].sum(axis=1)
    return Reconstruction(comps, member_fit.sum(axis=1), ridge)


def cluster_report(emb: Embedding, fc: FuzzyClusters, points) -> str:
    pts = np.asarray(points)
    rec = {
        "memberships": fc.membership.tolist(),
        "labels": fc.labels.tolist(),
        "embedding": emb.coords.tolist(),
        "z": [[float(z.real), float(z.imag)] for z in pts],
        "fuzzifier": fc.fuzzifier,
        "iterations": fc.iterations,
        "entropy": fc.entropy(),
        "degenerate_clusters": fc.degenerate,
    }
    return json.dumps(rec, sort_keys=True)
