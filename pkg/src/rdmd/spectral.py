"""Contour-integral spectral projections, eigenvalue means and residual bounds.

Projections use the trapezoid rule on a circle, which is exact for the
Laurent terms ``(z - c)^k`` with ``|k| < n_points`` and hence spectrally
accurate for the resolvent of a matrix.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg as sla

from . import numerics
from .dictionary import GramSet
from .edmd import KoopmanMatrix
from .resolvent import ResolventEvaluator, direct_resolvent, smw_resolvent

MULTIPLICITY_TOL = 0.1
COLLISION_REL = 1e-6


class ContourCollision(numerics.NumericFailure):
    def __init__(self, msg: str, eigenvalues):
        super().__init__(msg)
        self.eigenvalues = list(eigenvalues)


class InconsistencyError(numerics.NumericFailure):
    pass


class DegenerateObservable(ValueError):
    pass


@dataclass(frozen=True)
class Contour:
    center: complex
    radius: float
    quadrature_points: int = 64

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("contour radius must be positive")
        if self.quadrature_points < 8:
            raise ValueError("contour needs at least 8 quadrature points")

    def nodes(self) -> np.ndarray:
        n = self.quadrature_points
        return self.center + self.radius * np.exp(2j * np.pi * np.arange(n) / n)

    def inside(self, z) -> np.ndarray:
        return np.abs(np.asarray(z) - self.center) < self.radius

    def as_dict(self) -> dict:
        c = complex(self.center)
        return {"center": [c.real, c.imag], "radius": self.radius,
                "quadrature_points": self.quadrature_points}


@dataclass(frozen=True)
class SpectralProjection:
    p: np.ndarray
    contour: Contour
    trace_value: complex
    multiplicity: int


@dataclass(frozen=True)
class EigMeanResult:
    enclosed_eigs: np.ndarray
    mean: complex | None
    contour: Contour

    @property
    def count(self) -> int:
        return int(self.enclosed_eigs.size)


@dataclass(frozen=True)
class ResidualBound:
    """Desk-scale surrogate of the residual bound (zero-padded nested dictionaries)."""

    eta: float
    reference_dim: int
    target_dim: int
    lambda_ref: complex
    lambda_mean: complex
    contour: Contour
    multiplicity: int

    @property
    def error(self) -> float:
        return abs(self.lambda_ref - self.lambda_mean)

    @property
    def ratio(self) -> float:
        return self.error / self.eta if self.eta > 0 else (0.0 if self.error == 0 else np.inf)

    def to_record(self) -> dict:
        return {
            "contour": self.contour.as_dict(),
            "multiplicity": self.multiplicity,
            "lambda_ref": [self.lambda_ref.real, self.lambda_ref.imag],
            "lambda_mean": [self.lambda_mean.real, self.lambda_mean.imag],
            "eta": self.eta,
            "ratio": self.ratio,
            "reference_dim": self.reference_dim,
            "target_dim": self.target_dim,
            "kind": "zero-padded nested-dictionary surrogate",
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)


def pairwise_sum(terms: list[np.ndarray]) -> np.ndarray:
    """Tree reduction with a fixed association order."""
    terms = list(terms)
    while len(terms) > 1:
        nxt = [terms[i] + terms[i + 1] for i in range(0, len(terms) - 1, 2)]
        if len(terms) % 2:
            nxt.append(terms[-1])
        terms = nxt
    return terms[0]


def _check_collision(eigs: np.ndarray, c: Contour) -> None:
    d = np.abs(np.abs(eigs - c.center) - c.radius)
    hit = eigs[d <= COLLISION_REL * c.radius]
    if hit.size:
        raise ContourCollision(f"eigenvalues on contour |z - {c.center}| = {c.radius}: {hit}", hit)


def contour_projection(ev: ResolventEvaluator, c: Contour, route: str = "direct") -> SpectralProjection:
    """``P = (1/2 pi i) \\oint R_N(z) dz`` by the trapezoid rule."""
    _check_collision(ev.eigenvalues, c)
    res = smw_resolvent if route == "smw" else direct_resolvent
    zs = c.nodes()
    # dz = i (z - c) dtheta, so each node carries (z - c)/n
    terms = [res(ev, z) * ((z - c.center) / c.quadrature_points) for z in zs]
    p = pairwise_sum(terms)
    tr = complex(np.trace(p))
    mult = int(round(tr.real))
    if abs(tr - mult) > MULTIPLICITY_TOL:
        raise InconsistencyError(f"projection trace {tr} is not near an integer")
    return SpectralProjection(p, c, tr, mult)


def enclosed_mean(ev: ResolventEvaluator, c: Contour, check: bool = True) -> EigMeanResult:
    """Arithmetic mean of the eigenvalues strictly inside ``c``."""
    eigs = ev.eigenvalues
    _check_collision(eigs, c)
    inside = np.sort_complex(eigs[c.inside(eigs)])
    if check:
        proj = contour_projection(ev, c)
        if proj.multiplicity != inside.size:
            raise InconsistencyError(
                f"{inside.size} enclosed eigenvalues but projection multiplicity {proj.multiplicity}")
    mean = complex(np.mean(inside)) if inside.size else None
    return EigMeanResult(inside, mean, c)


def embed(k_n: np.ndarray, n_ref: int) -> np.ndarray:
    """Zero-padded coordinate injection ``Pi K_N Pi`` into ``n_ref`` dimensions."""
    n = k_n.shape[0]
    if n > n_ref:
        raise ValueError("target dimension exceeds reference dimension")
    out = np.zeros((n_ref, n_ref), dtype=np.complex128)
    out[:n, :n] = k_n
    return out


def _as_array(k) -> np.ndarray:
    return k.k if isinstance(k, KoopmanMatrix) else numerics.as_matrix(k)


def eta_residual(ref_k, k_n, c: Contour) -> ResidualBound:
    """``eta = ||(K_ref - Pi K_N Pi) P_N||`` with ``P_N`` from the embedded operator."""
    kr = _as_array(ref_k)
    kn = _as_array(k_n)
    emb = embed(kn, kr.shape[0])
    ev_n = ResolventEvaluator.from_matrix(emb)
    ev_r = ResolventEvaluator.from_matrix(kr)
    proj = contour_projection(ev_n, c)
    eta = numerics.spectral_norm((kr - emb) @ proj.p)
    mean_ref = enclosed_mean(ev_r, c)
    mean_n = enclosed_mean(ev_n, c)
    if mean_ref.mean is None or mean_n.mean is None:
        raise InconsistencyError("contour encloses no eigenvalue of one of the operators")
    return ResidualBound(eta, kr.shape[0], kn.shape[0], mean_ref.mean, mean_n.mean, c, proj.multiplicity)


def trace_identity(ref_k, k_n, c: Contour) -> tuple[complex, complex]:
    """Both sides of ``lambda - lambda_bar = tr((K - K_N)|_M) / m``.

    ``M`` is the invariant subspace of the reference operator inside ``c``,
    with spectral projection ``P = V W^H``.  The left side uses eigenvalues
    (of ``K_ref`` and of the compression ``W^H K_N V``); the right side uses
    the contour projection only.
    """
    kr = _as_array(ref_k)
    emb = embed(_as_array(k_n), kr.shape[0])
    ev_r = ResolventEvaluator.from_matrix(kr)
    proj = contour_projection(ev_r, c)
    m = proj.multiplicity
    lam = enclosed_mean(ev_r, c, check=False).mean
    f = numerics.svd(proj.p)
    v = f.left_vectors[:, :m]
    wh = v.conj().T @ proj.p
    lam_bar = complex(np.mean(numerics.eigvals(wh @ emb @ v)))
    lhs = lam - lam_bar
    rhs = complex(np.trace(proj.p @ (kr - emb))) / m
    return lhs, rhs


def _quadratic(gr: GramSet, z: complex) -> np.ndarray:
    z = complex(z)
    h = gr.a2 - z * gr.a1.conj().T - z.conjugate() * gr.a1 + abs(z) ** 2 * gr.g
    return 0.5 * (h + h.conj().T)


def resdmd_residual(gr: GramSet, z: complex, coeffs) -> float:
    """Relative residual ``||(K - z) g|| / ||g||`` of the observable ``g = Psi v``."""
    v = np.asarray(coeffs, dtype=np.complex128).ravel()
    den = float(np.vdot(v, gr.g @ v).real)
    if den <= 1e-14 * float(np.vdot(v, v).real):
        raise DegenerateObservable("observable has (numerically) zero norm")
    num = float(np.vdot(v, _quadratic(gr, z) @ v).real)
    return float(np.sqrt(max(num, 0.0) / den))


def _whitener(g: np.ndarray) -> np.ndarray:
    """Matrix ``B`` with ``B^H g B = I`` on the numerical range of ``g``."""
    try:
        l = sla.cholesky(g, lower=True)
        if np.min(np.abs(np.diag(l))) > 1e-7 * np.max(np.abs(np.diag(l))):
            return sla.solve_triangular(l, np.eye(g.shape[0]), lower=True).conj().T
    except np.linalg.LinAlgError:
        pass
    w, u = sla.eigh(g)
    keep = w > 1e-14 * w[-1]
    return u[:, keep] / np.sqrt(w[keep])


@dataclass
class ResDMD:
    """Gram-based residual minimizer; the whitening of ``g`` is shared across ``z``."""

    gr: GramSet

    def __post_init__(self):
        self.b = _whitener(self.gr.g)

    def minimize(self, z: complex) -> tuple[float, np.ndarray]:
        h = self.b.conj().T @ _quadratic(self.gr, z) @ self.b
        w, u = sla.eigh(0.5 * (h + h.conj().T), subset_by_index=[0, 0])
        v = self.b @ u[:, 0]
        return float(np.sqrt(max(w[0], 0.0))), v


def resdmd_scan(gr: GramSet, grid) -> np.ndarray:
    """Minimal residual over observables at each ``z``."""
    solver = ResDMD(gr)
    return np.array([solver.minimize(z)[0] for z in np.asarray(grid, dtype=np.complex128).ravel()])
