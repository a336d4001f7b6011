"""Observable dictionaries, quadrature rules and snapshot/Gram assembly.

Hermite factors are the physicists' polynomials normalized to be orthonormal
under the probability weight ``exp(-x**2) / sqrt(pi)``:

    h_0 = 1,  h_{k+1}(x) = sqrt(2/(k+1)) x h_k(x) - sqrt(k/(k+1)) h_{k-1}(x)
"""
from __future__ import annotations

import csv
import itertools
import math
import struct
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .systems import Trajectory

SNAP_MAGIC = b"RDMDSNAP1"
MAT_MAGIC = b"RDMDMAT1"
MAX_QUADRATURE_ROWS = 10 ** 6
MAX_GH_ORDER = 64

# candidate pool for the pendulum subsets: n in [-20, 20], k <= 30
PENDULUM_FOURIER_POOL = (-20, 20)
PENDULUM_HERMITE_POOL = 30


def hermite_table(x, order: int) -> np.ndarray:
    """Normalized Hermite values ``h_0..h_order`` at ``x``; shape ``x.shape + (order+1,)``."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (order + 1,))
    out[..., 0] = 1.0
    if order >= 1:
        out[..., 1] = math.sqrt(2.0) * x
    for k in range(1, order):
        out[..., k + 1] = (math.sqrt(2.0 / (k + 1)) * x * out[..., k]
                           - math.sqrt(k / (k + 1)) * out[..., k - 1])
    return out


@dataclass(frozen=True)
class MultiIndexSet:
    indices: tuple[tuple[int, ...], ...]
    dimension: int

    def __post_init__(self):
        if len(set(self.indices)) != len(self.indices):
            raise ValueError("duplicate multi-indices")

    def __len__(self) -> int:
        return len(self.indices)

    def as_array(self) -> np.ndarray:
        return np.array(self.indices, dtype=int).reshape(len(self.indices), self.dimension)


def hyperbolic_cross_indices(dimension: int, budget: int) -> MultiIndexSet:
    """All ``n >= 0`` with ``prod(n_j + 1) <= budget``, lexicographically sorted."""
    if dimension < 1 or budget < 1:
        raise ValueError("dimension and budget must be >= 1")
    out = []

    def rec(prefix, remaining):
        if len(prefix) == dimension:
            out.append(tuple(prefix))
            return
        for n in range(remaining):
            if n + 1 > remaining:
                break
            rec(prefix + [n], remaining // (n + 1))

    rec([], budget)
    out.sort()
    return MultiIndexSet(tuple(out), dimension)


def calibrate_budget(dimension: int, target: int, max_budget: int = 10 ** 4) -> int:
    """Smallest budget whose hyperbolic-cross set has exactly ``target`` members."""
    for b in range(1, max_budget + 1):
        n = len(hyperbolic_cross_indices(dimension, b))
        if n == target:
            return b
        if n > target:
            break
    raise ValueError(f"no budget yields exactly {target} indices in dimension {dimension}")


@dataclass(frozen=True)
class BasisSpec:
    """Dictionary description.

    ``indices`` overrides the rectangular Fourier x Hermite grid (used for the
    size-selected pendulum subsets).  ``shift``/``scale`` map a physical state
    ``x`` to the Hermite variable ``(x - shift) * scale`` for hyperbolic sets.
    """

    kind: str
    fourier_range: tuple[int, int] = (-10, 10)
    hermite_max_order: int = 20
    velocity_scale: float = 1.0 / math.sqrt(2.0)
    hyperbolic_budget: int = 16
    dimension: int = 3
    delay_width: int = 1
    indices: tuple[tuple[int, ...], ...] | None = None
    shift: tuple[float, ...] | None = None
    scale: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("fourier_hermite", "hyperbolic_hermite", "time_delay"):
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if self.fourier_range[0] > self.fourier_range[1]:
            raise ValueError("fourier_range must satisfy n_min <= n_max")
        if self.hermite_max_order < 0:
            raise ValueError("hermite_max_order must be >= 0")
        if self.delay_width < 1:
            raise ValueError("delay_width must be >= 1")

    def index_set(self) -> MultiIndexSet:
        if self.indices is not None:
            return MultiIndexSet(tuple(tuple(int(v) for v in t) for t in self.indices),
                                 len(self.indices[0]))
        if self.kind == "fourier_hermite":
            lo, hi = self.fourier_range
            idx = tuple(itertools.product(range(lo, hi + 1), range(self.hermite_max_order + 1)))
            return MultiIndexSet(idx, 2)
        if self.kind == "hyperbolic_hermite":
            return hyperbolic_cross_indices(self.dimension, self.hyperbolic_budget)
        raise ValueError("time-delay dictionaries have no index set")

    @property
    def size(self) -> int:
        if self.kind == "time_delay":
            return self.delay_width
        return len(self.index_set())


def pendulum_indices(size: int) -> tuple[tuple[int, int], ...]:
    """The ``size`` lowest-scoring (n, k) pairs under ``max(|n|/10, k/20)``.

    Ties are broken lexicographically in (n, k); the result is returned in
    lexicographic order.  ``size = 441`` is exactly n in [-10, 10], k <= 20.
    """
    lo, hi = PENDULUM_FOURIER_POOL
    pool = list(itertools.product(range(lo, hi + 1), range(PENDULUM_HERMITE_POOL + 1)))
    if not 1 <= size <= len(pool):
        raise ValueError(f"pendulum dictionary size must be in [1, {len(pool)}]")
    pool.sort(key=lambda nk: (max(abs(nk[0]) / 10.0, nk[1] / 20.0), nk[0], nk[1]))
    return tuple(sorted(pool[:size]))


def pendulum_basis(size: int = 441) -> BasisSpec:
    if size == 441:
        return BasisSpec("fourier_hermite", (-10, 10), 20)
    idx = pendulum_indices(size)
    ns = [n for n, _ in idx]
    return BasisSpec("fourier_hermite", (min(ns), max(ns)), max(k for _, k in idx), indices=idx)


def _fourier_hermite_matrix(spec: BasisSpec, states: np.ndarray) -> np.ndarray:
    idx = spec.index_set().as_array()
    theta = states[:, 0]
    ns = idx[:, 0]
    ks = idx[:, 1]
    lo = int(ns.min())
    fourier = np.exp(1j * np.outer(theta, np.arange(lo, int(ns.max()) + 1)))
    herm = hermite_table(states[:, 1] * spec.velocity_scale, int(ks.max()))
    return fourier[:, ns - lo] * herm[:, ks]


def _hyperbolic_matrix(spec: BasisSpec, states: np.ndarray) -> np.ndarray:
    idx = spec.index_set().as_array()
    d = idx.shape[1]
    if states.shape[1] != d:
        raise ValueError(f"state dimension {states.shape[1]} != dictionary dimension {d}")
    xi = states
    if spec.shift is not None:
        xi = xi - np.asarray(spec.shift)
    if spec.scale is not None:
        xi = xi * np.asarray(spec.scale)
    top = int(idx.max())
    out = np.ones((states.shape[0], idx.shape[0]))
    for j in range(d):
        h = hermite_table(xi[:, j], top)
        out *= h[:, idx[:, j]]
    return out.astype(np.complex128)


def evaluate(spec: BasisSpec, states) -> np.ndarray:
    """Dictionary matrix with one row per state."""
    s = np.asarray(states, dtype=float)
    if s.ndim == 1:
        s = s.reshape(1, -1)
    if spec.kind == "fourier_hermite":
        return _fourier_hermite_matrix(spec, s)
    if spec.kind == "hyperbolic_hermite":
        return _hyperbolic_matrix(spec, s)
    raise ValueError("time-delay dictionaries are built with time_delay_embed")


def eval_fourier_hermite(spec: BasisSpec, state) -> np.ndarray:
    """Entries ``exp(i n theta) h_k(omega * velocity_scale)``, lexicographic in (n, k)."""
    if spec.kind != "fourier_hermite":
        raise ValueError("spec.kind must be fourier_hermite")
    return _fourier_hermite_matrix(spec, np.asarray(state, dtype=float).reshape(1, 2))[0]


def gauss_hermite_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Hermite nodes and weights for the weight ``exp(-x**2)``."""
    if order < 1:
        raise ValueError("order must be >= 1")
    if order > MAX_GH_ORDER:
        raise ValueError(f"Gauss-Hermite order {order} unsupported (max {MAX_GH_ORDER})")
    x, w = np.polynomial.hermite.hermgauss(order)
    return x, w


def gauss_hermite_moment_error(order: int, degree: int) -> float:
    """Error of the order-``order`` rule on ``x**degree``, relative to ``max(1, int |x|^degree e^{-x^2})``.

    Odd moments vanish by cancellation of terms as large as the absolute
    moment, so that is the scale against which rounding is measured.
    """
    x, w = gauss_hermite_rule(order)
    exact = 0.0 if degree % 2 else math.gamma((degree + 1) / 2)
    scale = max(1.0, math.gamma((degree + 1) / 2))
    return abs(float(np.sum(w * x ** degree)) - exact) / scale


@dataclass(frozen=True)
class SnapshotMatrices:
    psi_x: np.ndarray
    psi_y: np.ndarray
    weights: np.ndarray
    dt: float

    def __post_init__(self):
        px = np.asarray(self.psi_x, dtype=np.complex128)
        py = np.asarray(self.psi_y, dtype=np.complex128)
        w = np.asarray(self.weights, dtype=float)
        if px.shape != py.shape or px.ndim != 2:
            raise ValueError(f"psi_x {px.shape} and psi_y {py.shape} must share a 2-D shape")
        if w.shape != (px.shape[0],):
            raise ValueError("weights must have one entry per row")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        if not (np.all(np.isfinite(px)) and np.all(np.isfinite(py)) and np.all(np.isfinite(w))):
            raise ValueError("snapshot matrices must be finite")
        object.__setattr__(self, "psi_x", px)
        object.__setattr__(self, "psi_y", py)
        object.__setattr__(self, "weights", w)

    @property
    def shape(self) -> tuple[int, int]:
        return self.psi_x.shape

    @property
    def sqrt_w(self) -> np.ndarray:
        return np.sqrt(self.weights)[:, None]

    def to_bytes(self) -> bytes:
        m, n = self.shape
        head = SNAP_MAGIC + struct.pack("<qqd", m, n, self.dt)
        return (head + self.psi_x.astype("<c16").tobytes()
                + self.psi_y.astype("<c16").tobytes() + self.weights.astype("<f8").tobytes())

    @classmethod
    def from_bytes(cls, buf: bytes) -> "SnapshotMatrices":
        if buf[:len(SNAP_MAGIC)] != SNAP_MAGIC:
            raise ValueError("not an RDMDSNAP1 container")
        off = len(SNAP_MAGIC)
        m, n, dt = struct.unpack_from("<qqd", buf, off)
        off += 24
        size = m * n * 16
        px = np.frombuffer(buf, "<c16", m * n, off).reshape(m, n)
        py = np.frombuffer(buf, "<c16", m * n, off + size).reshape(m, n)
        w = np.frombuffer(buf, "<f8", m, off + 2 * size)
        return cls(px.copy(), py.copy(), w.copy(), dt)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "SnapshotMatrices":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def to_csv(self, path) -> None:
        """Long-format CSV ``matrix,row,col,re,im`` plus ``weight`` rows."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["matrix", "row", "col", "re", "im"])
            for name, mat in (("psi_x", self.psi_x), ("psi_y", self.psi_y)):
                for (i, j), v in np.ndenumerate(mat):
                    w.writerow([name, i, j, f"{v.real:.17g}", f"{v.imag:.17g}"])
            for i, v in enumerate(self.weights):
                w.writerow(["weight", i, 0, f"{v:.17g}", "0"])


def matrix_to_bytes(m: np.ndarray, dt: float = 0.0) -> bytes:
    a = np.asarray(m, dtype=np.complex128)
    return MAT_MAGIC + struct.pack("<qqd", a.shape[0], a.shape[1], dt) + a.astype("<c16").tobytes()


def matrix_from_bytes(buf: bytes) -> tuple[np.ndarray, float]:
    if buf[:len(MAT_MAGIC)] != MAT_MAGIC:
        raise ValueError("not an RDMDMAT1 container")
    r, c, dt = struct.unpack_from("<qqd", buf, len(MAT_MAGIC))
    a = np.frombuffer(buf, "<c16", r * c, len(MAT_MAGIC) + 24).reshape(r, c)
    return a.copy(), dt


def matrix_to_csv(m: np.ndarray, path) -> None:
    """One row per matrix row; columns ``re0,im0,re1,im1,...``."""
    a = np.asarray(m, dtype=np.complex128)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"{p}{j}" for j in range(a.shape[1]) for p in ("re", "im")])
        for row in a:
            w.writerow([f"{x:.17g}" for v in row for x in (v.real, v.imag)])


def time_delay_embed(signal: Sequence[float], width: int, dt: float = 1.0) -> SnapshotMatrices:
    """Hankel snapshot pairs: row m is ``x[m:m+width]``, shifted by one in ``psi_y``."""
    x = np.asarray(signal, dtype=float).ravel()
    if width < 1:
        raise ValueError("width must be >= 1")
    if x.size < width + 2:
        raise ValueError(f"signal of length {x.size} too short for delay width {width}")
    m = x.size - width
    windows = np.lib.stride_tricks.sliding_window_view(x, width)
    px = windows[:m]
    py = windows[1:m + 1]
    return SnapshotMatrices(px.copy(), py.copy(), np.full(m, 1.0 / m), dt)


def build_snapshots(traj: Trajectory, spec: BasisSpec) -> SnapshotMatrices:
    """Dictionary evaluated on consecutive state pairs, uniform weights."""
    if spec.kind == "time_delay":
        return time_delay_embed(traj.states[:, 0], spec.delay_width, traj.dt)
    psi = evaluate(spec, traj.states)
    m = psi.shape[0] - 1
    return SnapshotMatrices(psi[:-1], psi[1:], np.full(m, 1.0 / m), traj.dt)


def tensor_gauss_hermite(dimension: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor-product nodes (rows) and weights normalized to sum to 1."""
    if order ** dimension > MAX_QUADRATURE_ROWS:
        raise ValueError(f"{order}^{dimension} quadrature nodes exceed the {MAX_QUADRATURE_ROWS} row guard")
    x, w = gauss_hermite_rule(order)
    w = w / math.sqrt(math.pi)
    nodes = np.array(list(itertools.product(x, repeat=dimension)))
    weights = np.prod(np.array(list(itertools.product(w, repeat=dimension))), axis=1)
    return nodes, weights / weights.sum()


def quadrature_snapshots(spec: BasisSpec, rule_order: int,
                         flowmap: Callable[[np.ndarray], np.ndarray],
                         dt: float = 1.0) -> SnapshotMatrices:
    """Snapshots at tensor Gauss-Hermite nodes.

    Nodes live in the Hermite variable; they are mapped back to physical
    states through ``shift``/``scale`` before ``flowmap`` is applied.
    """
    if spec.kind != "hyperbolic_hermite":
        raise ValueError("quadrature snapshots need a hyperbolic_hermite dictionary")
    d = spec.index_set().dimension
    xi, w = tensor_gauss_hermite(d, rule_order)
    states = xi.copy()
    if spec.scale is not None:
        states = states / np.asarray(spec.scale)
    if spec.shift is not None:
        states = states + np.asarray(spec.shift)
    images = np.array([np.asarray(flowmap(s), dtype=float) for s in states]).reshape(states.shape)
    return SnapshotMatrices(evaluate(spec, states), evaluate(spec, images), w, dt)


@dataclass(frozen=True)
class OrthonormalSnapshots:
    """Snapshots re-expressed in a weighted-orthonormal basis of the dictionary span.

    ``transform`` (N x r) maps coefficients in the new basis back to the
    original dictionary: ``psi_x @ transform == snapshots.psi_x``.
    """

    snapshots: SnapshotMatrices
    transform: np.ndarray
    singular_values: np.ndarray

    @property
    def rank(self) -> int:
        return self.transform.shape[1]


def orthonormalize(snap: SnapshotMatrices, rel_tol: float = 1e-12) -> OrthonormalSnapshots:
    """Change of basis making ``sqrt(W) psi_x`` have orthonormal columns.

    Directions with singular value below ``rel_tol * s_max`` are dropped, so
    the Galerkin matrix is only formed on the numerically resolved span and its
    spectral norm is the L2(data) operator norm.
    """
    sw = snap.sqrt_w
    u, s, vh = np.linalg.svd(sw * snap.psi_x, full_matrices=False)
    r = int(np.count_nonzero(s > rel_tol * s[0])) if s.size and s[0] > 0 else 0
    if r == 0:
        raise ValueError("snapshot matrix has numerical rank zero")
    t = vh[:r].conj().T / s[:r]
    return OrthonormalSnapshots(
        SnapshotMatrices(snap.psi_x @ t, snap.psi_y @ t, snap.weights, snap.dt), t, s)


@dataclass(frozen=True)
class GramSet:
    g: np.ndarray
    a1: np.ndarray
    a2: np.ndarray

    def __post_init__(self):
        for name in ("g", "a2"):
            m = getattr(self, name)
            if np.max(np.abs(m - m.conj().T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(m))):
                raise ValueError(f"{name} is not Hermitian")


def grams(snap: SnapshotMatrices) -> GramSet:
    """``G = X^H W X``, ``A1 = X^H W Y``, ``A2 = Y^H W Y``."""
    sx = snap.psi_x * snap.sqrt_w
    sy = snap.psi_y * snap.sqrt_w
    g = sx.conj().T @ sx
    a2 = sy.conj().T @ sy
    # enforce exact Hermitian symmetry lost to round-off
    g = 0.5 * (g + g.conj().T)
    a2 = 0.5 * (a2 + a2.conj().T)
    return GramSet(g, sx.conj().T @ sy, a2)
