"""Galerkin (EDMD) Koopman and generator matrices."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics
from .dictionary import GramSet, SnapshotMatrices, matrix_to_bytes, matrix_to_csv


@dataclass(frozen=True)
class KoopmanMatrix:
    k: np.ndarray
    source: str

    def __post_init__(self):
        a = numerics.as_matrix(self.k, "Koopman matrix")
        if a.shape[0] != a.shape[1]:
            raise ValueError("Koopman matrix must be square")
        object.__setattr__(self, "k", a)

    @property
    def dict_size(self) -> int:
        return self.k.shape[0]

    def to_bytes(self) -> bytes:
        return matrix_to_bytes(self.k)

    def to_csv(self, path) -> None:
        matrix_to_csv(self.k, path)


@dataclass(frozen=True)
class GeneratorMatrix:
    a: np.ndarray
    dt: float

    def __post_init__(self):
        m = numerics.as_matrix(self.a, "generator matrix")
        if m.shape[0] != m.shape[1]:
            raise ValueError("generator matrix must be square")
        object.__setattr__(self, "a", m)

    @property
    def dict_size(self) -> int:
        return self.a.shape[0]

    def to_bytes(self) -> bytes:
        return matrix_to_bytes(self.a, self.dt)

    def to_csv(self, path) -> None:
        matrix_to_csv(self.a, path)


def koopman_from_snapshots(snap: SnapshotMatrices, rel_tol: float = numerics.DEFAULT_PINV_RTOL) -> KoopmanMatrix:
    """``K = pinv(sqrt(W) X) sqrt(W) Y`` (equals ``pinv(X) Y`` for uniform weights)."""
    sw = snap.sqrt_w
    k = numerics.pinv(sw * snap.psi_x, rel_tol) @ (sw * snap.psi_y)
    return KoopmanMatrix(k, "pseudoinverse_route")


def koopman_from_grams(gr: GramSet, rel_tol: float = numerics.DEFAULT_PINV_RTOL) -> KoopmanMatrix:
    return KoopmanMatrix(numerics.pinv(gr.g, rel_tol) @ gr.a1, "gram_route")


def derivative_snapshots(snap: SnapshotMatrices) -> np.ndarray:
    """Finite-difference derivative data ``(Y - X) / dt``."""
    if snap.dt <= 0:
        raise ValueError("dt must be positive for generator data")
    return (snap.psi_y - snap.psi_x) / snap.dt


def generator_from_snapshots(snap: SnapshotMatrices, rel_tol: float = numerics.DEFAULT_PINV_RTOL) -> GeneratorMatrix:
    dpsi = derivative_snapshots(snap)
    sw = snap.sqrt_w
    a = numerics.pinv(sw * snap.psi_x, rel_tol) @ (sw * dpsi)
    return GeneratorMatrix(a, snap.dt)


def generator_from_koopman(k: KoopmanMatrix, dt: float) -> GeneratorMatrix:
    if dt <= 0:
        raise ValueError("dt must be positive")
    return GeneratorMatrix((k.k - np.eye(k.dict_size)) / dt, dt)
