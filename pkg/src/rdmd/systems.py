"""Trajectory generators for the pendulum, Lorenz and noisy-oscillator systems.

Random draws come from :class:`numpy.random.Generator` (PCG64) streams spawned
from one :class:`numpy.random.SeedSequence` per trajectory.  Each noise source
owns a fixed child stream, so switching one source off never shifts the draws
of another.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla

from .numerics import NumericFailure

# child-stream indices of the per-trajectory SeedSequence
STREAM_INIT = 0
STREAM_DYNAMICS = 1
STREAM_MEASUREMENT = 2


class DivergenceError(NumericFailure):
    pass


def _streams(seed: int) -> list[np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(3)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray
    dt: float
    seed: int
    system_tag: str
    # extra per-sample arrays (e.g. oscillator internal states)
    extras: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        s = np.asarray(self.states, dtype=float)
        if s.ndim == 1:
            s = s.reshape(-1, 1)
        if s.shape[0] < 2:
            raise ValueError("trajectory needs at least two samples")
        if not np.all(np.isfinite(s)):
            raise ValueError("trajectory has non-finite states")
        object.__setattr__(self, "states", s)

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self)) * self.dt

    def to_csv(self, path) -> None:
        """Write ``t,s0,s1,...`` rows at 17 significant digits."""
        d = self.states.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + [f"s{j}" for j in range(d)])
            for t, row in zip(self.times, self.states):
                w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in row])

    @classmethod
    def from_csv(cls, path, dt: float | None = None, seed: int = 0, system_tag: str = "csv"):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        t = data[:, 0]
        if dt is None:
            dt = float(t[1] - t[0])
        return cls(data[:, 1:], dt, seed, system_tag)


@dataclass(frozen=True)
class PendulumConfig:
    g: float = 9.8
    l: float = 1.0
    dt: float = 0.2
    steps: int = 1500
    theta0_range: tuple[float, float] = (0.0, 2 * math.pi)
    omega0_range: tuple[float, float] = (-5.0, 5.0)

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.steps < 2:
            raise ValueError("steps must be >= 2")


@dataclass(frozen=True)
class LorenzConfig:
    sigma: float = 10.0
    beta: float = 8.0 / 3.0
    rho: float = 40.0
    s: float = 0.1
    dt: float = 0.05
    steps: int = 2000
    transient: int = 500

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.steps < 2:
            raise ValueError("steps must be >= 2")


@dataclass(frozen=True)
class OscillatorConfig:
    omega1: float = 3 * math.pi / 5
    omega2: float = 6 * math.pi / 5
    zeta: float = 0.2
    sigma1: float = 0.05
    sigma2: float = 0.15
    meas_noise_std: float = 0.015
    dt: float = 0.1
    t_end: float = 190.0
    x0: tuple[float, float, float, float] = (1.0, 0.0, 1.0, 0.0)

    def __post_init__(self):
        if not 0 < self.zeta < 1:
            raise ValueError("zeta must lie in (0, 1)")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def n_samples(self) -> int:
        return int(round(self.t_end / self.dt))


def pendulum_step(theta: float, omega: float, dt: float, g: float = 9.8, l: float = 1.0):
    """One explicit (simultaneous) Euler step of theta'' = -(3g/2l) sin(theta)."""
    c = 1.5 * g / l
    return theta + dt * omega, omega - dt * c * math.sin(theta)


def simulate_pendulum(cfg: PendulumConfig, seed: int, init: tuple[float, float] | None = None) -> Trajectory:
    if init is None:
        rng = _streams(seed)[STREAM_INIT]
        theta = float(rng.uniform(*cfg.theta0_range))
        omega = float(rng.uniform(*cfg.omega0_range))
    else:
        theta, omega = map(float, init)
    out = np.empty((cfg.steps, 2))
    out[0] = theta, omega
    for k in range(1, cfg.steps):
        theta, omega = pendulum_step(theta, omega, cfg.dt, cfg.g, cfg.l)
        out[k] = theta, omega
    return Trajectory(out, cfg.dt, seed, "pendulum")


def pendulum_energy(states: np.ndarray, g: float = 9.8, l: float = 1.0) -> np.ndarray:
    s = np.asarray(states)
    return 0.5 * s[:, 1] ** 2 + 1.5 * g / l * (1.0 - np.cos(s[:, 0]))


def lorenz_rhs(x: np.ndarray, cfg: LorenzConfig) -> np.ndarray:
    return np.array([
        cfg.sigma * (x[1] - x[0]),
        x[0] * (cfg.rho - cfg.s * x[2]) - x[1],
        cfg.s * x[0] * x[1] - cfg.beta * x[2],
    ])


def rk4_step(x: np.ndarray, cfg: LorenzConfig) -> np.ndarray:
    h = cfg.dt
    k1 = lorenz_rhs(x, cfg)
    k2 = lorenz_rhs(x + 0.5 * h * k1, cfg)
    k3 = lorenz_rhs(x + 0.5 * h * k2, cfg)
    k4 = lorenz_rhs(x + h * k3, cfg)
    return x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def simulate_lorenz(cfg: LorenzConfig, init=(1.0, 1.0, 1.0), seed: int = 0,
                    transient: int | None = None) -> Trajectory:
    """Classical RK4 at step ``cfg.dt``; the first ``transient`` steps are discarded.

    ``seed`` is recorded only (the system is deterministic).
    """
    x = np.asarray(init, dtype=float)
    if x.shape != (3,):
        raise ValueError("Lorenz initial state must have dimension 3")
    skip = cfg.transient if transient is None else transient
    out = np.empty((cfg.steps, 3))
    for k in range(skip + cfg.steps):
        if k >= skip:
            out[k - skip] = x
        if k == skip + cfg.steps - 1:
            break
        x = rk4_step(x, cfg)
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > 1e8:
            raise DivergenceError(f"Lorenz trajectory diverged at step {k + 1}")
    return Trajectory(out, cfg.dt, seed, "lorenz")


def oscillator_propagator(omega: float, zeta: float, dt: float) -> np.ndarray:
    """Exact one-step flow map of x'' = -2 zeta omega x' - omega^2 x on (x, x')."""
    a = np.array([[0.0, 1.0], [-omega ** 2, -2.0 * zeta * omega]])
    return sla.expm(a * dt)


def simulate_oscillators(cfg: OscillatorConfig, seed: int, n_samples: int | None = None) -> Trajectory:
    """Two independent damped oscillators driven by thermal noise, observed as a sum.

    Each step applies the exact drift propagator and then adds the
    Euler-Maruyama velocity increment ``sigma_i * sqrt(dt) * eta``.  States are
    the scalar observation; ``extras`` holds ``x1, v1, x2, v2`` and the clean
    sum.
    """
    n = cfg.n_samples if n_samples is None else int(n_samples)
    _, dyn, meas = _streams(seed)
    props = [oscillator_propagator(w, cfg.zeta, cfg.dt) for w in (cfg.omega1, cfg.omega2)]
    sigmas = (cfg.sigma1, cfg.sigma2)
    internal = np.empty((n, 4))
    s = [np.array(cfg.x0[:2], dtype=float), np.array(cfg.x0[2:], dtype=float)]
    sq = math.sqrt(cfg.dt)
    # dynamics draws are taken for every step regardless of sigma
    eta = dyn.standard_normal((n, 2))
    for k in range(n):
        internal[k] = (*s[0], *s[1])
        for i in range(2):
            s[i] = props[i] @ s[i]
            s[i][1] += sigmas[i] * sq * eta[k, i]
    clean = internal[:, 0] + internal[:, 2]
    xi = meas.standard_normal(n) * cfg.meas_noise_std
    obs = clean + xi
    extras = {"x1": internal[:, 0], "v1": internal[:, 1], "x2": internal[:, 2],
              "v2": internal[:, 3], "clean": clean}
    return Trajectory(obs.reshape(-1, 1), cfg.dt, seed, "oscillators", extras)


def damped_cosine(t: np.ndarray, omega: float, zeta: float, x0: float = 1.0) -> np.ndarray:
    """Closed-form free response with x(0)=x0, x'(0)=0."""
    wd = omega * math.sqrt(1 - zeta ** 2)
    return x0 * np.exp(-zeta * omega * t) * (np.cos(wd * t) + zeta * omega / wd * np.sin(wd * t))


def config_dict(cfg) -> dict:
    return asdict(cfg)
