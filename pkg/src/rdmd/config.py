"""Experiment configuration: strict JSON parsing, validation and presets.

Every section is a frozen dataclass.  Parsing rejects unknown keys and reports
the dotted field path of any offending value, so a typo in an experiment file
fails before any computation starts.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import types
import typing
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .systems import LorenzConfig, OscillatorConfig, PendulumConfig

EXPERIMENTS = ("pendulum", "lorenz", "oscillators", "synthetic")
PRESETS = ("pendulum-desk", "pendulum-paper", "lorenz-desk", "oscillators-desk", "oscillators-paper")


class ConfigError(ValueError):
    """Invalid configuration; ``path`` is the dotted location of the bad field."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}" if path else msg)
        self.path = path


@dataclass(frozen=True)
class DictionaryConfig:
    kind: str = "fourier_hermite"
    # pendulum: one Koopman matrix per dictionary size
    sizes: tuple[int, ...] = (441,)
    hyperbolic_budget: int = 16
    quadrature_order: int = 16
    delay_width: int = 200
    orthonormalize: bool = True
    rank_rtol: float = 1e-12


@dataclass(frozen=True)
class RectangleConfig:
    re_range: tuple[float, float] = (-4.0, 1.0)
    im_range: tuple[float, float] = (-4.0, 4.0)
    nx: int = 101
    ny: int = 101


@dataclass(frozen=True)
class GeneratorLineConfig:
    offsets: tuple[float, ...] = (0.01, -0.01)
    y_range: tuple[float, float] = (-3.0, 3.0)
    n_points: int = 301


@dataclass(frozen=True)
class GridConfig:
    radii: tuple[float, ...] = (1.01, 1.1, 1.5)
    n_points: int = 360
    # circle radius whose scans are thresholded into detection sets
    detect_radius: float = 1.01
    rectangle: RectangleConfig | None = None
    generator_line: GeneratorLineConfig | None = None


@dataclass(frozen=True)
class ContourConfig:
    center: tuple[float, float] = (1.0, 0.0)
    radius: float = 0.05
    quadrature_points: int = 64


@dataclass(frozen=True)
class ClusterConfig:
    z_points: int = 96
    z_radius: float = 1.01
    clusters: int = 3
    fuzzifier: float = 2.0
    k_embed: int = 3
    subspace_width: int = 1
    angle_aggregation: str = "mean_cos2"
    epsilon: float = 0.05
    moment_count: int = 200
    baseline: bool = True


@dataclass(frozen=True)
class SyntheticConfig:
    reference_dim: int = 30
    target_dim: int = 20
    isolated_eigenvalue: float = 0.9
    bulk_radius: float = 0.5
    rotation_scale: float = 0.02
    contour_radius: float = 0.1


@dataclass(frozen=True)
class ValidationConfig:
    # test hook: added to K_N on the direct route only (negative control)
    smw_perturbation: float = 0.0


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int = 0
    system: PendulumConfig | LorenzConfig | OscillatorConfig | SyntheticConfig | None = None
    dictionary: DictionaryConfig = field(default_factory=DictionaryConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    thresholds: tuple[float, ...] = (1e-8,)
    contours: tuple[ContourConfig, ...] = ()
    cluster: ClusterConfig | None = None
    validation: ValidationConfig = field(default_factory=ValidationConfig)
    lorenz_init: tuple[float, float, float] = (1.0, 1.0, 1.0)
    output_dir: str = "out"

    def to_dict(self) -> dict:
        return _to_plain(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)


SYSTEM_TYPES = {"pendulum": PendulumConfig, "lorenz": LorenzConfig,
                "oscillators": OscillatorConfig, "synthetic": SyntheticConfig}


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [_to_plain(v) for v in obj]
    return obj


def _strip_optional(tp):
    args = typing.get_args(tp)
    if typing.get_origin(tp) in (typing.Union, types.UnionType):
        non_none = [a for a in args if a is not type(None)]
        return non_none, type(None) in args
    return [tp], False


def _coerce(value, tp, path: str):
    options, nullable = _strip_optional(tp)
    if value is None:
        if nullable:
            return None
        raise ConfigError(path, "must not be null")
    if len(options) > 1:
        raise ConfigError(path, "ambiguous field type")  # resolved by the caller
    tp = options[0]
    origin = typing.get_origin(tp)
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, path)
    if origin is tuple:
        args = typing.get_args(tp)
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, "expected a list")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(v, args[0], f"{path}[{i}]") for i, v in enumerate(value))
        if len(value) != len(args):
            raise ConfigError(path, f"expected {len(args)} entries, got {len(value)}")
        return tuple(_coerce(v, a, f"{path}[{i}]") for i, (v, a) in enumerate(zip(value, args)))
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, "expected true or false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, "expected an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, "expected a number")
        if not math.isfinite(value):
            raise ConfigError(path, "must be finite")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, "expected a string")
        return value
    raise ConfigError(path, f"unsupported field type {tp!r}")


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(path, "expected an object")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}" if path else unknown[0], "unknown key")
    kwargs = {}
    for name, value in data.items():
        sub = f"{path}.{name}" if path else name
        kwargs[name] = _coerce(value, hints[name], sub)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(path, str(exc)) from None
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def _check(cond: bool, path: str, msg: str) -> None:
    if not cond:
        raise ConfigError(path, msg)


def _validate(cfg: ExperimentConfig) -> None:
    d, g = cfg.dictionary, cfg.grid
    _check(cfg.seed >= 0, "seed", "must be non-negative")
    _check(d.kind in ("fourier_hermite", "hyperbolic_hermite", "time_delay"), "dictionary.kind",
           f"unknown dictionary kind {d.kind!r}")
    _check(len(d.sizes) >= 1 and all(1 <= s <= 1271 for s in d.sizes), "dictionary.sizes",
           "sizes must lie in [1, 1271]")
    _check(d.hyperbolic_budget >= 1, "dictionary.hyperbolic_budget", "must be >= 1")
    _check(1 <= d.quadrature_order <= 64, "dictionary.quadrature_order", "must lie in [1, 64]")
    _check(d.delay_width >= 1, "dictionary.delay_width", "must be >= 1")
    _check(0 < d.rank_rtol < 1, "dictionary.rank_rtol", "must lie in (0, 1)")
    _check(all(r > 0 for r in g.radii), "grid.radii", "radii must be positive")
    _check(g.n_points >= 4, "grid.n_points", "must be >= 4")
    _check(g.detect_radius > 0, "grid.detect_radius", "must be positive")
    if g.rectangle is not None:
        _check(g.rectangle.nx >= 2, "grid.rectangle.nx", "must be >= 2")
        _check(g.rectangle.ny >= 2, "grid.rectangle.ny", "must be >= 2")
        _check(g.rectangle.re_range[0] < g.rectangle.re_range[1], "grid.rectangle.re_range", "must be increasing")
        _check(g.rectangle.im_range[0] < g.rectangle.im_range[1], "grid.rectangle.im_range", "must be increasing")
    if g.generator_line is not None:
        _check(g.generator_line.n_points >= 2, "grid.generator_line.n_points", "must be >= 2")
        _check(g.generator_line.y_range[0] < g.generator_line.y_range[1], "grid.generator_line.y_range",
               "must be increasing")
    _check(all(t > 0 for t in cfg.thresholds), "thresholds", "thresholds must be positive")
    for i, c in enumerate(cfg.contours):
        _check(c.radius > 0, f"contours[{i}].radius", "must be positive")
        _check(c.quadrature_points >= 8, f"contours[{i}].quadrature_points", "must be >= 8")
    if cfg.cluster is not None:
        c = cfg.cluster
        _check(c.z_points >= 4, "cluster.z_points", "must be >= 4")
        _check(c.z_radius > 0, "cluster.z_radius", "must be positive")
        _check(c.clusters >= 2, "cluster.clusters", "must be >= 2")
        _check(c.fuzzifier > 1, "cluster.fuzzifier", "must be > 1")
        _check(c.k_embed >= 1, "cluster.k_embed", "must be >= 1")
        _check(c.subspace_width >= 1, "cluster.subspace_width", "must be >= 1")
        _check(c.angle_aggregation in ("mean_cos2", "min_cos"), "cluster.angle_aggregation",
               "must be mean_cos2 or min_cos")
        _check(0 < c.epsilon < 1, "cluster.epsilon", "must lie in (0, 1)")
        _check(c.moment_count >= 1, "cluster.moment_count", "must be >= 1")
    if cfg.experiment == "oscillators":
        _check(cfg.cluster is not None, "cluster", "oscillator experiments need a cluster section")
        n = cfg.system.n_samples
        _check(n > d.delay_width + 1, "dictionary.delay_width", "must be smaller than the signal length - 1")
    if cfg.experiment == "synthetic":
        s = cfg.system
        _check(1 <= s.target_dim < s.reference_dim, "system.target_dim", "must lie in [1, reference_dim)")
        _check(s.contour_radius > 0, "system.contour_radius", "must be positive")


def parse_config(data: dict, source: str = "") -> ExperimentConfig:
    """Build a validated :class:`ExperimentConfig` from decoded JSON."""
    if not isinstance(data, dict):
        raise ConfigError("", "configuration must be a JSON object")
    exp = data.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError("experiment", f"must be one of {', '.join(EXPERIMENTS)}")
    body = dict(data)
    system = body.pop("system", {})
    sys_cfg = _build(SYSTEM_TYPES[exp], system, "system")
    body.pop("experiment")
    hints = typing.get_type_hints(ExperimentConfig)
    names = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"experiment", "system"}
    unknown = sorted(set(body) - names)
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    kwargs = {k: _coerce(v, hints[k], k) for k, v in body.items()}
    cfg = ExperimentConfig(experiment=exp, system=sys_cfg, **kwargs)
    _validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON in {path}: {exc}") from None
    return parse_config(data, str(path))


def load_preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("rdmd").joinpath("presets", f"{name}.json").read_text(encoding="utf-8")
    return parse_config(json.loads(text), name)
