"""Command-line runner: ``rdmd <verb> [--config PATH | --preset NAME] [--seed N] [--out DIR] [--threads N]``.

Exit codes: 0 success, 2 configuration error, 3 numeric failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, dictionary, pipelines, plotting, resolvent, systems
from .config import (PRESETS, ConfigError, ExperimentConfig, RectangleConfig, SyntheticConfig, load_config,
                     load_preset)
from .numerics import NumericFailure

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
VERBS = ("run", "validate", "simulate", "scan", "detect", "bound", "cluster", "plot")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rdmd", description="Resolvent-based Koopman spectral analysis")
    p.add_argument("--version", action="version", version=f"rdmd {__version__}")
    sub = p.add_subparsers(dest="verb", required=True)
    for verb in VERBS:
        s = sub.add_parser(verb)
        s.add_argument("--config", type=Path, help="experiment JSON file")
        s.add_argument("--preset", choices=PRESETS, help="bundled experiment preset")
        s.add_argument("--seed", type=int, help="override the configured seed")
        s.add_argument("--out", type=Path, help="override the output directory")
        s.add_argument("--threads", type=int, default=1, help="worker threads for scans and similarity")
        if verb in ("detect", "plot"):
            s.add_argument("--input", type=Path, help="existing scan CSV (re(z),im(z),inv_norm)")
        if verb == "detect":
            s.add_argument("--threshold", type=float, action="append",
                           help="threshold (repeatable); defaults to the configured list")
    return p


def _load(args) -> ExperimentConfig:
    if args.config is not None and args.preset is not None:
        raise ConfigError("", "use either --config or --preset, not both")
    if args.config is not None:
        cfg = load_config(args.config)
    elif args.preset is not None:
        cfg = load_preset(args.preset)
    else:
        raise ConfigError("", "one of --config or --preset is required")
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("seed", "must be non-negative")
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = dataclasses.replace(cfg, output_dir=str(args.out))
    if args.threads < 1:
        raise ConfigError("threads", "must be >= 1")
    return cfg


def _require(cfg: ExperimentConfig, kinds: tuple[str, ...], verb: str) -> None:
    if cfg.experiment not in kinds:
        raise ConfigError("experiment", f"verb {verb!r} needs one of {', '.join(kinds)}")


def _finish(w: pipelines.ArtifactWriter, cfg: ExperimentConfig) -> pipelines.RunManifest:
    m = pipelines.RunManifest(cfg.digest(), list(w.entries), dict(w.times))
    (w.root / "manifest.json").write_text(m.to_json() + "\n", encoding="utf-8")
    return m


def _read_grid(path: Path) -> resolvent.PseudospectrumGrid:
    try:
        return resolvent.PseudospectrumGrid.from_csv(path)
    except (ValueError, IndexError) as exc:
        raise ConfigError("input", f"cannot parse scan CSV {path}: {exc}") from None


def _cmd_run(cfg, args):
    return pipelines.run(cfg, threads=args.threads)


def _cmd_validate(cfg, args):
    report = pipelines.validation_report(cfg)
    w = pipelines.ArtifactWriter(cfg.output_dir)
    w.text("validation.json", json.dumps(report, sort_keys=True, indent=2) + "\n")
    for r in report:
        print(f"{'PASS' if r['passed'] else 'FAIL'} {r['suite']} residual={r['residual']}")
    return _finish(w, cfg)


def _cmd_simulate(cfg, args):
    _require(cfg, ("pendulum", "lorenz", "oscillators"), "simulate")
    w = pipelines.ArtifactWriter(cfg.output_dir)
    tr = w.stage("simulate", lambda: {
        "pendulum": pipelines.pendulum_trajectory,
        "lorenz": lambda c: systems.simulate_lorenz(c.system, c.lorenz_init, c.seed),
        "oscillators": pipelines.oscillator_trajectory,
    }[cfg.experiment](cfg))
    tr.to_csv(w.record("trajectory.csv"))
    w.done("trajectory.csv")
    return _finish(w, cfg)


def _cmd_scan(cfg, args):
    _require(cfg, ("pendulum", "lorenz"), "scan")
    w = pipelines.ArtifactWriter(cfg.output_dir)
    if cfg.experiment == "pendulum":
        res = w.stage("compute", lambda: pipelines.pendulum_results(
            dataclasses.replace(cfg, thresholds=()), args.threads))
        w.stage("write", lambda: pipelines.write_pendulum_artifacts(res, w))
    else:
        if cfg.grid.rectangle is None:
            raise ConfigError("grid.rectangle", "Lorenz scans need a rectangle")
        res = w.stage("compute", lambda: pipelines.lorenz_results(cfg, args.threads))
        w.stage("write", lambda: pipelines.write_lorenz_artifacts(res, w))
    return _finish(w, cfg)


def _cmd_detect(cfg, args):
    w = pipelines.ArtifactWriter(cfg.output_dir)
    thresholds = tuple(args.threshold) if args.threshold else cfg.thresholds
    if not thresholds or any(t <= 0 for t in thresholds):
        raise ConfigError("thresholds", "need at least one positive threshold")
    if args.input is not None:
        grid = _read_grid(args.input)
        for t in thresholds:
            name = f"detect_t{t:g}.csv"
            resolvent.detect(grid, t).to_csv(w.record(name))
            w.done(name)
        return _finish(w, cfg)
    _require(cfg, ("pendulum",), "detect")
    res = w.stage("compute", lambda: pipelines.pendulum_results(
        dataclasses.replace(cfg, thresholds=thresholds, grid=dataclasses.replace(
            cfg.grid, radii=(cfg.grid.detect_radius,), generator_line=None)), args.threads))
    for (n, t), det in res.detections.items():
        name = f"detect_N{n}_t{t:g}.csv"
        det.to_csv(w.record(name))
        w.done(name)
    return _finish(w, cfg)


def _cmd_bound(cfg, args):
    w = pipelines.ArtifactWriter(cfg.output_dir)
    if cfg.experiment == "synthetic":
        w.stage("bound", lambda: pipelines.write_synthetic_artifacts(cfg, w))
        return _finish(w, cfg)
    _require(cfg, ("pendulum", "lorenz"), "bound")
    if not cfg.contours:
        raise ConfigError("contours", "bound needs at least one contour")
    if cfg.experiment == "pendulum":
        tr = pipelines.pendulum_trajectory(cfg)
        snap = dictionary.build_snapshots(tr, dictionary.pendulum_basis(cfg.dictionary.sizes[0]))
        ev = w.stage("compute", lambda: pipelines.build_bundle(snap, cfg).evaluator)
    else:
        lcfg = dataclasses.replace(cfg, grid=dataclasses.replace(
            cfg.grid, rectangle=RectangleConfig(nx=2, ny=2)))
        ev = w.stage("compute", lambda: pipelines.lorenz_results(lcfg).bundle.evaluator)
    recs = w.stage("bound", lambda: pipelines.contour_records(ev, cfg))
    w.text("contours.json", json.dumps(recs, sort_keys=True))
    return _finish(w, cfg)


def _cmd_cluster(cfg, args):
    _require(cfg, ("oscillators",), "cluster")
    w = pipelines.ArtifactWriter(cfg.output_dir)
    res = w.stage("compute", lambda: pipelines.oscillator_results(cfg, args.threads))
    w.stage("write", lambda: pipelines.write_oscillator_artifacts(res, cfg, w))
    return _finish(w, cfg)


def _cmd_plot(cfg, args):
    if args.input is None:
        raise ConfigError("input", "plot needs --input <scan CSV>")
    grid = _read_grid(args.input)
    w = pipelines.ArtifactWriter(cfg.output_dir)
    re_u = np.unique(grid.points.real)
    im_u = np.unique(grid.points.imag)
    name = args.input.stem + ".svg"
    if re_u.size * im_u.size == grid.points.size and re_u.size > 1 and im_u.size > 1:
        # row-major rectangle: rows over the imaginary axis
        vals = grid.inv_norms.reshape(im_u.size, re_u.size)
        svg = plotting.heatmap_svg(vals, (re_u[0], re_u[-1]), (im_u[0], im_u[-1]), title=args.input.stem)
    else:
        svg = plotting.scatter_svg(grid.points.real, grid.points.imag, values=grid.inv_norms,
                                   title=args.input.stem, xlabel="Re z", ylabel="Im z")
    w.text(name, svg)
    return _finish(w, cfg)


COMMANDS = {"run": _cmd_run, "validate": _cmd_validate, "simulate": _cmd_simulate, "scan": _cmd_scan,
            "detect": _cmd_detect, "bound": _cmd_bound, "cluster": _cmd_cluster, "plot": _cmd_plot}


def _plot_config(args) -> ExperimentConfig:
    """``plot``, ``validate`` and file-based ``detect`` work without an experiment definition."""
    out = str(args.out) if args.out is not None else "out"
    return ExperimentConfig("synthetic", 0, SyntheticConfig(), output_dir=out)


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        needs_cfg = not (args.verb == "plot" or (args.verb == "detect" and args.input is not None
                                                  and args.config is None and args.preset is None))
        if args.verb == "validate" and args.config is None and args.preset is None:
            needs_cfg = False
        cfg = _load(args) if needs_cfg else _plot_config(args)
        manifest = COMMANDS[args.verb](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except pipelines.StageError as exc:
        print(f"error in stage {exc.stage}: {exc.cause}", file=sys.stderr)
        if exc.artifacts:
            print(f"completed artifacts: {', '.join(a['name'] for a in exc.artifacts)}", file=sys.stderr)
        if isinstance(exc.cause, OSError):
            return EXIT_IO
        if isinstance(exc.cause, ConfigError):
            return EXIT_CONFIG
        return EXIT_NUMERIC
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {len(manifest.artifacts)} artifacts to {cfg.output_dir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
