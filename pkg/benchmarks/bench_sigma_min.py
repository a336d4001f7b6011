"""Compare the sigma_min scan backends: compiled kernel, pure-Python fallback, dense SVD.

Usage: python3 benchmarks/bench_sigma_min.py [--sizes 50 120 441] [--points 72] [--repeat 3]

All three compute sigma_min(zI - T) for a complex Schur factor T on a circle
of points; the script reports the best wall time of ``--repeat`` runs and the
largest relative deviation from the SVD reference.
"""
from __future__ import annotations

import argparse
import time

import numpy as np
import scipy.linalg as sla

from rdmd import kernels


def _best(fn, repeat: int) -> tuple[float, object]:
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench(n: int, points: int, repeat: int, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    k = rng.standard_normal((n, n)) / np.sqrt(n)
    t, _ = sla.schur(k.astype(np.complex128), output="complex")
    zs = 1.01 * np.exp(2j * np.pi * np.arange(points) / points)
    v0 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    eye = np.eye(n)
    t_svd, ref = _best(lambda: np.array([sla.svdvals(z * eye - t)[-1] for z in zs]), 1)
    row = {"n": n, "points": points, "svd_s": t_svd}
    backends = {"python": kernels.python_tri_sigma_min_scan}
    if kernels.compiled_tri_sigma_min_scan is not None:
        backends["compiled"] = kernels.compiled_tri_sigma_min_scan
    for name, fn in backends.items():
        secs, (vals, ok) = _best(lambda: fn(t, zs, v0, 1e-12, 80), repeat)
        row[f"{name}_s"] = secs
        row[f"{name}_maxrel"] = float(np.max(np.abs(vals - ref) / ref))
        row[f"{name}_converged"] = bool(ok.all())
    return row


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[50, 120, 441])
    p.add_argument("--points", type=int, default=72)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    print(f"default backend: {kernels.BACKEND}")
    head = f"{'n':>5} {'svd [s]':>9} {'python [s]':>11} {'compiled [s]':>13} {'speedup':>8} {'max rel dev':>12}"
    print(head)
    for n in args.sizes:
        r = bench(n, args.points, args.repeat)
        comp = r.get("compiled_s", float("nan"))
        dev = max(r["python_maxrel"], r.get("compiled_maxrel", 0.0))
        print(f"{n:>5} {r['svd_s']:>9.3f} {r['python_s']:>11.3f} {comp:>13.3f} "
              f"{r['python_s'] / comp:>8.1f} {dev:>12.1e}")


if __name__ == "__main__":
    main()
