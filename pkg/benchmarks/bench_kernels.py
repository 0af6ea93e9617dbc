"""Time the block coordinate descent kernel on both backends.

Run ``python benchmarks/bench_kernels.py``.  Each case fits one lambda on a
Gram problem built from a random design; both backends receive identical
inputs and their solutions are compared.
"""
import argparse
import time

import numpy as np

from tensorlasso.kernels import backend_module
from tensorlasso.solver import GramProblem


def _run(mod, p, lam, sweeps):
    Z = np.zeros((p.k, p.d))
    R = p.C.copy()
    w = np.ones(p.k)
    t = time.perf_counter()
    used, _, _ = mod.group_bcd(p.H, p.C, Z, R, w, lam, sweeps, 1e-10, np.empty(0))
    return time.perf_counter() - t, used, Z


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--sweeps", type=int, default=200)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    backends = ["python"]
    try:
        backend_module("cython")
        backends.insert(0, "cython")
    except ImportError:
        print("compiled extension not built; timing the fallback only")
    print(f"{'k':>5} {'d':>3} " + " ".join(f"{b + ' s':>10}" for b in backends) + "   speedup  max|dZ|")
    for k, d in ((49, 4), (200, 4), (729, 1), (1500, 2)):
        D = rng.standard_normal((3 * k, k))
        Y = D[:, rng.choice(k, 6, replace=False)] @ rng.standard_normal((6, d))
        p = GramProblem(D, Y)
        lam = 0.05 * p.lambda_max()
        times, sols = [], []
        for b in backends:
            mod = backend_module(b)
            best = min(_run(mod, p, lam, args.sweeps)[0] for _ in range(args.repeat))
            times.append(best)
            sols.append(_run(mod, p, lam, args.sweeps)[2])
        diff = float(np.abs(sols[0] - sols[-1]).max())
        speed = times[-1] / times[0] if len(times) > 1 else 1.0
        print(f"{k:>5} {d:>3} " + " ".join(f"{t:>10.4f}" for t in times) + f"   {speed:7.1f}x  {diff:.1e}")


if __name__ == "__main__":
    main()
