"""Time the compiled and numpy kernels on the same workloads.

    python benchmarks/bench_backends.py [--paths N] [--repeat R]

Each row runs identical path indices on both backends and checks that the
step counts agree before reporting throughput.
"""

import argparse
import time

import numpy as np

from exitmc import Annulus, Ball, EulerMaruyama, Integrand, SimParams, WalkOnSpheres, backend
from exitmc.simulate import run_paths

C0 = (0.0, 0.0, 0.0)


def cases():
    shell = Annulus(C0, 1.0, 2.0)
    yield "EM exit, unit ball, h=1e-3", Ball(C0, 1.0), [0, 0, 0], \
        SimParams(scheme=EulerMaruyama(1e-3)), None
    yield "EM occupation, shell, h=1e-3", shell, [1.5, 0, 0], \
        SimParams(scheme=EulerMaruyama(1e-3)), Integrand(mask=Annulus(C0, 1.2, 1.8))
    yield "EM u^p source, shell, h=1e-3", shell, [1.5, 0, 0], \
        SimParams(scheme=EulerMaruyama(1e-3)), _field_source(shell)
    yield "walk on spheres, shell", shell, [1.5, 0, 0], \
        SimParams(scheme=WalkOnSpheres(1e-4)), None


def _field_source(shell):
    from exitmc.solver import Field, radial_nodes
    nodes = radial_nodes(shell, 16)
    vals = np.sin(np.linspace(0, np.pi, 16))
    return Integrand(field=Field(shell, nodes, vals, interp="radial"), power=1.5)


def timed(domain, x, params, n, ig, name, repeat):
    best, batch = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        batch = run_paths(domain, x, params, n, integrand=ig, workers=1, backend_name=name)
        best = min(best, time.perf_counter() - t0)
    return best, batch


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if "compiled" not in backend.available():
        raise SystemExit("compiled extension not built; nothing to compare")
    print(f"{'workload':34s} {'compiled s':>11s} {'python s':>10s} {'speedup':>8s}  match")
    for label, dom, x, params, ig in cases():
        tc, bc = timed(dom, x, params, args.paths, ig, "compiled", args.repeat)
        tp, bp = timed(dom, x, params, args.paths, ig, "python", args.repeat)
        same = np.array_equal(bc.steps, bp.steps)
        print(f"{label:34s} {tc:11.3f} {tp:10.3f} {tp / tc:7.1f}x  {same}")


if __name__ == "__main__":
    main()
