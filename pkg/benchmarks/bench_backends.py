#!/usr/bin/env python3
"""Compare the compiled and pure-Python shortest-path kernels.

Runs the full DL sweep on node graphs from a phantom frame with both
backends, checks they return identical paths, and reports timing.

    python benchmarks/bench_backends.py [--size 600x800] [--repeats 5]
"""

import argparse
import importlib
import time

import numpy as np

from echopath import _dijkstra_py, pathfind
from echopath.cli import mc_params
from echopath.nodegraph import build_nodes
from echopath.phantom import PhantomSpec, generate_phantom
from echopath.sequence import _prepare_polar

try:
    from echopath import _dijkstra_cy
except ImportError:
    _dijkstra_cy = None


def sweep_with_kernel(kernel, graph, uips, params):
    old = pathfind._kernel
    pathfind._kernel = kernel
    try:
        t0 = time.perf_counter()
        out = pathfind.dl_sweep(graph, uips, params)
        elapsed = time.perf_counter() - t0
    finally:
        pathfind._kernel = old
    return out, elapsed


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", default="384x352")
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    h, w = (int(v) for v in args.size.split("x"))
    spacing = 0.4 * 384 / h

    spec = PhantomSpec(n_frames=1, cycle_fraction=0.0, target_cnr=5.0,
                       image_size=(h, w), pixel_spacing=spacing)
    seq, truth = generate_phantom(spec)
    params = mc_params()
    uips = truth.uips.entry(0)
    polar = _prepare_polar(seq.frames[0], uips, params)
    graph = build_nodes(polar, uips, params)
    print(f"frame {h}x{w}: {graph.n_nodes} nodes "
          f"(pre-prune {graph.pre_prune_count})")

    kernels = [("python", _dijkstra_py)]
    if _dijkstra_cy is not None:
        kernels.append(("cython", _dijkstra_cy))

    results = {}
    for name, kernel in kernels:
        times = []
        for _ in range(args.repeats):
            out, elapsed = sweep_with_kernel(kernel, graph, uips, params)
            times.append(elapsed)
        results[name] = (out, min(times))
        print(f"{name:>7}: best of {args.repeats} DL sweeps "
              f"(14 runs): {min(times) * 1000:.1f} ms")

    if len(results) == 2:
        py_out = results["python"][0]
        cy_out = results["cython"][0]
        for half in ("left", "right"):
            for p1, p2 in zip(py_out[half], cy_out[half]):
                assert p1.node_ids.tolist() == p2.node_ids.tolist(), "path mismatch"
                assert p1.total_cost == p2.total_cost, "cost mismatch"
        speedup = results["python"][1] / results["cython"][1]
        print(f"backends agree bit-for-bit; compiled speedup x{speedup:.1f}")


if __name__ == "__main__":
    main()
