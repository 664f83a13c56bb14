"""Benchmark the native kernels against the pure-Python fallback.

Usage: python benchmarks/bench_kernels.py [--subdivision N] [--rays N]

Builds the default articulated body, then times multi-source Dijkstra over
its geodesic graph and batched BVH ray casting on both kernel lanes, and
verifies the lanes agree bit for bit on the benchmark inputs.
"""

import argparse
import time

import numpy as np

from tightfit import body_model as bm
from tightfit._kernels import get_lane
from tightfit.meshgeo import sample_surface


def time_call(fn, repeats=3):
    best = np.inf
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--subdivision", type=int, default=4)
    parser.add_argument("--rays", type=int, default=5000)
    parser.add_argument("--sources", type=int, default=86)
    args = parser.parse_args()

    template = bm.make_stick_model(bm.StickConfig(subdivision=args.subdivision))
    mesh = template.mesh()
    graph = mesh.geodesic_graph()
    indptr, indices, weights = graph.base_csr()
    rng = np.random.default_rng(0)
    sources = rng.choice(mesh.n_vertices, args.sources, replace=False).astype(np.int64)
    ids = np.arange(args.sources, dtype=np.int64)

    samples = sample_surface(mesh, args.rays, seed=1)
    b = mesh.bvh()
    origins = samples.positions + 0.3 * samples.normals
    dirs = -samples.normals

    try:
        native = get_lane(True)
    except ImportError:
        native = None
        print("native kernels unavailable; benchmarking fallback only")
    fallback = get_lane(False)

    print(f"mesh: {mesh.n_vertices} vertices, {mesh.n_faces} faces, "
          f"graph {graph.n_base} nodes / {len(graph.edge_u)} edges, "
          f"{args.rays} rays, {args.sources} Dijkstra sources")
    print(f"{'kernel':<22}{'fallback':>12}{'native':>12}{'speedup':>10}")

    results = {}
    for lane_name, lane in (("fallback", fallback), ("native", native)):
        if lane is None:
            continue
        t_dij, out_dij = time_call(lambda lane=lane: lane.multi_source_dijkstra(
            indptr, indices, weights, sources, ids, graph.n_base))
        t_ray, out_ray = time_call(lambda lane=lane: lane.raycast(
            b.node_min, b.node_max, b.left, b.right, b.start, b.count, b.order,
            b.tri_v0, b.tri_e1, b.tri_e2, origins, dirs, 1e-6))
        results[lane_name] = {"dijkstra": (t_dij, out_dij), "raycast": (t_ray, out_ray)}

    for kernel in ("dijkstra", "raycast"):
        tf = results["fallback"][kernel][0]
        if "native" in results:
            tn_ = results["native"][kernel][0]
            print(f"{kernel:<22}{tf:>10.3f}s{tn_:>11.3f}s{tf / tn_:>9.1f}x")
        else:
            print(f"{kernel:<22}{tf:>10.3f}s{'-':>12}{'-':>10}")

    if "native" in results:
        same = all(
            np.array_equal(a, b_)
            for kernel in ("dijkstra", "raycast")
            for a, b_ in zip(results["fallback"][kernel][1],
                             results["native"][kernel][1]))
        print(f"lane outputs identical: {same}")


if __name__ == "__main__":
    main()
