"""Lane-equality tests: the Cython kernels must match the NumPy fallback exactly."""

import numpy as np
import pytest

from tightfit import _kernels
from tightfit._kernels import _reference
from tightfit.meshgeo import TriMesh, _build_bvh

native = pytest.importorskip("tightfit._kernels._native")


def random_csr(rng, n, m):
    u = rng.integers(0, n, m)
    v = rng.integers(0, n, m)
    w = rng.random(m) + 1e-3
    uu = np.concatenate([u, v])
    vv = np.concatenate([v, u])
    ww = np.concatenate([w, w])
    order = np.lexsort((vv, uu))
    uu, vv, ww = uu[order], vv[order], ww[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, uu + 1, 1)
    return np.cumsum(indptr), vv.astype(np.int64), ww


@pytest.mark.parametrize("seed", range(4))
def test_dijkstra_lanes_identical(seed):
    rng = np.random.default_rng(seed)
    n = rng.integers(50, 600)
    indptr, indices, weights = random_csr(rng, n, int(4 * n))
    k = int(rng.integers(1, 8))
    sources = rng.choice(n, k, replace=False).astype(np.int64)
    ids = rng.permutation(100)[:k].astype(np.int64)
    d1, o1 = _reference.multi_source_dijkstra(indptr, indices, weights, sources, ids, n)
    d2, o2 = native.multi_source_dijkstra(indptr, indices, weights, sources, ids, n)
    assert np.array_equal(d1, d2)
    assert np.array_equal(o1, o2)


def test_dijkstra_target_early_exit_matches():
    rng = np.random.default_rng(99)
    indptr, indices, weights = random_csr(rng, 300, 1200)
    for target in (0, 17, 299):
        d1, _ = _reference.multi_source_dijkstra(
            indptr, indices, weights, [5], [0], 300, target=target)
        d2, _ = native.multi_source_dijkstra(
            indptr, indices, weights, [5], [0], 300, target=target)
        assert d1[target] == d2[target]


def test_dijkstra_disconnected_inf():
    indptr = np.array([0, 1, 2, 2], dtype=np.int64)  # 0-1 edge, node 2 isolated
    indices = np.array([1, 0], dtype=np.int64)
    weights = np.array([2.5, 2.5])
    for impl in (_reference, native):
        d, o = impl.multi_source_dijkstra(indptr, indices, weights, [0], [7], 3)
        assert d[1] == 2.5 and o[1] == 7
        assert np.isinf(d[2]) and o[2] == -1


def test_dijkstra_tie_prefers_lower_source_id():
    # two sources at equal distance from the middle node
    #   0 --1.0-- 2 --1.0-- 1
    indptr = np.array([0, 1, 2, 4], dtype=np.int64)
    indices = np.array([2, 2, 0, 1], dtype=np.int64)
    weights = np.array([1.0, 1.0, 1.0, 1.0])
    for impl in (_reference, native):
        _, o = impl.multi_source_dijkstra(indptr, indices, weights,
                                          [0, 1], [9, 4], 3)
        assert o[2] == 4
        _, o = impl.multi_source_dijkstra(indptr, indices, weights,
                                          [0, 1], [4, 9], 3)
        assert o[2] == 4


def random_mesh(rng, n_pts=60, n_faces=80):
    pts = rng.random((n_pts, 3))
    faces = rng.integers(0, n_pts, (n_faces, 3))
    ok = (faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) \
        & (faces[:, 0] != faces[:, 2])
    return TriMesh(pts, faces[ok])


@pytest.mark.parametrize("seed", range(3))
def test_raycast_lanes_identical(seed):
    rng = np.random.default_rng(seed + 10)
    mesh = random_mesh(rng)
    b = _build_bvh(mesh)
    origins = rng.random((400, 3)) * 2.0 - 0.5
    dirs = rng.normal(size=(400, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    args = (b.node_min, b.node_max, b.left, b.right, b.start, b.count, b.order,
            b.tri_v0, b.tri_e1, b.tri_e2, origins, dirs, 1e-6)
    t1, f1, u1, v1 = _reference.raycast(*args)
    t2, f2, u2, v2 = native.raycast(*args)
    assert np.array_equal(t1, t2)
    assert np.array_equal(f1, f2)
    assert np.array_equal(u1, u2)
    assert np.array_equal(v1, v2)
    assert (f1 >= 0).any()


def test_selected_lane_reported():
    assert _kernels.lane_name() in ("native", "fallback")
    assert _kernels.get_lane(False) is _reference


def test_cross_lane_pipeline_bytes_identical(tmp_path):
    """The kernel lane must not leak into any artifact byte."""
    import json
    import os
    import subprocess
    import sys

    cfg = {"model": {"kind": "stick", "subdivision": 2}, "n_markers": 16,
           "n_inner": 500, "n_scatter": 500, "clothing": {"base_offset": 0.02}}
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps(cfg))
    for force_pure, out in (("0", "nat"), ("1", "ref")):
        env = dict(os.environ)
        env["TIGHTFIT_PURE_KERNELS"] = force_pure
        subprocess.run(
            [sys.executable, "-m", "tightfit.cli", "pipeline", "--seed", "5",
             "--config", str(cfg_path), "--out", str(tmp_path / out)],
            check=True, env=env, capture_output=True)
    for name in ("field_gt.json", "fit_result.json", "report.json", "fitted.obj"):
        assert (tmp_path / "nat" / name).read_bytes() == \
            (tmp_path / "ref" / name).read_bytes()
