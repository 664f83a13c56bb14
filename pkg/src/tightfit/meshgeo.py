"""Triangle-mesh geometry: sampling, normals, ray casting, graph geodesics.

Geodesic distances use Dijkstra on the mesh graph augmented with edge
midpoints; query points attach to the six nodes of their triangle (and to
other query points sharing that triangle). The metric therefore slightly
overestimates true surface distance but is deterministic and symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ValidationError

_AREA_EPS = 1e-14
_RAY_T_MIN = 1e-6


@dataclass(frozen=True)
class SurfaceSample:
    """A point on a mesh surface: triangle index, barycentric, position, normal."""

    face: int
    bary: np.ndarray
    position: np.ndarray
    normal: np.ndarray


class SurfaceSampleSet:
    """Struct-of-arrays collection of surface samples."""

    def __init__(self, faces, bary, positions, normals):
        self.faces = np.asarray(faces, dtype=np.int64)
        self.bary = np.asarray(bary, dtype=np.float64)
        self.positions = np.asarray(positions, dtype=np.float64)
        self.normals = np.asarray(normals, dtype=np.float64)
        n = len(self.faces)
        if not (self.bary.shape == (n, 3) and self.positions.shape == (n, 3)
                and self.normals.shape == (n, 3)):
            raise ValidationError("inconsistent sample array shapes")

    def __len__(self):
        return len(self.faces)

    def __getitem__(self, i) -> SurfaceSample:
        return SurfaceSample(int(self.faces[i]), self.bary[i].copy(),
                             self.positions[i].copy(), self.normals[i].copy())

    @classmethod
    def from_samples(cls, samples):
        return cls(np.array([s.face for s in samples]),
                   np.array([s.bary for s in samples]),
                   np.array([s.position for s in samples]),
                   np.array([s.normal for s in samples]))


class TriMesh:
    """Immutable triangle mesh. Zero-area faces are dropped on ingest."""

    def __init__(self, vertices, faces):
        vertices = np.asarray(vertices, dtype=np.float64)
        faces = np.asarray(faces, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise ValidationError(f"vertices must be (V, 3), got {vertices.shape}")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise ValidationError(f"faces must be (F, 3), got {faces.shape}")
        if not np.all(np.isfinite(vertices)):
            raise ValidationError("non-finite vertex coordinates")
        if faces.size and (faces.min() < 0 or faces.max() >= len(vertices)):
            raise ValidationError("face index out of range")
        if faces.size:
            cross = np.cross(vertices[faces[:, 1]] - vertices[faces[:, 0]],
                             vertices[faces[:, 2]] - vertices[faces[:, 0]])
            area2 = np.linalg.norm(cross, axis=1)
            keep = area2 > 2.0 * _AREA_EPS
            faces = faces[keep]
        self.vertices = vertices
        self.vertices.setflags(write=False)
        self.faces = faces
        self.faces.setflags(write=False)
        self._cache = {}

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    def _cached(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    @property
    def face_normals(self):
        def build():
            cross = np.cross(self.vertices[self.faces[:, 1]] - self.vertices[self.faces[:, 0]],
                             self.vertices[self.faces[:, 2]] - self.vertices[self.faces[:, 0]])
            norms = np.linalg.norm(cross, axis=1, keepdims=True)
            return cross / norms
        return self._cached("face_normals", build)

    @property
    def face_areas(self):
        def build():
            cross = np.cross(self.vertices[self.faces[:, 1]] - self.vertices[self.faces[:, 0]],
                             self.vertices[self.faces[:, 2]] - self.vertices[self.faces[:, 0]])
            return 0.5 * np.linalg.norm(cross, axis=1)
        return self._cached("face_areas", build)

    @property
    def vertex_normals(self):
        """Angle-weighted vertex normals (normalized)."""
        def build():
            acc = np.zeros_like(self.vertices)
            fn = self.face_normals
            v = self.vertices
            f = self.faces
            for corner in range(3):
                a = v[f[:, corner]]
                b = v[f[:, (corner + 1) % 3]]
                c = v[f[:, (corner + 2) % 3]]
                e1 = b - a
                e2 = c - a
                cosang = np.einsum("ij,ij->i", e1, e2) / (
                    np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1))
                ang = np.arccos(np.clip(cosang, -1.0, 1.0))
                np.add.at(acc, f[:, corner], fn * ang[:, None])
            norms = np.linalg.norm(acc, axis=1, keepdims=True)
            norms[norms == 0.0] = 1.0
            return acc / norms
        return self._cached("vertex_normals", build)

    @property
    def surface_centroid(self):
        """Area-weighted centroid of the surface."""
        def build():
            fc = self.vertices[self.faces].mean(axis=1)
            a = self.face_areas
            return (fc * a[:, None]).sum(axis=0) / a.sum()
        return self._cached("surface_centroid", build)

    def bvh(self):
        return self._cached("bvh", lambda: _build_bvh(self))

    def geodesic_graph(self):
        return self._cached("geograph", lambda: _GeodesicGraph(self))

    def transformed(self, rotation=None, translation=None):
        """New mesh with vertices rigidly moved; topology shared."""
        v = self.vertices
        if rotation is not None:
            v = v @ np.asarray(rotation, dtype=np.float64).T
        if translation is not None:
            v = v + np.asarray(translation, dtype=np.float64)
        return TriMesh(v, self.faces)


# ---------------------------------------------------------------------------
# sampling

def sample_surface(mesh: TriMesh, n, seed) -> SurfaceSampleSet:
    """Area-weighted uniform surface samples, deterministic under seed.

    Normals are barycentric interpolations of angle-weighted vertex normals,
    renormalized per sample.
    """
    if mesh.n_faces == 0:
        raise ValidationError("cannot sample an empty mesh")
    if n < 1:
        raise ValidationError(f"sample count must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    areas = mesh.face_areas
    cum = np.cumsum(areas)
    cum /= cum[-1]
    faces = np.searchsorted(cum, rng.random(n), side="right")
    faces = np.minimum(faces, mesh.n_faces - 1).astype(np.int64)
    r1 = rng.random(n)
    r2 = rng.random(n)
    s1 = np.sqrt(r1)
    bary = np.stack([1.0 - s1, s1 * (1.0 - r2), s1 * r2], axis=1)
    tri = mesh.vertices[mesh.faces[faces]]
    positions = np.einsum("nk,nkj->nj", bary, tri)
    vn = mesh.vertex_normals[mesh.faces[faces]]
    normals = np.einsum("nk,nkj->nj", bary, vn)
    lens = np.linalg.norm(normals, axis=1, keepdims=True)
    degenerate = lens[:, 0] < 1e-12
    if degenerate.any():
        normals[degenerate] = mesh.face_normals[faces[degenerate]]
        lens = np.linalg.norm(normals, axis=1, keepdims=True)
    normals = normals / lens
    return SurfaceSampleSet(faces, bary, positions, normals)


def sample_at(mesh: TriMesh, face, bary) -> SurfaceSample:
    """Build a SurfaceSample at an explicit (face, barycentric) location."""
    face = int(face)
    if not 0 <= face < mesh.n_faces:
        raise ValidationError(f"face index {face} out of range")
    bary = np.asarray(bary, dtype=np.float64)
    if bary.shape != (3,) or bary.min() < -1e-9 or abs(bary.sum() - 1.0) > 1e-9:
        raise ValidationError("barycentric coordinates must be >= 0 and sum to 1")
    tri = mesh.vertices[mesh.faces[face]]
    position = bary @ tri
    normal = bary @ mesh.vertex_normals[mesh.faces[face]]
    n = np.linalg.norm(normal)
    normal = mesh.face_normals[face] if n < 1e-12 else normal / n
    return SurfaceSample(face, bary, position, normal)


# ---------------------------------------------------------------------------
# BVH + ray casting

class _BVH:
    __slots__ = ("node_min", "node_max", "left", "right", "start", "count",
                 "order", "tri_v0", "tri_e1", "tri_e2")


def _build_bvh(mesh: TriMesh, leaf_size=4) -> _BVH:
    """Median-split AABB tree over face centroids; fully deterministic."""
    f = mesh.faces
    v = mesh.vertices
    centroids = v[f].mean(axis=1)
    tri_min = v[f].min(axis=1)
    tri_max = v[f].max(axis=1)

    node_min, node_max = [], []
    left, right, start, count = [], [], [], []
    order = []

    def build(face_ids):
        idx = len(left)
        node_min.append(tri_min[face_ids].min(axis=0))
        node_max.append(tri_max[face_ids].max(axis=0))
        left.append(-1)
        right.append(-1)
        start.append(-1)
        count.append(0)
        if len(face_ids) <= leaf_size:
            start[idx] = len(order)
            count[idx] = len(face_ids)
            order.extend(face_ids.tolist())
            return idx
        c = centroids[face_ids]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        perm = np.argsort(c[:, axis], kind="stable")
        mid = len(face_ids) // 2
        left[idx] = build(face_ids[perm[:mid]])
        right[idx] = build(face_ids[perm[mid:]])
        return idx

    import sys
    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, 10000))
    try:
        build(np.arange(mesh.n_faces, dtype=np.int64))
    finally:
        sys.setrecursionlimit(old_limit)

    bvh = _BVH()
    bvh.node_min = np.asarray(node_min)
    bvh.node_max = np.asarray(node_max)
    bvh.left = np.asarray(left, dtype=np.int64)
    bvh.right = np.asarray(right, dtype=np.int64)
    bvh.start = np.asarray(start, dtype=np.int64)
    bvh.count = np.asarray(count, dtype=np.int64)
    bvh.order = np.asarray(order, dtype=np.int64)
    bvh.tri_v0 = np.ascontiguousarray(v[f[:, 0]])
    bvh.tri_e1 = np.ascontiguousarray(v[f[:, 1]] - v[f[:, 0]])
    bvh.tri_e2 = np.ascontiguousarray(v[f[:, 2]] - v[f[:, 0]])
    return bvh


def ray_cast(mesh: TriMesh, origins, directions):
    """Batched nearest-hit query. Directions are normalized internally.

    Returns ``(t, face, points)``; misses hold ``t=inf``, ``face=-1``.
    """
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    lens = np.linalg.norm(directions, axis=1, keepdims=True)
    if np.any(lens == 0.0):
        raise ValidationError("ray direction must be nonzero")
    directions = directions / lens
    b = mesh.bvh()
    t, face, _, _ = _kernels.raycast(
        b.node_min, b.node_max, b.left, b.right, b.start, b.count, b.order,
        b.tri_v0, b.tri_e1, b.tri_e2, origins, directions, _RAY_T_MIN)
    t_safe = np.where(np.isfinite(t), t, 0.0)
    points = origins + t_safe[:, None] * directions
    points[face < 0] = np.nan
    return t, face, points


def ray_intersect(mesh: TriMesh, origin, direction):
    """Nearest intersection of one ray, or None on a miss."""
    t, face, points = ray_cast(mesh, origin, direction)
    if face[0] < 0:
        return None
    return points[0], int(face[0]), float(t[0])


# ---------------------------------------------------------------------------
# geodesics

class _GeodesicGraph:
    """Vertex + edge-midpoint graph of a mesh, CSR-ready."""

    def __init__(self, mesh: TriMesh):
        v = mesh.vertices
        f = mesh.faces
        nv = len(v)

        pairs = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        pairs = np.sort(pairs, axis=1)
        edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        ne = len(edges)
        mid_id = inverse.reshape(3, -1).T + nv  # per face: mids of (ab, bc, ca)

        self.mesh = mesh
        self.n_base = nv + ne
        self.node_pos = np.concatenate([v, 0.5 * (v[edges[:, 0]] + v[edges[:, 1]])])
        # six graph nodes per face: corners a, b, c then mids ab, bc, ca
        self.face_nodes = np.concatenate([f, mid_id], axis=1)

        six = self.face_nodes
        combos = [(i, j) for i in range(6) for j in range(i + 1, 6)]
        uu = np.concatenate([six[:, i] for i, _ in combos])
        vv = np.concatenate([six[:, j] for _, j in combos])
        pair_arr = np.stack([np.minimum(uu, vv), np.maximum(uu, vv)], axis=1)
        pair_arr = np.unique(pair_arr, axis=0)
        w = np.linalg.norm(self.node_pos[pair_arr[:, 0]] - self.node_pos[pair_arr[:, 1]], axis=1)
        self.edge_u = pair_arr[:, 0]
        self.edge_v = pair_arr[:, 1]
        self.edge_w = w
        self._base_csr = None

    def base_csr(self):
        if self._base_csr is None:
            self._base_csr = _to_csr(self.edge_u, self.edge_v, self.edge_w,
                                     self.n_base)
        return self._base_csr

    def augmented(self, faces, barys):
        """CSR of base graph plus one node per (face, bary) query.

        Query nodes attach to the six nodes of their face and to other query
        nodes on the same face. Returns (indptr, indices, weights, n_nodes,
        query_node_ids).
        """
        faces = np.asarray(faces, dtype=np.int64)
        barys = np.asarray(barys, dtype=np.float64)
        nq = len(faces)
        mesh = self.mesh
        tri = mesh.vertices[mesh.faces[faces]]
        qpos = np.einsum("nk,nkj->nj", barys, tri)
        qid = self.n_base + np.arange(nq, dtype=np.int64)

        anchors = self.face_nodes[faces]            # (nq, 6)
        au = np.repeat(qid, 6)
        av = anchors.reshape(-1)
        aw = np.linalg.norm(np.repeat(qpos, 6, axis=0) - self.node_pos[av], axis=1)

        # query-query links within a shared face
        qq_u, qq_v, qq_w = [], [], []
        order = np.argsort(faces, kind="stable")
        sorted_faces = faces[order]
        boundaries = np.flatnonzero(np.diff(sorted_faces)) + 1
        for group in np.split(order, boundaries):
            if len(group) < 2:
                continue
            gi = np.repeat(group, len(group))
            gj = np.tile(group, len(group))
            keep = gi < gj
            gi, gj = gi[keep], gj[keep]
            qq_u.append(qid[gi])
            qq_v.append(qid[gj])
            qq_w.append(np.linalg.norm(qpos[gi] - qpos[gj], axis=1))

        u = np.concatenate([self.edge_u, au] + qq_u)
        v = np.concatenate([self.edge_v, av] + qq_v)
        w = np.concatenate([self.edge_w, aw] + qq_w)
        indptr, indices, weights = _to_csr(u, v, w, self.n_base + nq)
        return indptr, indices, weights, self.n_base + nq, qid


def _to_csr(u, v, w, n_nodes):
    uu = np.concatenate([u, v])
    vv = np.concatenate([v, u])
    ww = np.concatenate([w, w])
    order = np.lexsort((vv, uu))
    uu, vv, ww = uu[order], vv[order], ww[order]
    indptr = np.zeros(n_nodes + 1, dtype=np.int64)
    np.add.at(indptr, uu + 1, 1)
    return np.cumsum(indptr), vv.astype(np.int64), ww


def _sample_key(s: SurfaceSample):
    return (s.face, s.bary[0], s.bary[1], s.bary[2])


def geodesic_distance(mesh: TriMesh, a: SurfaceSample, b: SurfaceSample):
    """Graph-geodesic distance between two surface samples.

    Symmetric by construction: the source endpoint is chosen canonically.
    Disconnected pairs return ``inf``.
    """
    if _sample_key(a) == _sample_key(b):
        return 0.0
    if _sample_key(b) < _sample_key(a):
        a, b = b, a
    g = mesh.geodesic_graph()
    indptr, indices, weights, n, qid = g.augmented(
        [a.face, b.face], [a.bary, b.bary])
    dist, _ = _kernels.multi_source_dijkstra(
        indptr, indices, weights, qid[:1], np.zeros(1, dtype=np.int64), n,
        target=int(qid[1]))
    return float(dist[qid[1]])


def geodesic_nearest(mesh: TriMesh, query: SurfaceSample, targets: SurfaceSampleSet):
    """Index and distance of the geodesically nearest target (ties: lowest index)."""
    if len(targets) == 0:
        raise ValidationError("targets must be nonempty")
    g = mesh.geodesic_graph()
    faces = np.concatenate([[query.face], targets.faces])
    barys = np.concatenate([[query.bary], targets.bary])
    indptr, indices, weights, n, qid = g.augmented(faces, barys)
    dist, _ = _kernels.multi_source_dijkstra(
        indptr, indices, weights, qid[:1], np.zeros(1, dtype=np.int64), n)
    d = dist[qid[1:]]
    if not np.any(np.isfinite(d)):
        raise ValidationError("no target reachable from query")
    best = int(np.argmin(d))  # argmin returns the first (lowest) index on ties
    return best, float(d[best])


def geodesic_nearest_sources(mesh: TriMesh, queries: SurfaceSampleSet,
                             sources: SurfaceSampleSet):
    """For every query, the nearest source index and distance (multi-source).

    Equivalent to per-query ``geodesic_nearest`` with lowest-index
    tie-breaking, but runs one Dijkstra sweep for all queries.
    """
    g = mesh.geodesic_graph()
    nq = len(queries)
    ns = len(sources)
    faces = np.concatenate([queries.faces, sources.faces])
    barys = np.concatenate([queries.bary, sources.bary])
    indptr, indices, weights, n, qid = g.augmented(faces, barys)
    dist, origin = _kernels.multi_source_dijkstra(
        indptr, indices, weights, qid[nq:], np.arange(ns, dtype=np.int64), n)
    return origin[qid[:nq]].copy(), dist[qid[:nq]].copy()


def vertex_geodesics(mesh: TriMesh, source_vertices, source_ids=None):
    """Multi-source vertex-to-vertex geodesic field on the base graph.

    Returns (dist, origin) over all graph nodes; the first ``n_vertices``
    entries correspond to mesh vertices.
    """
    g = mesh.geodesic_graph()
    indptr, indices, weights = g.base_csr()
    source_vertices = np.asarray(source_vertices, dtype=np.int64)
    if source_ids is None:
        source_ids = np.arange(len(source_vertices), dtype=np.int64)
    dist, origin = _kernels.multi_source_dijkstra(
        indptr, indices, weights, source_vertices, source_ids, g.n_base)
    return dist, origin


# ---------------------------------------------------------------------------
# point-to-surface distance

def _point_triangle_closest(points, a, b, c):
    """Closest point on triangle (a, b, c) per query point (vectorized)."""
    ab = b - a
    ac = c - a
    ap = points - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = points - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = points - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    result = np.empty_like(points)
    done = np.zeros(len(points), dtype=bool)

    m = (d1 <= 0) & (d2 <= 0)
    result[m] = a[m]
    done |= m
    m = ~done & (d3 >= 0) & (d4 <= d3)
    result[m] = b[m]
    done |= m
    vc = d1 * d4 - d3 * d2
    m = ~done & (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    t = np.divide(d1, d1 - d3, out=np.zeros_like(d1), where=(d1 - d3) != 0)
    result[m] = a[m] + t[m, None] * ab[m]
    done |= m
    m = ~done & (d6 >= 0) & (d5 <= d6)
    result[m] = c[m]
    done |= m
    vb = d5 * d2 - d1 * d6
    m = ~done & (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    t = np.divide(d2, d2 - d6, out=np.zeros_like(d2), where=(d2 - d6) != 0)
    result[m] = a[m] + t[m, None] * ac[m]
    done |= m
    va = d3 * d6 - d5 * d4
    m = ~done & (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)
    denom = (d4 - d3) + (d5 - d6)
    t = np.divide(d4 - d3, denom, out=np.zeros_like(denom), where=denom != 0)
    result[m] = b[m] + t[m, None] * (c[m] - b[m])
    done |= m
    m = ~done
    denom = va + vb + vc
    vsafe = np.divide(vb, denom, out=np.zeros_like(denom), where=denom != 0)
    wsafe = np.divide(vc, denom, out=np.zeros_like(denom), where=denom != 0)
    result[m] = a[m] + vsafe[m, None] * ab[m] + wsafe[m, None] * ac[m]
    return result


def point_to_surface(mesh: TriMesh, points):
    """Exact nearest surface point per query: (distance, face, closest point).

    Candidate faces come from a KD-tree over face centroids. A candidate set
    is provably sufficient when the best exact distance found is at most the
    distance to the farthest candidate centroid minus the largest face
    circumradius; the rare remaining queries are re-run with a ball query.
    """
    from scipy.spatial import cKDTree

    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n = len(points)
    f = mesh.faces
    v = mesh.vertices
    centroids = v[f].mean(axis=1)
    r_max = np.linalg.norm(v[f] - centroids[:, None, :], axis=2).max()
    tree = mesh._cached("face_centroid_tree", lambda: cKDTree(centroids))

    k0 = min(16, mesh.n_faces)
    d0, idx0 = tree.query(points, k=k0)
    if k0 == 1:
        d0 = d0[:, None]
        idx0 = idx0[:, None]
    idx0 = idx0.astype(np.int64)

    flat = idx0.reshape(-1)
    p_rep = np.repeat(points, k0, axis=0)
    cp = _point_triangle_closest(p_rep, v[f[flat, 0]], v[f[flat, 1]], v[f[flat, 2]])
    d = np.linalg.norm(cp - p_rep, axis=1).reshape(n, k0)

    best_d = d.min(axis=1)
    tie = d == best_d[:, None]
    face_grid = np.where(tie, idx0, np.iinfo(np.int64).max)
    best_face = face_grid.min(axis=1)
    pick = np.argmax(face_grid == best_face[:, None], axis=1)
    best_point = cp.reshape(n, k0, 3)[np.arange(n), pick]

    # widen where pruning is not provably safe
    unsafe = np.flatnonzero(best_d > d0[:, -1] - r_max)
    if k0 == mesh.n_faces:
        unsafe = np.empty(0, dtype=np.int64)
    for i in unsafe:
        fl = np.asarray(tree.query_ball_point(points[i], best_d[i] + r_max + 1e-12),
                        dtype=np.int64)
        p = np.repeat(points[i][None, :], len(fl), axis=0)
        cpi = _point_triangle_closest(p, v[f[fl, 0]], v[f[fl, 1]], v[f[fl, 2]])
        di = np.linalg.norm(cpi - points[i], axis=1)
        j = int(np.argmin(di))
        better = di[j] < best_d[i] or (di[j] == best_d[i] and fl[j] < best_face[i])
        if better:
            best_d[i] = di[j]
            best_face[i] = fl[j]
            best_point[i] = cpi[j]
    return best_d, best_face, best_point


# ---------------------------------------------------------------------------
# OBJ I/O

def read_obj(path) -> TriMesh:
    """Read vertices and triangular faces; every other record is ignored."""
    vertices = []
    faces = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise ValidationError(f"malformed vertex line: {line.strip()!r}")
                vertices.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                ids = [int(p.split("/")[0]) for p in parts[1:]]
                if len(ids) != 3:
                    raise ValidationError("only triangular faces are supported")
                faces.append([i - 1 if i > 0 else len(vertices) + i for i in ids])
    if not vertices:
        raise ValidationError(f"no vertices in {path}")
    return TriMesh(np.asarray(vertices), np.asarray(faces, dtype=np.int64))


def write_obj(path, mesh: TriMesh):
    """Write v/f records only; floats at fixed 9-digit precision; atomic."""
    import os

    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        for x, y, z in mesh.vertices:
            fh.write(f"v {x:.9f} {y:.9f} {z:.9f}\n")
        for a, b, c in mesh.faces:
            fh.write(f"f {a + 1} {b + 1} {c + 1}\n")
    os.replace(tmp, path)
