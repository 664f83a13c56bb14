"""Ground-truth tightness fields, training losses, and the noisy oracle.

A tightness field attaches to every scattered scan point a vector to its
corresponding inner body point, split into direction and magnitude, plus a
marker label (geodesic-closest marker of the inner point) and a confidence
that decays exponentially with the inner point's geodesic distance to that
marker.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import meshgeo
from .body_model import MarkerSet
from .errors import ValidationError
from .meshgeo import SurfaceSampleSet, TriMesh

DEFAULT_LAMBDA = 50.0
DEFAULT_GEO_THRESHOLD = 0.01
DEFAULT_N_INNER = 5000
DEFAULT_N_SCATTER = 5000


@dataclass
class TightnessField:
    """Per-point direction, magnitude, marker label, and confidence."""

    directions: np.ndarray    # (N, 3) unit
    magnitudes: np.ndarray    # (N,), >= 0
    labels: np.ndarray        # (N,) in [0, K)
    confidences: np.ndarray   # (N,) in [0, 1]
    n_markers: int

    def __post_init__(self):
        self.directions = np.asarray(self.directions, dtype=np.float64)
        self.magnitudes = np.asarray(self.magnitudes, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.confidences = np.asarray(self.confidences, dtype=np.float64)
        n = len(self.magnitudes)
        if self.directions.shape != (n, 3):
            raise ValidationError("directions must be (N, 3)")
        if self.labels.shape != (n,) or self.confidences.shape != (n,):
            raise ValidationError("field arrays must share length N")
        norms = np.linalg.norm(self.directions, axis=1)
        if n and np.abs(norms - 1.0).max() > 1e-9:
            raise ValidationError("directions must be unit length within 1e-9")
        if n and self.magnitudes.min() < 0:
            raise ValidationError("magnitudes must be nonnegative")
        if n and (self.confidences.min() < 0 or self.confidences.max() > 1):
            raise ValidationError("confidences must lie in [0, 1]")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.n_markers):
            raise ValidationError("labels must lie in [0, K)")

    def __len__(self):
        return len(self.magnitudes)

    def vectors(self):
        return self.directions * self.magnitudes[:, None]


@dataclass
class CorrespondenceMap:
    """Scattered outer points mapped to inner body points.

    ``anchor_index`` is -1 where the Euclidean fallback served the point;
    ``via_geodesic`` flags anchor inheritance.
    """

    scatter: SurfaceSampleSet         # scattered points on the outer surface
    inner: SurfaceSampleSet           # sampled inner body points
    inner_index: np.ndarray           # (N,) index into inner per scattered point
    anchor_index: np.ndarray          # (N,) anchor id or -1
    via_geodesic: np.ndarray          # (N,) bool
    anchors: SurfaceSampleSet         # anchor points on the outer surface
    anchor_inner: np.ndarray          # (A,) index into inner per anchor

    def __post_init__(self):
        n = len(self.scatter)
        if not (len(self.inner_index) == len(self.anchor_index)
                == len(self.via_geodesic) == n):
            raise ValidationError("correspondence arrays must cover every scattered point")
        if np.any(self.inner_index < 0):
            raise ValidationError("every scattered point must map to an inner point")


@dataclass
class NoiseConfig:
    """Oracle noise: direction tilt, relative magnitude, label flips, confidence."""

    angle_sigma: float = 0.0        # radians
    magnitude_sigma: float = 0.0    # relative
    label_flip_prob: float = 0.0
    confidence_sigma: float = 0.0

    def __post_init__(self):
        if min(self.angle_sigma, self.magnitude_sigma,
               self.label_flip_prob, self.confidence_sigma) < 0:
            raise ValidationError("noise parameters must be nonnegative")
        if self.label_flip_prob > 1:
            raise ValidationError("flip probability must be <= 1")

    def to_dict(self):
        return {"angle_sigma": self.angle_sigma,
                "magnitude_sigma": self.magnitude_sigma,
                "label_flip_prob": self.label_flip_prob,
                "confidence_sigma": self.confidence_sigma}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


# ---------------------------------------------------------------------------
# marker selection

def select_markers(body: TriMesh, n_markers=86, seed=0) -> MarkerSet:
    """Farthest-point sampling of marker sites under the graph geodesic metric.

    The first site is the vertex nearest the surface centroid; each next site
    maximizes the geodesic distance to the already selected set (ties broken
    by the lowest vertex index). Sites are returned as corner samples of an
    incident face.
    """
    if n_markers < 1 or n_markers > body.n_vertices:
        raise ValidationError("marker count must be in [1, n_vertices]")
    centroid = body.surface_centroid
    first = int(np.argmin(np.linalg.norm(body.vertices - centroid, axis=1)))
    selected = [first]
    dist, _ = meshgeo.vertex_geodesics(body, [first])
    if not np.all(np.isfinite(dist[:body.n_vertices])):
        raise ValidationError("mesh is disconnected; farthest-point sampling undefined")
    min_dist = dist[:body.n_vertices]
    for _ in range(1, n_markers):
        nxt = int(np.argmax(min_dist))
        selected.append(nxt)
        dist, _ = meshgeo.vertex_geodesics(body, [nxt])
        min_dist = np.minimum(min_dist, dist[:body.n_vertices])

    # map each selected vertex to (incident face, corner barycentric)
    faces = np.full(len(selected), -1, dtype=np.int64)
    bary = np.zeros((len(selected), 3))
    order = {v: i for i, v in enumerate(selected)}
    remaining = set(selected)
    for fi, f in enumerate(body.faces):
        for corner in range(3):
            v = int(f[corner])
            if v in remaining:
                i = order[v]
                faces[i] = fi
                bary[i, corner] = 1.0
                remaining.discard(v)
        if not remaining:
            break
    # seed reserved for future randomized layouts; FPS itself is deterministic
    _ = seed
    return MarkerSet(faces, bary)


def marker_samples(body: TriMesh, markers: MarkerSet) -> SurfaceSampleSet:
    """Evaluate marker sites on a mesh with the template's topology."""
    samples = [meshgeo.sample_at(body, f, b) for f, b in zip(markers.faces, markers.bary)]
    return SurfaceSampleSet.from_samples(samples)


def marker_neighbors(body: TriMesh, markers: MarkerSet) -> np.ndarray:
    """Geodesically nearest other marker per marker (for label-flip noise).

    One augmented graph with all sites; one single-source sweep per marker.
    Ties break toward the lowest marker index.
    """
    from . import _kernels

    sites = marker_samples(body, markers)
    k = len(sites)
    if k < 2:
        raise ValidationError("need at least two markers for adjacency")
    graph = body.geodesic_graph()
    indptr, indices, weights, n, qid = graph.augmented(sites.faces, sites.bary)
    out = np.empty(k, dtype=np.int64)
    for i in range(k):
        dist, _ = _kernels.multi_source_dijkstra(
            indptr, indices, weights, qid[i:i + 1], np.zeros(1, dtype=np.int64), n)
        d = dist[qid].copy()
        d[i] = np.inf
        if not np.isfinite(d.min()):
            raise ValidationError("marker unreachable from every other marker")
        out[i] = int(np.argmin(d))
    return out


# ---------------------------------------------------------------------------
# correspondence construction

def inner_samples(body: TriMesh, n, seed) -> SurfaceSampleSet:
    """Inner body samples of a correspondence run (seed stream 0)."""
    child = np.random.SeedSequence(seed).spawn(2)[0]
    return meshgeo.sample_surface(body, n, np.random.default_rng(child))


def scatter_samples(outer: TriMesh, n, seed) -> SurfaceSampleSet:
    """Scattered outer samples of a correspondence run (seed stream 1).

    ``cmd_fit`` re-derives the exact scan points of a stored field from the
    scan mesh and the header's (seed, n_scatter) via this function.
    """
    child = np.random.SeedSequence(seed).spawn(2)[1]
    return meshgeo.sample_surface(outer, n, np.random.default_rng(child))


def build_correspondence(body: TriMesh, outer: TriMesh, n_inner=DEFAULT_N_INNER,
                         n_scatter=DEFAULT_N_SCATTER,
                         geo_threshold=DEFAULT_GEO_THRESHOLD, seed=0):
    """Anchor-based dense correspondence from the outer surface to the body.

    Inner body samples are shot along their normals; the first outer hit
    becomes an anchor (misses are dropped). Scattered outer samples inherit
    the inner point of their geodesically nearest anchor when within
    ``geo_threshold`` on the outer surface, otherwise they take the
    Euclidean-nearest inner sample.
    """
    from scipy.spatial import cKDTree

    inner = inner_samples(body, n_inner, seed)
    scatter = scatter_samples(outer, n_scatter, seed)

    t, face, hit = meshgeo.ray_cast(outer, inner.positions, inner.normals)
    survived = np.flatnonzero(face >= 0)
    if len(survived) == 0:
        raise ValidationError("no inner point's normal ray hits the outer surface")
    anchor_inner = survived.astype(np.int64)
    # barycentric of each hit inside its outer face
    tri = outer.vertices[outer.faces[face[survived]]]
    bary = _barycentric(hit[survived], tri)
    anchor_normals = np.einsum(
        "nk,nkj->nj", bary, outer.vertex_normals[outer.faces[face[survived]]])
    lens = np.linalg.norm(anchor_normals, axis=1, keepdims=True)
    lens[lens == 0.0] = 1.0
    anchors = SurfaceSampleSet(face[survived], bary, hit[survived],
                               anchor_normals / lens)

    nearest_anchor, geo_dist = meshgeo.geodesic_nearest_sources(outer, scatter, anchors)

    n = len(scatter)
    inner_index = np.full(n, -1, dtype=np.int64)
    anchor_index = np.full(n, -1, dtype=np.int64)
    via_geodesic = np.zeros(n, dtype=bool)

    inherit = (nearest_anchor >= 0) & (geo_dist < geo_threshold)
    inner_index[inherit] = anchor_inner[nearest_anchor[inherit]]
    anchor_index[inherit] = nearest_anchor[inherit]
    via_geodesic[inherit] = True

    fallback = np.flatnonzero(~inherit)
    if len(fallback):
        tree = cKDTree(inner.positions)
        _, nearest_inner = tree.query(scatter.positions[fallback])
        inner_index[fallback] = nearest_inner

    return anchors, CorrespondenceMap(
        scatter=scatter, inner=inner, inner_index=inner_index,
        anchor_index=anchor_index, via_geodesic=via_geodesic,
        anchors=anchors, anchor_inner=anchor_inner)


def _barycentric(points, tri):
    """Barycentric coordinates of points already lying in their triangles."""
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    v0 = b - a
    v1 = c - a
    v2 = points - a
    d00 = np.einsum("ij,ij->i", v0, v0)
    d01 = np.einsum("ij,ij->i", v0, v1)
    d11 = np.einsum("ij,ij->i", v1, v1)
    d20 = np.einsum("ij,ij->i", v2, v0)
    d21 = np.einsum("ij,ij->i", v2, v1)
    denom = d00 * d11 - d01 * d01
    v = (d11 * d20 - d01 * d21) / denom
    w = (d00 * d21 - d01 * d20) / denom
    bary = np.stack([1.0 - v - w, v, w], axis=1)
    return np.clip(bary, 0.0, 1.0) / np.clip(bary, 0.0, 1.0).sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# ground-truth field

def ground_truth_field(corr: CorrespondenceMap, body: TriMesh, markers: MarkerSet,
                       rate=DEFAULT_LAMBDA) -> TightnessField:
    """Tightness field from a correspondence map.

    The vector is inner minus outer; the label is the geodesic-closest marker
    of the inner point; confidence is exp(-rate * geodesic distance to that
    marker). Zero-magnitude points take the inner surface normal as their
    direction so the field stays continuous.
    """
    if rate <= 0:
        raise ValidationError("rate parameter must be positive")
    sites = marker_samples(body, markers)
    # one Dijkstra sweep from all markers labels every sampled inner point
    label_all, dist_all = meshgeo.geodesic_nearest_sources(body, corr.inner, sites)
    if np.any(label_all < 0):
        raise ValidationError("some inner points cannot reach any marker")

    inner_pos = corr.inner.positions[corr.inner_index]
    vec = inner_pos - corr.scatter.positions
    mag = np.linalg.norm(vec, axis=1)
    dirs = np.empty_like(vec)
    nz = mag > 0
    dirs[nz] = vec[nz] / mag[nz, None]
    dirs[~nz] = corr.inner.normals[corr.inner_index[~nz]]

    labels = label_all[corr.inner_index]
    conf = np.exp(-rate * dist_all[corr.inner_index])
    return TightnessField(dirs, mag, labels, np.clip(conf, 0.0, 1.0), len(markers))


# ---------------------------------------------------------------------------
# noisy oracle (stands in for a trained predictor)

def oracle_predict(gt: TightnessField, noise: NoiseConfig, seed=0,
                   neighbors=None) -> TightnessField:
    """Perturb a ground-truth field deterministically under a seed.

    Directions tilt by ``|N(0, angle_sigma)|`` about a random axis orthogonal
    to the direction; magnitudes scale by ``1 + N(0, magnitude_sigma)``
    clamped at zero; labels flip to the geodesically adjacent marker
    (``neighbors`` from :func:`marker_neighbors`) with the given probability;
    confidences get additive Gaussian noise, clamped to [0, 1].
    """
    rng = np.random.default_rng(seed)
    n = len(gt)

    dirs = gt.directions.copy()
    if noise.angle_sigma > 0:
        angles = np.abs(rng.normal(0.0, noise.angle_sigma, n))
        raw = rng.normal(size=(n, 3))
        axes = raw - np.einsum("ij,ij->i", raw, dirs)[:, None] * dirs
        lens = np.linalg.norm(axes, axis=1, keepdims=True)
        # a tangent axis is almost surely nonzero; regenerate any degenerate row
        bad = np.flatnonzero(lens[:, 0] < 1e-12)
        for i in bad:
            while lens[i, 0] < 1e-12:
                raw_i = rng.normal(size=3)
                axes[i] = raw_i - (raw_i @ dirs[i]) * dirs[i]
                lens[i, 0] = np.linalg.norm(axes[i])
        axes /= lens
        cos = np.cos(angles)[:, None]
        sin = np.sin(angles)[:, None]
        dirs = cos * dirs + sin * np.cross(axes, dirs)
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

    mags = gt.magnitudes.copy()
    if noise.magnitude_sigma > 0:
        mags = np.maximum(mags * (1.0 + rng.normal(0.0, noise.magnitude_sigma, n)), 0.0)

    labels = gt.labels.copy()
    if noise.label_flip_prob > 0:
        if neighbors is None:
            raise ValidationError("label flips require a marker adjacency table")
        flip = rng.random(n) < noise.label_flip_prob
        labels[flip] = np.asarray(neighbors, dtype=np.int64)[labels[flip]]

    conf = gt.confidences.copy()
    if noise.confidence_sigma > 0:
        conf = np.clip(conf + rng.normal(0.0, noise.confidence_sigma, n), 0.0, 1.0)

    return TightnessField(dirs, mags, labels, conf, gt.n_markers)


# ---------------------------------------------------------------------------
# losses

def losses(pred: TightnessField, gt: TightnessField, label_probs,
           w_d=1.0, w_b=1.0, w_l=1.0, w_c=1.0):
    """Weighted field losses: direction, magnitude, label, confidence.

    The direction term is the mean cosine distance ``1 - cos`` (minimized at
    alignment); the label term is the mean negative log probability of the
    true label; magnitude and confidence are mean squared errors. Returns
    ``(total, per_term_dict)``.
    """
    if len(pred) != len(gt):
        raise ValidationError("fields must be aligned")
    n = len(gt)
    label_probs = np.asarray(label_probs, dtype=np.float64)
    if label_probs.shape != (n, gt.n_markers):
        raise ValidationError(f"label_probs must be (N, {gt.n_markers})")

    pn = np.linalg.norm(pred.directions, axis=1)
    gn = np.linalg.norm(gt.directions, axis=1)
    if n and (pn.min() < 1e-12 or gn.min() < 1e-12):
        raise ValidationError("zero-norm direction in cosine loss")
    # 1 - cos(u, v) == |u/|u| - v/|v||^2 / 2; exact zero at equal inputs
    diff = pred.directions / pn[:, None] - gt.directions / gn[:, None]
    l_d = float(np.mean(0.5 * np.einsum("ij,ij->i", diff, diff)))
    l_b = float(np.mean((pred.magnitudes - gt.magnitudes) ** 2))
    p_true = label_probs[np.arange(n), gt.labels]
    l_l = float(np.mean(-np.log(np.maximum(p_true, 1e-300))))
    l_c = float(np.mean((pred.confidences - gt.confidences) ** 2))
    per_term = {"direction": l_d, "magnitude": l_b, "label": l_l, "confidence": l_c}
    total = w_d * l_d + w_b * l_b + w_l * l_l + w_c * l_c
    return total, per_term


def loss_gradients(pred: TightnessField, gt: TightnessField):
    """Analytic gradients of the direction/magnitude/confidence losses.

    Returns gradients w.r.t. the predicted raw direction vectors (treated as
    free 3-vectors, matching finite differences of ``losses``), magnitudes,
    and confidences.
    """
    n = len(gt)
    d = pred.directions
    v = gt.directions
    dn = np.linalg.norm(d, axis=1)
    vn = np.linalg.norm(v, axis=1)
    if n and (dn.min() < 1e-12 or vn.min() < 1e-12):
        raise ValidationError("zero-norm direction in cosine loss")
    cos = np.einsum("ij,ij->i", d, v) / (dn * vn)
    grad_d = -(v / (dn * vn)[:, None] - (cos / dn ** 2)[:, None] * d) / n
    grad_b = 2.0 * (pred.magnitudes - gt.magnitudes) / n
    grad_c = 2.0 * (pred.confidences - gt.confidences) / n
    return grad_d, grad_b, grad_c


# ---------------------------------------------------------------------------
# field file I/O

def save_field(path, field: TightnessField, header=None):
    """Write the field JSON: parallel arrays plus a provenance header."""
    payload = {
        "header": dict(header or {}),
        "directions": field.directions.tolist(),
        "magnitudes": field.magnitudes.tolist(),
        "labels": field.labels.tolist(),
        "confidences": field.confidences.tolist(),
    }
    payload["header"]["n_markers"] = field.n_markers
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(payload, fh, sort_keys=True)
    os.replace(tmp, path)


def load_field(path):
    """Read a field JSON; returns (field, header)."""
    with open(path) as fh:
        data = json.load(fh)
    for key in ("header", "directions", "magnitudes", "labels", "confidences"):
        if key not in data:
            raise ValidationError(f"field file missing {key!r}")
    header = data["header"]
    field = TightnessField(
        np.asarray(data["directions"], dtype=np.float64),
        np.asarray(data["magnitudes"], dtype=np.float64),
        np.asarray(data["labels"], dtype=np.int64),
        np.asarray(data["confidences"], dtype=np.float64),
        int(header["n_markers"]))
    return field, header


def save_markers(path, markers: MarkerSet):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(markers.to_dict(), fh, sort_keys=True)
    os.replace(tmp, path)


def load_markers(path) -> MarkerSet:
    with open(path) as fh:
        return MarkerSet.from_dict(json.load(fh))
