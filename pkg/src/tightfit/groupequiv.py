"""Discretized rotation group machinery.

The 60 rotational symmetries of the icosahedron discretize SO(3). Rotating a
point cloud by a group element permutes the group axis of the equivariant
descriptor; mean pooling over that axis is invariant; a weighted sum of the
group rotations projected back onto SO(3) decodes a rotation, and applying
it to a fixed seed vector decodes a direction. All of these laws are exact
(up to float rounding) and are exercised by ``cli.cmd_equivtest``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateAverageError, ValidationError

GROUP_ORDER = 60
DEFAULT_SEED_VECTOR = np.array([0.0, 0.0, 1.0])
DEFAULT_RADIUS = 0.4
DEFAULT_BINS = (4, 8)


@dataclass(frozen=True)
class RotationGroup:
    elements: np.ndarray   # (60, 3, 3)
    cayley: np.ndarray     # (60, 60) composition index table
    inverse: np.ndarray    # (60,)

    def __len__(self):
        return len(self.elements)


@dataclass(frozen=True)
class EquivFeature:
    """Point descriptor with one channel vector per group element: (N, O, C)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if v.ndim != 3 or v.shape[1] != GROUP_ORDER:
            raise ValidationError(f"equivariant feature must be (N, 60, C), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("non-finite feature values")


@dataclass(frozen=True)
class InvFeature:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if v.ndim != 2 or not np.all(np.isfinite(v)):
            raise ValidationError("invariant feature must be a finite (N, C) array")


def _axis_rotation(axis, angle):
    axis = axis / np.linalg.norm(axis)
    K = np.array([[0.0, -axis[2], axis[1]],
                  [axis[2], 0.0, -axis[0]],
                  [-axis[1], axis[0], 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def _canonical_axis(axis):
    for c in axis:
        if abs(c) > 1e-9:
            return axis if c > 0 else -axis
    raise ValueError("zero axis")


_GROUP_CACHE = None


def icosahedral_group() -> RotationGroup:
    """The 60-element icosahedral rotation group in canonical order.

    Identity first, then elements sorted by rotation angle and
    lexicographically by (sign-canonicalized) axis. Cached after first call.
    """
    global _GROUP_CACHE
    if _GROUP_CACHE is not None:
        return _GROUP_CACHE

    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1]], dtype=np.float64)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]])

    entries = []  # (angle, canonical axis, matrix)
    for v in verts:  # 12 vertex directions: 72 and 144 degree turns
        for angle in (2.0 * np.pi / 5.0, 4.0 * np.pi / 5.0):
            entries.append((angle, v, _axis_rotation(v, angle)))
    for f in faces:  # 20 face directions: 120 degree turns
        center = verts[f].sum(axis=0)
        center /= np.linalg.norm(center)
        entries.append((2.0 * np.pi / 3.0, center, _axis_rotation(center, 2.0 * np.pi / 3.0)))
    edges = set()
    for f in faces:
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            edges.add((min(a, b), max(a, b)))
    half_turn_axes = {}  # 30 edges in antipodal pairs -> 15 axes
    for a, b in sorted(edges):
        mid = verts[a] + verts[b]
        mid /= np.linalg.norm(mid)
        mid = _canonical_axis(mid)
        half_turn_axes[tuple(np.round(mid, 9))] = mid
    for mid in half_turn_axes.values():
        entries.append((np.pi, mid, _axis_rotation(mid, np.pi)))

    def sort_key(entry):
        angle, axis, _ = entry
        ax = _canonical_axis(axis)
        return (round(angle, 9),) + tuple(np.round(ax, 9))

    entries.sort(key=sort_key)
    elements = np.concatenate([np.eye(3)[None], np.stack([e[2] for e in entries])])
    if len(elements) != GROUP_ORDER:
        raise RuntimeError(f"expected 60 group elements, built {len(elements)}")

    cayley = np.empty((GROUP_ORDER, GROUP_ORDER), dtype=np.int64)
    flat = elements.reshape(GROUP_ORDER, 9)
    for i in range(GROUP_ORDER):
        prod = np.einsum("ab,jbc->jac", elements[i], elements)
        d2 = ((prod.reshape(GROUP_ORDER, 9)[:, None, :] - flat[None, :, :]) ** 2).sum(axis=2)
        nearest = d2.argmin(axis=1)
        if d2[np.arange(GROUP_ORDER), nearest].max() > 1e-18:
            raise RuntimeError("group closure violated beyond snapping tolerance")
        cayley[i] = nearest
    inverse = np.empty(GROUP_ORDER, dtype=np.int64)
    for i in range(GROUP_ORDER):
        inverse[i] = int(np.flatnonzero(cayley[i] == 0)[0])

    for arr in (elements, cayley, inverse):
        arr.setflags(write=False)
    _GROUP_CACHE = RotationGroup(elements, cayley, inverse)
    return _GROUP_CACHE


def group_permutation(group: RotationGroup, g_index):
    """Permutation induced on the group axis by rotating the input by g.

    ``perm[j]`` is the index of ``g^-1 * g_j``, computed exactly from the
    Cayley and inverse tables.
    """
    if not 0 <= g_index < len(group):
        raise ValidationError(f"group index {g_index} out of range")
    return group.cayley[group.inverse[g_index]].copy()


def equiv_descriptor(points, radius=DEFAULT_RADIUS, bins=DEFAULT_BINS,
                     group: RotationGroup | None = None) -> EquivFeature:
    """Training-free equivariant point descriptor.

    For each point, the offsets to its radius-neighbors are rotated by every
    inverse group element and binned into a radial x azimuthal histogram.
    Rotating the cloud by a group element permutes the group axis exactly.
    Isolated points yield an all-zero row.
    """
    from scipy.spatial import cKDTree

    if radius <= 0:
        raise ValidationError("radius must be positive")
    group = group or icosahedral_group()
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValidationError("points must be (N, 3)")
    n_rad, n_az = bins
    n = len(points)
    inv_elements = group.elements[group.inverse]  # row j holds g_j^-1
    values = np.zeros((n, GROUP_ORDER, n_rad * n_az))

    tree = cKDTree(points)
    pairs = tree.query_pairs(radius, output_type="ndarray")    # i < j, no self
    if len(pairs) == 0:
        return EquivFeature(values)
    # both directions of every neighbor pair
    src = np.concatenate([pairs[:, 0], pairs[:, 1]])
    dst = np.concatenate([pairs[:, 1], pairs[:, 0]])
    n_cells = n_rad * n_az
    group_offset = np.arange(GROUP_ORDER)[:, None] * n_cells
    counts = np.zeros(n * GROUP_ORDER * n_cells, dtype=np.int64)
    chunk = 200_000  # bounds the (O, P, 3) rotation intermediate
    for lo in range(0, len(src), chunk):
        s = src[lo:lo + chunk]
        offsets = points[dst[lo:lo + chunk]] - points[s]       # (P, 3)
        rotated = np.einsum("oab,pb->opa", inv_elements, offsets)
        # radial bins are rotation-invariant: compute once from raw offsets
        r = np.linalg.norm(offsets, axis=1)
        rad_bin = np.minimum((r / radius * n_rad).astype(np.int64),
                             n_rad - 1)[None, :]
        az = np.arctan2(rotated[..., 1], rotated[..., 0])
        az_bin = ((az + np.pi) / (2.0 * np.pi) * n_az).astype(np.int64) % n_az
        flat = (s[None, :] * (GROUP_ORDER * n_cells) + group_offset
                + rad_bin * n_az + az_bin)
        counts += np.bincount(flat.ravel(), minlength=len(counts))
    values[:] = counts.reshape(n, GROUP_ORDER, n_cells)
    return EquivFeature(values)


def invariant_pool(feature: EquivFeature) -> InvFeature:
    """Mean over the group axis: exactly invariant under group rotations."""
    return InvFeature(feature.values.mean(axis=1))


def average_rotation(weights, group: RotationGroup | None = None):
    """Special-orthogonal projection of the weighted sum of group rotations.

    ``A = sum_j w_j R_j`` is decomposed as ``U D V^T`` and projected to
    ``U diag(1, 1, det(UV^T)) V^T``. Raises when A is rank-deficient (two
    vanishing singular values leave the nearest rotation ambiguous).
    """
    group = group or icosahedral_group()
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    if len(weights) != len(group):
        raise ValidationError(f"need {len(group)} weights, got {len(weights)}")
    if not np.all(np.isfinite(weights)):
        raise ValidationError("weights must be finite")
    if np.all(weights == 0.0):
        raise ValidationError("weights must not be all zero")
    A = np.tensordot(weights, group.elements, axes=1)
    U, D, Vt = np.linalg.svd(A)
    if D[1] < 1e-9:
        raise DegenerateAverageError(
            f"weighted rotation sum is rank-deficient (singular values {D})")
    det = np.linalg.det(U @ Vt)
    return U @ np.diag([1.0, 1.0, det]) @ Vt


def decode_direction(rotation, seed_vector=DEFAULT_SEED_VECTOR):
    """Rotate the unit seed vector; returns a unit direction."""
    seed_vector = np.asarray(seed_vector, dtype=np.float64).reshape(3)
    if abs(np.linalg.norm(seed_vector) - 1.0) > 1e-9:
        raise ValidationError("seed vector must be unit length")
    d = np.asarray(rotation, dtype=np.float64) @ seed_vector
    return d / np.linalg.norm(d)


# ---------------------------------------------------------------------------
# fixed scoring pipeline (stand-in for the learned attention head)

def score_weights(feature: EquivFeature, sharpness=0.25) -> np.ndarray:
    """Fixed per-element scoring map from descriptor channels to weights.

    A deterministic projection followed by softplus: positive weights whose
    permutation law matches the descriptor's, which is all the decoding
    pipeline needs.
    """
    c = feature.values.shape[2]
    proj = np.cos(0.7 * np.arange(c) + 0.3)
    logits = sharpness * (feature.values @ proj)
    return np.logaddexp(0.0, logits)


def predict_directions(points, radius=DEFAULT_RADIUS, bins=DEFAULT_BINS,
                       group: RotationGroup | None = None,
                       seed_vector=DEFAULT_SEED_VECTOR):
    """Descriptor -> weights -> rotation -> direction, per point."""
    group = group or icosahedral_group()
    feature = equiv_descriptor(points, radius, bins, group)
    weights = score_weights(feature)
    out = np.empty((len(points), 3))
    for i in range(len(points)):
        out[i] = decode_direction(average_rotation(weights[i], group), seed_vector)
    return out


def dump_group_json(path, group: RotationGroup | None = None):
    """Write the 60 elements as row-major 3x3 JSON (cross-implementation dump)."""
    group = group or icosahedral_group()
    payload = [[float(x) for x in m.reshape(-1)] for m in group.elements]
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(payload, fh)
    os.replace(tmp, path)
