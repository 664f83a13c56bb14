"""Parametric articulated body: blendshapes, joint regression, LBS, Jacobians.

The body is defined by a rest template plus linear shape displacements,
posed by per-joint axis-angle rotations composed along a kinematic tree and
skinned with per-vertex joint weights, then globally translated. Analytic
derivatives of surface points with respect to all parameters support the
damped Gauss-Newton marker fit.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .meshgeo import TriMesh

DEFAULT_SHAPE_DIM = 10
DEFAULT_NUM_JOINTS = 24

# parent of each joint; -1 marks the root (pelvis-first layout, 24 joints)
_DEFAULT_PARENTS = np.array(
    [-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21],
    dtype=np.int64)


@dataclass(frozen=True)
class BodyTemplate:
    """Statistical body model data. Immutable and safe to share."""

    vertices: np.ndarray            # (V, 3) rest positions, meters
    faces: np.ndarray               # (F, 3)
    shape_basis: np.ndarray         # (S, V, 3) displacement per shape coeff
    joint_regressor: np.ndarray     # (J, V) rows mapping vertices -> joints
    skinning_weights: np.ndarray    # (V, J) rows sum to 1
    parents: np.ndarray             # (J,) parent ids, root = -1
    pose_corrective_basis: np.ndarray = field(
        default_factory=lambda: np.zeros((0, 0, 3)))  # (9*(J-1), V, 3) or empty

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        f = np.asarray(self.faces, dtype=np.int64)
        sb = np.asarray(self.shape_basis, dtype=np.float64)
        jr = np.asarray(self.joint_regressor, dtype=np.float64)
        w = np.asarray(self.skinning_weights, dtype=np.float64)
        parents = np.asarray(self.parents, dtype=np.int64)
        pc = np.asarray(self.pose_corrective_basis, dtype=np.float64)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "shape_basis", sb)
        object.__setattr__(self, "joint_regressor", jr)
        object.__setattr__(self, "skinning_weights", w)
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "pose_corrective_basis", pc)

        nv = len(v)
        nj = len(parents)
        if sb.ndim != 3 or sb.shape[1:] != (nv, 3):
            raise ValidationError(f"shape_basis must be (S, {nv}, 3), got {sb.shape}")
        if jr.shape != (nj, nv):
            raise ValidationError(f"joint_regressor must be ({nj}, {nv})")
        if w.shape != (nv, nj):
            raise ValidationError(f"skinning_weights must be ({nv}, {nj})")
        if np.any(w < -1e-12):
            raise ValidationError("negative skinning weight")
        sums = w.sum(axis=1)
        if np.abs(sums - 1.0).max() > 1e-9:
            raise ValidationError("skinning weight rows must sum to 1 within 1e-9")
        if f.size and (f.min() < 0 or f.max() >= nv):
            raise ValidationError("face index out of range")
        _check_tree(parents)
        if pc.size and pc.shape[1:] != (nv, 3):
            raise ValidationError("pose_corrective_basis must be (P, V, 3)")
        if pc.size and pc.shape[0] != 9 * (nj - 1):
            raise ValidationError(
                f"pose_corrective_basis needs {9 * (nj - 1)} slabs, got {pc.shape[0]}")
        # zero-area faces are a modeling bug, not something to silently clean
        if f.size:
            cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
            if np.linalg.norm(cross, axis=1).min() <= 2e-14:
                raise ValidationError("degenerate zero-area face in template")
        for arr in (v, f, sb, jr, w, parents, pc):
            arr.setflags(write=False)
        object.__setattr__(self, "_topo", _topological_order(parents))

    @property
    def shape_dim(self):
        return self.shape_basis.shape[0]

    @property
    def n_joints(self):
        return len(self.parents)

    @property
    def n_vertices(self):
        return len(self.vertices)

    def mesh(self, vertices=None) -> TriMesh:
        return TriMesh(self.vertices if vertices is None else vertices, self.faces)


def _check_tree(parents):
    roots = np.flatnonzero(parents < 0)
    if len(roots) != 1:
        raise ValidationError(f"kinematic tree needs exactly one root, got {len(roots)}")
    n = len(parents)
    for j in range(n):
        if parents[j] >= n or parents[j] == j:
            raise ValidationError(f"invalid parent for joint {j}")
        seen = set()
        k = j
        while parents[k] >= 0:
            if k in seen:
                raise ValidationError("cycle in kinematic tree")
            seen.add(k)
            k = parents[k]


def _topological_order(parents):
    order = []
    remaining = set(range(len(parents)))
    placed = set()
    while remaining:
        progressed = False
        for j in sorted(remaining):
            p = parents[j]
            if p < 0 or p in placed:
                order.append(j)
                placed.add(j)
                remaining.discard(j)
                progressed = True
        if not progressed:
            raise ValidationError("cycle in kinematic tree")
    return np.asarray(order, dtype=np.int64)


@dataclass
class BodyParams:
    """Shape coefficients, per-joint axis-angle pose, global translation."""

    beta: np.ndarray
    theta: np.ndarray   # (J, 3)
    t: np.ndarray       # (3,)

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=np.float64).reshape(-1)
        theta = np.asarray(self.theta, dtype=np.float64)
        self.theta = theta.reshape(-1, 3)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(self.beta)) and np.all(np.isfinite(self.theta))
                and np.all(np.isfinite(self.t))):
            raise ValidationError("body parameters must be finite")
        # wrap any axis-angle magnitude >= 2*pi onto the same rotation
        mags = np.linalg.norm(self.theta, axis=1)
        big = mags >= 2.0 * np.pi
        if np.any(big):
            wrapped = np.mod(mags[big], 2.0 * np.pi)
            self.theta = self.theta.copy()
            self.theta[big] *= (wrapped / mags[big])[:, None]

    @classmethod
    def zeros(cls, template: BodyTemplate):
        return cls(np.zeros(template.shape_dim),
                   np.zeros((template.n_joints, 3)), np.zeros(3))

    def copy(self):
        return BodyParams(self.beta.copy(), self.theta.copy(), self.t.copy())

    def as_vector(self):
        return np.concatenate([self.beta, self.theta.reshape(-1), self.t])

    @classmethod
    def from_vector(cls, vec, shape_dim, n_joints):
        vec = np.asarray(vec, dtype=np.float64)
        return cls(vec[:shape_dim],
                   vec[shape_dim:shape_dim + 3 * n_joints].reshape(n_joints, 3),
                   vec[shape_dim + 3 * n_joints:])

    def to_dict(self):
        return {"beta": self.beta.tolist(),
                "theta": self.theta.reshape(-1).tolist(),
                "t": self.t.tolist()}

    @classmethod
    def from_dict(cls, d):
        theta = np.asarray(d["theta"], dtype=np.float64)
        return cls(np.asarray(d["beta"]), theta.reshape(-1, 3), np.asarray(d["t"]))


@dataclass(frozen=True)
class MarkerSet:
    """K template-surface sites given as (face, barycentric) pairs.

    ``validate_distinct=False`` skips the pairwise-distinct invariant for
    internal site lists (e.g. projected scan correspondences).
    """

    faces: np.ndarray  # (K,)
    bary: np.ndarray   # (K, 3)
    validate_distinct: bool = True

    def __post_init__(self):
        faces = np.asarray(self.faces, dtype=np.int64)
        bary = np.asarray(self.bary, dtype=np.float64)
        object.__setattr__(self, "faces", faces)
        object.__setattr__(self, "bary", bary)
        if len(faces) < 1:
            raise ValidationError("marker set must contain at least one site")
        if bary.shape != (len(faces), 3):
            raise ValidationError("bary must be (K, 3)")
        if bary.min() < -1e-9 or np.abs(bary.sum(axis=1) - 1.0).max() > 1e-9:
            raise ValidationError("invalid barycentric coordinates")
        if self.validate_distinct:
            keys = {(int(f), round(b[0], 12), round(b[1], 12))
                    for f, b in zip(faces, bary)}
            if len(keys) != len(faces):
                raise ValidationError("marker sites must be pairwise distinct")

    def __len__(self):
        return len(self.faces)

    def to_dict(self):
        return {"sites": [{"face": int(f), "bary": b.tolist()}
                          for f, b in zip(self.faces, self.bary)]}

    @classmethod
    def from_dict(cls, d):
        sites = d["sites"]
        return cls(np.array([s["face"] for s in sites]),
                   np.array([s["bary"] for s in sites]))


# ---------------------------------------------------------------------------
# rotations

def rodrigues(rotvecs):
    """Axis-angle vectors (J, 3) -> rotation matrices (J, 3, 3).

    Uses the series expansion below 1e-8 to avoid dividing by a vanishing
    angle.
    """
    rotvecs = np.atleast_2d(np.asarray(rotvecs, dtype=np.float64))
    angles = np.linalg.norm(rotvecs, axis=1)
    out = np.empty((len(rotvecs), 3, 3))
    eye = np.eye(3)
    for i, (v, ang) in enumerate(zip(rotvecs, angles)):
        K = np.array([[0.0, -v[2], v[1]],
                      [v[2], 0.0, -v[0]],
                      [-v[1], v[0], 0.0]])
        if ang < 1e-8:
            out[i] = eye + K + 0.5 * (K @ K)
        else:
            s = np.sin(ang) / ang
            c = (1.0 - np.cos(ang)) / (ang * ang)
            out[i] = eye + s * K + c * (K @ K)
    return out


def rodrigues_jacobian(rotvec):
    """d R / d rotvec as a (3, 3, 3) array: [i] = dR/dv_i.

    Gallego-Yezzi closed form away from the origin; the skew generators at
    the origin.
    """
    v = np.asarray(rotvec, dtype=np.float64).reshape(3)
    ang = np.linalg.norm(v)
    if ang < 1e-8:
        return np.stack([_skew(e) for e in np.eye(3)])
    R = rodrigues(v[None])[0]
    out = np.empty((3, 3, 3))
    skew_v = _skew(v)
    imr = np.eye(3) - R
    for i in range(3):
        w = imr[:, i]  # (I - R) e_i
        c = np.array([v[1] * w[2] - v[2] * w[1],
                      v[2] * w[0] - v[0] * w[2],
                      v[0] * w[1] - v[1] * w[0]])
        out[i] = ((v[i] * skew_v + _skew(c)) / (ang * ang)) @ R
    return out


def _skew(v):
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


# ---------------------------------------------------------------------------
# forward model

def rest_mesh(template: BodyTemplate, beta, theta=None):
    """Rest-pose vertices: template + shape displacements (+ pose correctives)."""
    beta = np.asarray(beta, dtype=np.float64).reshape(-1)
    if len(beta) != template.shape_dim:
        raise ValidationError(
            f"beta has length {len(beta)}, template expects {template.shape_dim}")
    v = template.vertices + np.tensordot(beta, template.shape_basis, axes=1)
    if template.pose_corrective_basis.size:
        if theta is None:
            raise ValidationError("theta required when pose correctives are present")
        feats = _pose_features(template, theta)
        v = v + np.tensordot(feats, template.pose_corrective_basis, axes=1)
    elif theta is not None:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.size != 3 * template.n_joints:
            raise ValidationError(
                f"theta has {theta.size} entries, expected {3 * template.n_joints}")
    return v


def _pose_features(template, theta):
    theta = np.asarray(theta, dtype=np.float64).reshape(-1, 3)
    if len(theta) != template.n_joints:
        raise ValidationError("theta joint count mismatch")
    rots = rodrigues(theta[1:])
    return (rots - np.eye(3)).reshape(-1)


def regress_joints(template: BodyTemplate, rest_vertices):
    """Joint positions from the rest mesh via the sparse regressor."""
    rest_vertices = np.asarray(rest_vertices, dtype=np.float64)
    if rest_vertices.shape != (template.n_vertices, 3):
        raise ValidationError("rest_vertices shape mismatch")
    return template.joint_regressor @ rest_vertices


def _shaped_rest_and_joints(template, params):
    shaped = template.vertices + np.tensordot(params.beta, template.shape_basis, axes=1)
    joints = template.joint_regressor @ shaped
    rest = shaped
    if template.pose_corrective_basis.size:
        rest = rest + np.tensordot(_pose_features(template, params.theta),
                                   template.pose_corrective_basis, axes=1)
    return rest, joints


def global_transforms(template: BodyTemplate, joints, theta):
    """World rotation (J, 3, 3) and world joint position (J, 3) per joint."""
    theta = np.asarray(theta, dtype=np.float64).reshape(-1, 3)
    rots = rodrigues(theta)
    J = template.n_joints
    world_R = np.empty((J, 3, 3))
    world_t = np.empty((J, 3))
    for j in template._topo:
        p = template.parents[j]
        if p < 0:
            world_R[j] = rots[j]
            world_t[j] = joints[j]
        else:
            world_R[j] = world_R[p] @ rots[j]
            world_t[j] = world_R[p] @ (joints[j] - joints[p]) + world_t[p]
    return world_R, world_t


def pose_mesh(template: BodyTemplate, params: BodyParams):
    """Posed vertices: LBS over kinematic-tree transforms, then translated."""
    if not isinstance(params, BodyParams):
        params = BodyParams(*params)
    if len(params.beta) != template.shape_dim:
        raise ValidationError("beta length mismatch")
    if len(params.theta) != template.n_joints:
        raise ValidationError("theta joint count mismatch")
    rest, joints = _shaped_rest_and_joints(template, params)
    if np.all(params.theta == 0.0):
        # identity pose: skinning reduces to the rest mesh exactly
        return rest + params.t
    world_R, world_t = global_transforms(template, joints, params.theta)
    return _skin(template.skinning_weights, rest, joints, world_R, world_t) + params.t


def _skin(weights, rest, joints, world_R, world_t, vertex_ids=None):
    if vertex_ids is not None:
        weights = weights[vertex_ids]
        rest = rest[vertex_ids]
    # x -> sum_j w_j (R_j (x - j_j) + t_j)
    local = rest[:, None, :] - joints[None, :, :]               # (V, J, 3)
    rotated = np.einsum("jab,vjb->vja", world_R, local)         # (V, J, 3)
    return np.einsum("vj,vja->va", weights, rotated + world_t[None, :, :])


def posed_joints(template: BodyTemplate, params: BodyParams):
    """World-space joint positions for the given parameters."""
    _, joints = _shaped_rest_and_joints(template, params)
    _, world_t = global_transforms(template, joints, params.theta)
    return world_t + params.t


def marker_positions(template: BodyTemplate, params: BodyParams, markers: MarkerSet):
    """Barycentric interpolation of the posed mesh at each marker site."""
    if markers.faces.max() >= len(template.faces):
        raise ValidationError("marker face index out of range")
    rest, joints = _shaped_rest_and_joints(template, params)
    world_R, world_t = global_transforms(template, joints, params.theta)
    vids = template.faces[markers.faces]                        # (K, 3)
    uniq, inv = np.unique(vids.reshape(-1), return_inverse=True)
    posed = _skin(template.skinning_weights, rest, joints, world_R, world_t,
                  vertex_ids=uniq) + params.t
    corners = posed[inv].reshape(-1, 3, 3)
    return np.einsum("kc,kca->ka", markers.bary, corners)


def marker_jacobian(template: BodyTemplate, params: BodyParams, markers: MarkerSet):
    """Analytic Jacobian of all 3K marker coordinates w.r.t. (beta, theta, t).

    Column order matches ``BodyParams.as_vector``: shape coefficients, then
    the flattened (J, 3) pose, then translation. Rows are grouped per marker
    (x, y, z).
    """
    J = template.n_joints
    S = template.shape_dim
    K = len(markers)
    parents = template.parents
    weights = template.skinning_weights

    rest, joints = _shaped_rest_and_joints(template, params)
    world_R, world_t = global_transforms(template, joints, params.theta)

    vids = template.faces[markers.faces]
    uniq, inv = np.unique(vids.reshape(-1), return_inverse=True)
    w_u = weights[uniq]                                          # (U, J)
    local_u = rest[uniq][:, None, :] - joints[None, :, :]        # (U, J, 3)

    n_params = S + 3 * J + 3
    jac_u = np.zeros((len(uniq), 3, n_params))

    # --- translation block
    jac_u[:, :, S + 3 * J:] = np.eye(3)

    # --- shape block: rest points and joints move linearly with beta
    pc = template.pose_corrective_basis
    feats = _pose_features(template, params.theta) if pc.size else None
    blended_R = (w_u @ world_R.reshape(J, 9)).reshape(-1, 3, 3)  # sum_j w_j R_j
    for b in range(S):
        slab = template.shape_basis[b]                           # (V, 3)
        d_joints = template.joint_regressor @ slab               # (J, 3)
        d_world_t = np.empty((J, 3))
        for j in template._topo:
            p = parents[j]
            if p < 0:
                d_world_t[j] = d_joints[j]
            else:
                d_world_t[j] = world_R[p] @ (d_joints[j] - d_joints[p]) + d_world_t[p]
        moved = np.einsum("jab,jb->ja", world_R, d_joints) - d_world_t
        jac_u[:, :, b] = (np.einsum("uab,ub->ua", blended_R, slab[uniq])
                          - w_u @ moved)

    # --- pose block, batched over all 3J derivative directions
    rots = rodrigues(params.theta)
    q_n = 3 * J
    dwR = np.zeros((q_n, J, 3, 3))
    dwt = np.zeros((q_n, J, 3))
    for j in template._topo:
        p = parents[j]
        dR_j = rodrigues_jacobian(params.theta[j])               # (3, 3, 3)
        rows = slice(3 * j, 3 * j + 3)
        if p < 0:
            dwR[rows, j] = dR_j
        else:
            # zero rows propagate zeros, so no ancestor mask is needed
            dwR[:, j] = dwR[:, p] @ rots[j]
            dwt[:, j] = (dwR[:, p] @ (joints[j] - joints[p])) + dwt[:, p]
            dwR[rows, j] = world_R[p] @ dR_j
            dwt[rows, j] = dwt[rows, p]
    w_local = w_u[:, :, None] * local_u                          # (U, J, 3)
    term1 = (dwR.transpose(0, 2, 1, 3).reshape(q_n * 3, J * 3)
             @ w_local.reshape(-1, J * 3).T)                     # (q*3, U)
    term2 = w_u @ dwt.transpose(1, 0, 2).reshape(J, q_n * 3)     # (U, q*3)
    pose_block = (term1.reshape(q_n, 3, -1).transpose(2, 1, 0)
                  + term2.reshape(-1, q_n, 3).transpose(0, 2, 1))
    jac_u[:, :, S:S + q_n] = pose_block
    if pc.size:
        # correctives move the rest mesh with theta as well
        for k in range(1, J):
            dR_k = rodrigues_jacobian(params.theta[k])
            for i in range(3):
                d_feats = np.zeros_like(feats)
                d_feats[(k - 1) * 9:k * 9] = dR_k[i].reshape(-1)
                d_rest = np.tensordot(d_feats, pc, axes=1)[uniq]
                jac_u[:, :, S + 3 * k + i] += np.einsum(
                    "uj,jab,ub->ua", w_u, world_R, d_rest)

    # --- assemble per marker
    corners = jac_u[inv].reshape(K, 3, 3, n_params)
    jac = np.einsum("kc,kcap->kap", markers.bary, corners)
    return jac.reshape(3 * K, n_params)


# ---------------------------------------------------------------------------
# procedural star body

@dataclass
class StickConfig:
    """Parameters of the procedural articulated test body.

    The surface is a star-shaped blob: an ellipsoidal trunk with smooth
    angular lobes for the head, arms, and legs, evaluated on an icosphere.
    ``seed`` drives the randomized high-order shape slabs only.
    """

    subdivision: int = 4
    trunk_radii: tuple = (0.17, 0.30, 0.14)
    head_reach: float = 0.60
    head_width: float = 22.0        # degrees
    arm_reach: float = 0.62
    arm_width: float = 22.0
    arm_angle: float = 58.0         # from vertical
    leg_reach: float = 0.85
    leg_width: float = 20.0
    leg_angle: float = 26.0
    lobe_sharpness: float = 6.0
    smoothing_iterations: int = 12
    shape_dim: int = DEFAULT_SHAPE_DIM
    weight_smoothness: float = 0.055
    regressor_sigma: float = 0.06
    seed: int = 0

    def validate(self):
        if min(self.trunk_radii) <= 0 or min(
                self.head_reach, self.arm_reach, self.leg_reach) <= 0:
            raise ValidationError("stick config radii and reaches must be positive")
        if min(self.head_width, self.arm_width, self.leg_width) <= 0:
            raise ValidationError("lobe widths must be positive")
        if self.subdivision < 0 or self.subdivision > 7:
            raise ValidationError("subdivision must be in [0, 7]")
        if self.shape_dim < 1:
            raise ValidationError("shape_dim must be >= 1")


def _icosphere(level):
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
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]], dtype=np.int64)
    for _ in range(level):
        verts_list = verts.tolist()
        cache = {}

        def midpoint(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = 0.5 * (np.asarray(verts_list[a]) + np.asarray(verts_list[b]))
                m /= np.linalg.norm(m)
                cache[key] = len(verts_list)
                verts_list.append(m.tolist())
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab = midpoint(int(a), int(b))
            bc = midpoint(int(b), int(c))
            ca = midpoint(int(c), int(a))
            new_faces.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]])
        verts = np.asarray(verts_list)
        faces = np.asarray(new_faces, dtype=np.int64)
    return verts, faces


def _star_directions(config):
    """Unit direction of each lobe: head, L/R arm, L/R leg."""
    aa = np.deg2rad(config.arm_angle)
    la = np.deg2rad(config.leg_angle)
    return {
        "head": np.array([0.0, 1.0, 0.0]),
        "arm_l": np.array([np.sin(aa), np.cos(aa), 0.0]),
        "arm_r": np.array([-np.sin(aa), np.cos(aa), 0.0]),
        "leg_l": np.array([np.sin(la), -np.cos(la), 0.0]),
        "leg_r": np.array([-np.sin(la), -np.cos(la), 0.0]),
    }


def _star_radius(dirs, config):
    """Smooth star-shaped radial function evaluated at unit directions.

    Lobes use a super-Gaussian angular profile (flat, sphere-like tips) and
    are blended with the trunk ellipsoid through a p-norm soft max.
    """
    ax, ay, az = config.trunk_radii
    base = 1.0 / np.sqrt((dirs[:, 0] / ax) ** 2 + (dirs[:, 1] / ay) ** 2
                         + (dirs[:, 2] / az) ** 2)
    lobes = _star_directions(config)
    reaches = {"head": config.head_reach, "arm_l": config.arm_reach,
               "arm_r": config.arm_reach, "leg_l": config.leg_reach,
               "leg_r": config.leg_reach}
    widths = {"head": config.head_width, "arm_l": config.arm_width,
              "arm_r": config.arm_width, "leg_l": config.leg_width,
              "leg_r": config.leg_width}
    k = config.lobe_sharpness
    acc = base ** k
    for name, d in lobes.items():
        ang = np.arccos(np.clip(dirs @ d, -1.0, 1.0))
        w = np.deg2rad(widths[name])
        reach = reaches[name] * np.exp(-((ang / w) ** 4) / 2.0)
        acc = acc + reach ** k
    return acc ** (1.0 / k)


def _smooth_radius(radius, faces, iterations, lam=0.6):
    """Low-pass the radial field over the icosphere 1-ring graph."""
    n = len(radius)
    pairs = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    pairs = np.unique(np.sort(pairs, axis=1), axis=0)
    deg = np.zeros(n)
    np.add.at(deg, pairs[:, 0], 1.0)
    np.add.at(deg, pairs[:, 1], 1.0)
    r = radius.copy()
    for _ in range(iterations):
        acc = np.zeros(n)
        np.add.at(acc, pairs[:, 0], r[pairs[:, 1]])
        np.add.at(acc, pairs[:, 1], r[pairs[:, 0]])
        r = (1.0 - lam) * r + lam * acc / deg
    return r


def _stick_joint_layout(config):
    """Intended joint positions in the star frame (center at origin)."""
    d = _star_directions(config)
    arm_l, arm_r = d["arm_l"], d["arm_r"]
    leg_l, leg_r = d["leg_l"], d["leg_r"]
    up = d["head"]
    lr, ar, hr = config.leg_reach, config.arm_reach, config.head_reach
    pos = np.zeros((DEFAULT_NUM_JOINTS, 3))
    pos[0] = -0.06 * up                      # pelvis
    pos[1] = 0.16 * lr * leg_l               # hips
    pos[2] = 0.16 * lr * leg_r
    pos[3] = 0.10 * up                       # spine1
    pos[4] = 0.46 * lr * leg_l               # knees
    pos[5] = 0.46 * lr * leg_r
    pos[6] = 0.20 * up                       # spine2
    pos[7] = 0.78 * lr * leg_l               # ankles
    pos[8] = 0.78 * lr * leg_r
    pos[9] = 0.30 * up                       # spine3
    pos[10] = 0.90 * lr * leg_l              # feet
    pos[11] = 0.90 * lr * leg_r
    pos[12] = 0.40 * up                      # neck
    pos[13] = 0.18 * ar * arm_l              # collars
    pos[14] = 0.18 * ar * arm_r
    pos[15] = 0.80 * hr * up                 # head
    pos[16] = 0.34 * ar * arm_l              # shoulders
    pos[17] = 0.34 * ar * arm_r
    pos[18] = 0.60 * ar * arm_l              # elbows
    pos[19] = 0.60 * ar * arm_r
    pos[20] = 0.82 * ar * arm_l              # wrists
    pos[21] = 0.82 * ar * arm_r
    pos[22] = 0.92 * ar * arm_l              # hands
    pos[23] = 0.92 * ar * arm_r
    return pos


_BONE_CHILD = {0: 3, 1: 4, 2: 5, 3: 6, 4: 7, 5: 8, 6: 9, 9: 12, 12: 15,
               13: 16, 14: 17, 16: 18, 17: 19, 18: 20, 19: 21, 20: 22, 21: 23,
               7: 10, 8: 11}
_LEAF_EXT = {10: 0.08, 11: 0.08, 15: 0.12, 22: 0.07, 23: 0.07}


def _segment_distance(points, a, b):
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(points - a, axis=1)
    t = np.clip(((points - a) @ ab) / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(points - proj, axis=1)


def make_stick_model(config: StickConfig | None = None) -> BodyTemplate:
    """Deterministic watertight articulated test body.

    A star-shaped smooth blob evaluated on an icosphere, with a 24-joint
    kinematic tree, Gaussian joint regressor, distance-based skinning
    weights, and smooth randomized shape slabs.
    """
    config = config or StickConfig()
    config.validate()

    unit_dirs, faces = _icosphere(config.subdivision)
    radius = _star_radius(unit_dirs, config)
    radius = _smooth_radius(radius, faces, config.smoothing_iterations)
    verts = unit_dirs * radius[:, None]

    layout = _stick_joint_layout(config)

    # joint regressor: truncated Gaussian in rest distance around each joint
    J = DEFAULT_NUM_JOINTS
    regressor = np.zeros((J, len(verts)))
    sigma = config.regressor_sigma
    for j in range(J):
        d = np.linalg.norm(verts - layout[j], axis=1)
        w = np.exp(-0.5 * (d / sigma) ** 2)
        w[d > 3.0 * sigma] = 0.0
        if w.sum() < 1e-12:
            nearest = np.argsort(d)[:8]
            w[:] = 0.0
            w[nearest] = np.exp(-0.5 * (d[nearest] / d[nearest].max()) ** 2)
        regressor[j] = w / w.sum()
    joints = regressor @ verts

    # skinning: Gaussian falloff from bone segments, top-4, renormalized
    bones = {}
    axis_dir = {}
    for j in range(J):
        if j in _BONE_CHILD:
            a, b = joints[j], joints[_BONE_CHILD[j]]
        else:
            ext = _LEAF_EXT.get(j, 0.06)
            parent = _DEFAULT_PARENTS[j]
            d = joints[j] - joints[parent]
            n = np.linalg.norm(d)
            d = d / n if n > 1e-12 else np.array([0.0, 1.0, 0.0])
            a, b = joints[j], joints[j] + ext * d
        bones[j] = (a, b)
        axis_dir[j] = b - a

    s = config.weight_smoothness
    w = np.empty((len(verts), J))
    for j in range(J):
        a, b = bones[j]
        w[:, j] = np.exp(-0.5 * (_segment_distance(verts, a, b) / s) ** 2)
    top4 = np.argsort(-w, axis=1, kind="stable")[:, :4]
    sparse_w = np.zeros_like(w)
    rows = np.arange(len(verts))[:, None]
    sparse_w[rows, top4] = w[rows, top4]
    sparse_w /= sparse_w.sum(axis=1, keepdims=True)

    # shape slabs: global scale, trunk width, then smooth seeded fields
    rng = np.random.default_rng(config.seed)
    S = config.shape_dim
    slabs = np.zeros((S, len(verts), 3))
    slabs[0] = 0.04 * verts
    if S > 1:
        trunk_w = np.exp(-0.5 * ((verts[:, 1] - 0.1) / 0.25) ** 2)
        slabs[1] = 0.05 * trunk_w[:, None] * np.stack(
            [verts[:, 0], np.zeros(len(verts)), verts[:, 2]], axis=1)
    for b in range(2, S):
        freq = rng.uniform(2.0, 5.0, size=3)
        phase = rng.uniform(0.0, 2.0 * np.pi, size=3)
        amp = 0.015
        fieldvals = (np.sin(freq[0] * verts[:, 0] + phase[0])
                     * np.sin(freq[1] * verts[:, 1] + phase[1])
                     * np.sin(freq[2] * verts[:, 2] + phase[2]))
        slabs[b] = amp * fieldvals[:, None] * unit_dirs

    # shift so the root joint sits at the origin
    root = joints[0].copy()
    verts = verts - root

    return BodyTemplate(
        vertices=verts,
        faces=faces,
        shape_basis=slabs,
        joint_regressor=regressor,
        skinning_weights=sparse_w,
        parents=_DEFAULT_PARENTS.copy(),
    )


# ---------------------------------------------------------------------------
# model file I/O

def save_model(path, template: BodyTemplate):
    """Write the documented model JSON (regressor in COO triplets)."""
    jj, vv = np.nonzero(template.joint_regressor)
    payload = {
        "vertices": template.vertices.tolist(),
        "faces": template.faces.tolist(),
        "shape_basis": template.shape_basis.tolist(),
        "joint_regressor": [[int(j), int(v), float(template.joint_regressor[j, v])]
                            for j, v in zip(jj, vv)],
        "skinning_weights": template.skinning_weights.tolist(),
        "parents": template.parents.tolist(),
    }
    if template.pose_corrective_basis.size:
        payload["pose_corrective_basis"] = template.pose_corrective_basis.tolist()
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(payload, fh)
    os.replace(tmp, path)


def load_model(path) -> BodyTemplate:
    """Read and validate a model JSON file.

    Skinning rows off unity by more than 1e-6 are renormalized when within
    1e-3 and rejected otherwise.
    """
    with open(path) as fh:
        data = json.load(fh)
    for key in ("vertices", "faces", "shape_basis", "joint_regressor",
                "skinning_weights", "parents"):
        if key not in data:
            raise ValidationError(f"model file missing field {key!r}")
    vertices = np.asarray(data["vertices"], dtype=np.float64)
    weights = np.asarray(data["skinning_weights"], dtype=np.float64)
    parents = np.asarray(data["parents"], dtype=np.int64)
    sums = weights.sum(axis=1)
    err = np.abs(sums - 1.0)
    if err.max() > 1e-3:
        raise ValidationError("skinning weight row sum off by more than 1e-3")
    fix = err > 1e-6
    if fix.any():
        weights = weights.copy()
        weights[fix] /= sums[fix][:, None]
    regressor = np.zeros((len(parents), len(vertices)))
    for j, v, w in data["joint_regressor"]:
        regressor[int(j), int(v)] = float(w)
    pc = np.asarray(data.get("pose_corrective_basis", np.zeros((0, 0, 3))),
                    dtype=np.float64)
    return BodyTemplate(
        vertices=vertices,
        faces=np.asarray(data["faces"], dtype=np.int64),
        shape_basis=np.asarray(data["shape_basis"], dtype=np.float64),
        joint_regressor=regressor,
        skinning_weights=weights,
        parents=parents,
        pose_corrective_basis=pc,
    )
