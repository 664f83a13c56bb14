"""Marker aggregation and two-stage damped Gauss-Newton body fitting.

Scan points move inward along their tightness vectors; per marker label the
top-m most confident inner points are aggregated with confidence-power
weights. The body parameters are then fit to the aggregated markers by a
Levenberg-Marquardt loop: stage one moves the first two shape coefficients,
the pose, and the translation; stage two releases every parameter.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from . import body_model as bm
from .body_model import BodyParams, BodyTemplate, MarkerSet
from .errors import NonConvergenceError, ValidationError
from .tightness import TightnessField, _barycentric

_MU_OVERFLOW = 1e12


@dataclass
class FitConfig:
    top_m: int = 3
    alpha: float = 2.0
    stage1_steps: int = 30
    stage1_scale: float = 0.5
    stage2_steps: int = 50
    stage2_scale: float = 0.2
    lm_damping_init: float = 1e-3
    lm_damping_factor: float = 10.0
    convergence_tol: float = 1e-8

    def __post_init__(self):
        if self.top_m < 1:
            raise ValidationError("top_m must be >= 1")
        if self.alpha < 0:
            raise ValidationError("alpha must be >= 0")
        if self.stage1_steps < 1 or self.stage2_steps < 1:
            raise ValidationError("stage steps must be >= 1")
        for scale in (self.stage1_scale, self.stage2_scale):
            if not 0.0 < scale <= 1.0:
                raise ValidationError("step scales must lie in (0, 1]")

    def to_dict(self):
        return {k: getattr(self, k) for k in (
            "top_m", "alpha", "stage1_steps", "stage1_scale", "stage2_steps",
            "stage2_scale", "lm_damping_init", "lm_damping_factor",
            "convergence_tol")}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class FitResult:
    params: BodyParams
    residual_trace: np.ndarray
    converged: bool
    marker_rmse: float
    stage_boundaries: list = dataclass_field(default_factory=list)

    def to_dict(self):
        return {
            "params": self.params.to_dict(),
            "residual_trace": np.asarray(self.residual_trace).tolist(),
            "converged": bool(self.converged),
            "marker_rmse": float(self.marker_rmse),
            "stage_boundaries": list(self.stage_boundaries),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(BodyParams.from_dict(d["params"]),
                   np.asarray(d["residual_trace"], dtype=np.float64),
                   bool(d["converged"]), float(d["marker_rmse"]),
                   list(d.get("stage_boundaries", [])))


def save_fit_result(path, result: FitResult):
    import os
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(result.to_dict(), fh, sort_keys=True)
    os.replace(tmp, path)


def load_fit_result(path) -> FitResult:
    with open(path) as fh:
        return FitResult.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# aggregation

def aggregate_markers(scan_points, field: TightnessField, config: FitConfig):
    """Aggregate inner points into marker estimates: (K, 3) plus present mask.

    Inner points are ``x + b * d``. Per label, the ``top_m`` points with the
    highest confidence (ties by lower point index) are combined with weights
    ``c^alpha``; weights are normalized by the per-label maximum so large
    alpha stays numerically stable. Labels without supporters are absent.
    """
    scan_points = np.asarray(scan_points, dtype=np.float64)
    if scan_points.shape != (len(field), 3):
        raise ValidationError("scan points must align with the field")
    k = field.n_markers
    inner = scan_points + field.vectors()
    markers = np.full((k, 3), np.nan)
    present = np.zeros(k, dtype=bool)
    order = np.lexsort((np.arange(len(field)), -field.confidences))
    for label in range(k):
        members = order[field.labels[order] == label]
        if len(members) == 0:
            continue
        top = members[:config.top_m]
        c = field.confidences[top]
        cmax = c.max()
        w = np.ones_like(c) if cmax <= 0.0 else (c / cmax) ** config.alpha
        wsum = w.sum()
        if wsum == 0.0:
            w = np.ones_like(c)
            wsum = w.sum()
        markers[label] = (inner[top] * w[:, None]).sum(axis=0) / wsum
        present[label] = True
    if not present.any():
        raise ValidationError("no marker has any supporting point")
    return markers, present


# ---------------------------------------------------------------------------
# LM fitting

def _residual(template, params, markers, targets, present):
    pos = bm.marker_positions(template, params, markers)
    return (pos[present] - targets[present]).reshape(-1)


def _active_columns(template, stage):
    s = template.shape_dim
    j = template.n_joints
    cols = np.zeros(s + 3 * j + 3, dtype=bool)
    if stage == 1:
        cols[:min(2, s)] = True
    else:
        cols[:s] = True
    cols[s:] = True  # pose and translation active in both stages
    return cols


def fit_body_to_markers(template: BodyTemplate, markers: MarkerSet, targets,
                        init: BodyParams | None = None,
                        config: FitConfig | None = None,
                        present=None) -> FitResult:
    """Two-stage damped Gauss-Newton fit of body parameters to marker targets.

    Each iteration solves ``(J^T J + mu I) step = J^T r`` on the stage's
    active parameters and applies ``-scale * step``; accepted steps shrink
    the damping, rejected ones grow it. Absent targets are excluded from the
    residual. Raises ``NonConvergenceError`` (carrying the best parameters)
    if damping overflows without progress.
    """
    config = config or FitConfig()
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != (len(markers), 3):
        raise ValidationError("targets must be (K, 3)")
    if present is None:
        present = ~np.isnan(targets).any(axis=1)
    present = np.asarray(present, dtype=bool)
    if present.sum() < 4:
        raise ValidationError(
            f"need at least 4 present marker targets, got {int(present.sum())}")

    params = (init or BodyParams.zeros(template)).copy()
    n_present = int(present.sum())

    r = _residual(template, params, markers, targets, present)
    trace = [float(r @ r)]
    stage_boundaries = []
    converged = False
    present_rows = np.repeat(present, 3)
    for stage, steps, scale in ((1, config.stage1_steps, config.stage1_scale),
                                (2, config.stage2_steps, config.stage2_scale)):
        mu = config.lm_damping_init
        active = _active_columns(template, stage)
        stage_boundaries.append(len(trace) - 1)
        converged = False  # per-stage; the final stage's flag is reported
        for _ in range(steps):
            jac = bm.marker_jacobian(template, params, markers)[present_rows][:, active]
            jtj = jac.T @ jac
            jtr = jac.T @ r
            accepted = False
            while mu < _MU_OVERFLOW:
                try:
                    step = np.linalg.solve(jtj + mu * np.eye(jtj.shape[0]), jtr)
                except np.linalg.LinAlgError:
                    mu *= config.lm_damping_factor
                    continue
                vec = params.as_vector()
                vec[active] -= scale * step
                candidate = BodyParams.from_vector(vec, template.shape_dim,
                                                   template.n_joints)
                r_new = _residual(template, candidate, markers, targets, present)
                if r_new @ r_new < r @ r:
                    improvement = float(r @ r - r_new @ r_new)
                    params = candidate
                    r = r_new
                    mu = max(mu / config.lm_damping_factor, 1e-15)
                    accepted = True
                    if improvement < config.convergence_tol:
                        converged = True
                    break
                mu *= config.lm_damping_factor
            trace.append(float(r @ r))
            if not accepted:
                if trace[0] > 0 and trace[-1] >= trace[0] and mu >= _MU_OVERFLOW:
                    raise NonConvergenceError(
                        "damping overflow without progress", best_params=params,
                        residual_trace=np.asarray(trace))
                converged = converged or trace[-1] <= config.convergence_tol
                break
            if converged:
                break

    rmse = float(np.sqrt((r @ r) / (3 * n_present)))
    return FitResult(params, np.asarray(trace), converged, rmse, stage_boundaries)


# ---------------------------------------------------------------------------
# chamfer post-refinement

def chamfer_refine(template: BodyTemplate, params: BodyParams, scan_points,
                   steps=10, step_scale=0.2) -> BodyParams:
    """Pull the fitted body toward the scan with a symmetric Chamfer objective.

    Each iteration freezes nearest-neighbor correspondences in both
    directions (posed body vertices to scan points, scan points to the posed
    surface) and applies one damped Gauss-Newton step on the resulting least
    squares. Appropriate for tight clothing; loose scans drag the body
    outward (the caller decides applicability).
    """
    from scipy.spatial import cKDTree

    from . import meshgeo

    scan_points = np.asarray(scan_points, dtype=np.float64)
    if steps < 0:
        raise ValidationError("steps must be >= 0")
    params = params.copy()
    if steps == 0:
        return params

    n_params = template.shape_dim + 3 * template.n_joints + 3
    scan_tree = cKDTree(scan_points)
    faces = template.faces
    vertex_sites = _vertex_sites(template)

    for _ in range(steps):
        posed = bm.pose_mesh(template, params)
        posed_mesh = template.mesh(posed)

        # body vertices -> nearest scan point
        _, nearest_scan = scan_tree.query(posed)
        r_fwd = (posed - scan_points[nearest_scan]).reshape(-1)
        jac_fwd = bm.marker_jacobian(template, params, vertex_sites)

        # scan points -> nearest posed surface point, as marker-style sites
        _, face_id, closest = meshgeo.point_to_surface(posed_mesh, scan_points)
        bary = _barycentric(closest, posed[faces[face_id]])
        back_sites = MarkerSet(face_id, bary, validate_distinct=False)
        r_back = (bm.marker_positions(template, params, back_sites)
                  - scan_points).reshape(-1)
        jac_back = bm.marker_jacobian(template, params, back_sites)

        jac = np.concatenate([jac_fwd, jac_back])
        r = np.concatenate([r_fwd, r_back])
        jtj = jac.T @ jac
        damping = 1e-6 * np.trace(jtj) / n_params
        step = np.linalg.solve(jtj + damping * np.eye(n_params), jac.T @ r)
        vec = params.as_vector() - step_scale * step
        params = BodyParams.from_vector(vec, template.shape_dim, template.n_joints)
    return params


def _vertex_sites(template) -> MarkerSet:
    """One corner site per vertex, so marker machinery covers the whole mesh."""
    faces = template.faces
    first_face = np.full(template.n_vertices, -1, dtype=np.int64)
    corner = np.zeros(template.n_vertices, dtype=np.int64)
    for fi, f in enumerate(faces):
        for c in range(3):
            v = int(f[c])
            if first_face[v] < 0:
                first_face[v] = fi
                corner[v] = c
    bary = np.zeros((template.n_vertices, 3))
    bary[np.arange(template.n_vertices), corner] = 1.0
    return MarkerSet(first_face, bary)
