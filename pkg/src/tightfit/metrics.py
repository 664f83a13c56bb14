"""Evaluation metrics: V2V, MPJPE, bidirectional Chamfer, angular error, shape MAE.

Distances are reported in centimeters (inputs are meters). The Chamfer
variant is the symmetric mean of unsquared nearest-neighbor distances. The
angular metric is the cosine distance ``1 - cos`` with an even-count median
taken as the lower central value.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

M_TO_CM = 100.0


@dataclass
class MetricReport:
    v2v_cm: float = np.nan
    mpjpe_cm: float = np.nan
    chamfer_cm: float = np.nan
    angular_mean: float = np.nan
    angular_median: float = np.nan
    shape_mae: np.ndarray | None = None

    def to_dict(self):
        d = {"v2v_cm": self.v2v_cm, "mpjpe_cm": self.mpjpe_cm,
             "chamfer_cm": self.chamfer_cm, "angular_mean": self.angular_mean,
             "angular_median": self.angular_median}
        if self.shape_mae is not None:
            d["shape_mae"] = np.asarray(self.shape_mae).tolist()
        return d

    def save(self, path):
        tmp = f"{path}.tmp"
        with open(tmp, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
        os.replace(tmp, path)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            d = json.load(fh)
        mae = d.pop("shape_mae", None)
        return cls(shape_mae=None if mae is None else np.asarray(mae), **d)


def write_report_csv(path, reports, keys=None):
    """Batch CSV export, one row per report."""
    keys = keys or ["v2v_cm", "mpjpe_cm", "chamfer_cm", "angular_mean",
                    "angular_median"]
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(keys)
        for r in reports:
            d = r.to_dict() if isinstance(r, MetricReport) else dict(r)
            writer.writerow([d.get(k, "") for k in keys])
    os.replace(tmp, path)


def v2v(pred_vertices, gt_vertices):
    """Mean distance over corresponding vertices, in cm."""
    pred_vertices = np.asarray(pred_vertices, dtype=np.float64)
    gt_vertices = np.asarray(gt_vertices, dtype=np.float64)
    if pred_vertices.shape != gt_vertices.shape:
        raise ValidationError("vertex arrays must match in shape")
    return float(np.linalg.norm(pred_vertices - gt_vertices, axis=1).mean()) * M_TO_CM


def mpjpe(pred_joints, gt_joints):
    """Mean per-joint position error in cm (no alignment applied)."""
    pred_joints = np.asarray(pred_joints, dtype=np.float64)
    gt_joints = np.asarray(gt_joints, dtype=np.float64)
    if pred_joints.shape != gt_joints.shape:
        raise ValidationError("joint arrays must match in shape")
    return float(np.linalg.norm(pred_joints - gt_joints, axis=1).mean()) * M_TO_CM


def chamfer_bidirectional(points_a, points_b):
    """Symmetric mean nearest-neighbor distance between point sets, in cm."""
    from scipy.spatial import cKDTree

    points_a = np.atleast_2d(np.asarray(points_a, dtype=np.float64))
    points_b = np.atleast_2d(np.asarray(points_b, dtype=np.float64))
    if len(points_a) == 0 or len(points_b) == 0:
        raise ValidationError("point sets must be nonempty")
    d_ab, _ = cKDTree(points_b).query(points_a)
    d_ba, _ = cKDTree(points_a).query(points_b)
    return float(0.5 * (d_ab.mean() + d_ba.mean())) * M_TO_CM


def angular_error(pred_dirs, gt_dirs):
    """Mean and median cosine distance between unit direction fields.

    The median of an even count is the lower of the two central values.
    """
    pred_dirs = np.asarray(pred_dirs, dtype=np.float64)
    gt_dirs = np.asarray(gt_dirs, dtype=np.float64)
    pn = np.linalg.norm(pred_dirs, axis=1)
    gn = np.linalg.norm(gt_dirs, axis=1)
    if len(pn) == 0 or pn.min() < 1e-12 or gn.min() < 1e-12:
        raise ValidationError("directions must be nonzero")
    # 1 - cos as half squared distance of normalized vectors: exact at equality
    diff = pred_dirs / pn[:, None] - gt_dirs / gn[:, None]
    err = 0.5 * np.einsum("ij,ij->i", diff, diff)
    ordered = np.sort(err)
    return float(err.mean()), float(ordered[(len(ordered) - 1) // 2])


def shape_mae(pred_betas, gt_betas, n_coeffs=3):
    """Per-coefficient mean absolute error of the leading shape parameters.

    Accepts single vectors or batches (B, S).
    """
    pred_betas = np.atleast_2d(np.asarray(pred_betas, dtype=np.float64))
    gt_betas = np.atleast_2d(np.asarray(gt_betas, dtype=np.float64))
    if pred_betas.shape != gt_betas.shape:
        raise ValidationError("beta batches must match in shape")
    if pred_betas.shape[1] < n_coeffs:
        raise ValidationError(f"need at least {n_coeffs} shape coefficients")
    return np.abs(pred_betas[:, :n_coeffs] - gt_betas[:, :n_coeffs]).mean(axis=0)
