"""Synthetic clothed-scan generation.

A posed body is inflated along smoothed vertex normals with a spatially
varying offset field: a base offset, region-dependent amplitudes (trunk vs
limbs, from the skinning weights), and a smooth seeded bump field. Outputs
stand in for captured scans in the desk-scale experiments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import body_model as bm
from .errors import NumericalError, ValidationError
from .meshgeo import TriMesh

_TRUNK_JOINTS = (0, 3, 6, 9, 12, 13, 14, 15)


@dataclass
class ClothingProfile:
    """Offset field parameters, meters."""

    base_offset: float = 0.03
    trunk_amplitude: float = 0.0
    limb_amplitude: float = 0.0
    bump_sigma: float = 0.0        # magnitude of the smooth random bumps
    bump_scale: float = 3.0        # spatial frequency of the bumps (1/m)

    def __post_init__(self):
        if self.base_offset < 0 or self.bump_sigma < 0 or self.bump_scale <= 0:
            raise ValidationError("clothing profile parameters out of range")

    def to_dict(self):
        return {"base_offset": self.base_offset,
                "trunk_amplitude": self.trunk_amplitude,
                "limb_amplitude": self.limb_amplitude,
                "bump_sigma": self.bump_sigma,
                "bump_scale": self.bump_scale}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def smoothed_vertex_normals(mesh: TriMesh, rounds=3):
    """Angle-weighted normals relaxed over the 1-ring; unit length."""
    normals = mesh.vertex_normals.copy()
    if rounds == 0:
        return normals
    pairs = np.concatenate([mesh.faces[:, [0, 1]], mesh.faces[:, [1, 2]],
                            mesh.faces[:, [2, 0]]])
    pairs = np.unique(np.sort(pairs, axis=1), axis=0)
    deg = np.zeros(mesh.n_vertices)
    np.add.at(deg, pairs[:, 0], 1.0)
    np.add.at(deg, pairs[:, 1], 1.0)
    for _ in range(rounds):
        acc = np.zeros_like(normals)
        np.add.at(acc, pairs[:, 0], normals[pairs[:, 1]])
        np.add.at(acc, pairs[:, 1], normals[pairs[:, 0]])
        normals = 0.5 * normals + 0.5 * acc / deg[:, None]
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return normals


def offset_field(template: bm.BodyTemplate, profile: ClothingProfile, seed=0):
    """Per-vertex offset magnitudes (nonnegative)."""
    w = template.skinning_weights
    trunk_w = w[:, list(_TRUNK_JOINTS)].sum(axis=1)
    limb_w = 1.0 - trunk_w
    offsets = (profile.base_offset
               + profile.trunk_amplitude * trunk_w
               + profile.limb_amplitude * limb_w)
    if profile.bump_sigma > 0:
        rng = np.random.default_rng(seed)
        v = template.vertices
        bumps = np.zeros(len(v))
        for _ in range(6):
            k = rng.normal(0.0, profile.bump_scale, 3)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            bumps += np.sin(v @ k + phase)
        bumps *= profile.bump_sigma / np.sqrt(6.0)
        offsets = offsets + bumps
    return np.maximum(offsets, 0.0)


def clothe(posed_vertices, template: bm.BodyTemplate, offsets,
           normal_rounds=8, max_flip_fraction=0.08):
    """Outer mesh: posed body displaced along smoothed normals.

    Raises ``NumericalError`` when the displacement flips more than
    ``max_flip_fraction`` of the faces (self-intersecting clothing).
    """
    body = TriMesh(posed_vertices, template.faces)
    normals = smoothed_vertex_normals(body, rounds=normal_rounds)
    outer = TriMesh(posed_vertices + offsets[:, None] * normals, template.faces)
    dots = np.einsum("ij,ij->i", outer.face_normals, body.face_normals)
    flipped = float((dots < 0.0).mean())
    if flipped > max_flip_fraction:
        raise NumericalError(
            f"clothing offset flips {flipped:.1%} of faces (> {max_flip_fraction:.1%})")
    return outer


def random_params(template: bm.BodyTemplate, seed, beta_sigma=0.4,
                  theta_range=0.3, t_sigma=0.1) -> bm.BodyParams:
    """Bounded random body parameters for synthetic scans."""
    rng = np.random.default_rng(seed)
    return bm.BodyParams(
        np.clip(rng.normal(0.0, beta_sigma, template.shape_dim), -1.5, 1.5),
        rng.uniform(-theta_range, theta_range, (template.n_joints, 3)),
        rng.normal(0.0, t_sigma, 3))


def synth_scan(template: bm.BodyTemplate, profile: ClothingProfile, seed,
               params: bm.BodyParams | None = None, max_retries=5):
    """Posed ground-truth body and clothed outer mesh.

    On face flips the offset field is retried at 70% scale, erroring after
    ``max_retries`` attempts. Returns (params, body_mesh, outer_mesh, offsets).
    """
    seeds = np.random.SeedSequence(seed).spawn(2)
    if params is None:
        params = random_params(template, seeds[0])
    posed = bm.pose_mesh(template, params)
    offsets = offset_field(template, profile, seed=seeds[1])
    scale = 1.0
    for _ in range(max_retries):
        try:
            outer = clothe(posed, template, offsets * scale)
            return params, TriMesh(posed, template.faces), outer, offsets * scale
        except NumericalError:
            scale *= 0.7
    raise NumericalError(
        f"clothing offsets self-intersect even after {max_retries} retries")
