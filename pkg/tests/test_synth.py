"""Synthetic clothed-scan generation."""

import numpy as np
import pytest

from tightfit import meshgeo, synth
from tightfit.errors import NumericalError, ValidationError


class TestOffsetField:
    def test_constant_profile(self, stick_small):
        profile = synth.ClothingProfile(base_offset=0.03)
        offsets = synth.offset_field(stick_small, profile, seed=0)
        assert np.allclose(offsets, 0.03, atol=1e-15)

    def test_region_amplitudes(self, stick_small):
        profile = synth.ClothingProfile(base_offset=0.01, trunk_amplitude=0.05)
        offsets = synth.offset_field(stick_small, profile, seed=0)
        assert offsets.min() >= 0.01 - 1e-12
        assert offsets.max() > 0.03  # trunk vertices pick up the amplitude

    def test_nonnegative_with_bumps(self, stick_small):
        profile = synth.ClothingProfile(base_offset=0.005, bump_sigma=0.02)
        offsets = synth.offset_field(stick_small, profile, seed=3)
        assert offsets.min() >= 0.0

    def test_invalid_profile(self):
        with pytest.raises(ValidationError):
            synth.ClothingProfile(base_offset=-0.01)


class TestSynthScan:
    def test_zero_offset_outer_equals_body(self, stick_small):
        profile = synth.ClothingProfile(base_offset=0.0)
        params, body, outer, offsets = synth.synth_scan(stick_small, profile, seed=4)
        assert np.array_equal(outer.vertices, body.vertices)

    def test_constant_3cm_mean_distance(self, stick_default):
        """Distance-field oracle: mean scan-to-body distance 3 cm +- 10%."""
        profile = synth.ClothingProfile(base_offset=0.03)
        params, body, outer, offsets = synth.synth_scan(stick_default, profile,
                                                        seed=11)
        pts = meshgeo.sample_surface(outer, 2000, seed=0).positions
        d, _, _ = meshgeo.point_to_surface(body, pts)
        assert abs(d.mean() - 0.03) / 0.03 < 0.10

    def test_deterministic(self, stick_small):
        profile = synth.ClothingProfile(base_offset=0.02, bump_sigma=0.005)
        a = synth.synth_scan(stick_small, profile, seed=9)
        b = synth.synth_scan(stick_small, profile, seed=9)
        assert np.array_equal(a[1].vertices, b[1].vertices)
        assert np.array_equal(a[2].vertices, b[2].vertices)
        assert np.array_equal(a[0].as_vector(), b[0].as_vector())

    def test_bounded_pose(self, stick_small):
        for seed in range(5):
            params, _, _, _ = synth.synth_scan(
                stick_small, synth.ClothingProfile(base_offset=0.01), seed=seed)
            assert np.abs(params.theta).max() <= 0.3 + 1e-12

    def test_retry_shrinks_hopeless_offset(self, stick_default):
        """An offset that inverts crease faces is retried at reduced scale."""
        profile = synth.ClothingProfile(base_offset=0.20)
        _, body, outer, offsets = synth.synth_scan(stick_default, profile, seed=2,
                                                   max_retries=5)
        assert offsets.max() < 0.20  # retries reduced the offset

    def test_error_after_max_retries(self, stick_default):
        profile = synth.ClothingProfile(base_offset=0.60)
        with pytest.raises(NumericalError):
            synth.synth_scan(stick_default, profile, seed=2, max_retries=2)


class TestClothe:
    def test_flip_guard_raises(self, stick_small):
        # deflating past the local thickness turns the surface inside out
        posed = stick_small.vertices
        offsets = np.full(stick_small.n_vertices, -0.3)
        with pytest.raises(NumericalError):
            synth.clothe(posed, stick_small, offsets)

    def test_smoothed_normals_unit(self, stick_small):
        n = synth.smoothed_vertex_normals(stick_small.mesh(), rounds=4)
        assert np.abs(np.linalg.norm(n, axis=1) - 1).max() < 1e-12
