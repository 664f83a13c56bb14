"""Marker aggregation, LM fitting, and Chamfer post-refinement."""

import numpy as np
import pytest

from tightfit import body_model as bm, fitting, meshgeo, tightness as tn
from tightfit.errors import ValidationError
from tightfit.fitting import FitConfig


def make_field(points, labels, confs, n_markers, inner=None):
    """Field whose vectors carry each point onto `inner` (defaults to points)."""
    inner = points if inner is None else inner
    vec = inner - points
    mag = np.linalg.norm(vec, axis=1)
    d = np.zeros_like(vec)
    nz = mag > 0
    d[nz] = vec[nz] / mag[nz, None]
    d[~nz] = [0.0, 0.0, 1.0]
    return tn.TightnessField(d, mag, labels, confs, n_markers)


@pytest.fixture(scope="module")
def markers_medium(stick_medium):
    return tn.select_markers(stick_medium.mesh(), 30, seed=0)


class TestAggregate:
    def test_single_supporter(self):
        pts = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
        inner = np.array([[0.1, 0.0, 0.0], [1.0, 0.9, 1.0]])
        field = make_field(pts, np.array([0, 1]), np.array([0.4, 0.8]), 3, inner)
        agg, present = fitting.aggregate_markers(pts, field, FitConfig())
        assert np.allclose(agg[0], inner[0], atol=1e-12)
        assert np.allclose(agg[1], inner[1], atol=1e-12)
        assert not present[2]

    def test_equal_confidence_centroid(self):
        pts = np.zeros((4, 3))
        inner = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0], [5.0, 5, 5]])
        field = make_field(pts, np.zeros(4, np.int64),
                           np.array([0.5, 0.5, 0.5, 0.1]), 1, inner)
        agg, present = fitting.aggregate_markers(pts, field,
                                                 FitConfig(top_m=3, alpha=2.0))
        assert np.allclose(agg[0], inner[:3].mean(axis=0), atol=1e-12)

    def test_matches_brute_force_sort_oracle(self):
        rng = np.random.default_rng(17)
        n, k = 400, 12
        pts = rng.normal(size=(n, 3))
        inner = pts + rng.normal(0, 0.05, (n, 3))
        labels = rng.integers(0, k, n)
        confs = rng.random(n)
        field = make_field(pts, labels, confs, k, inner)
        config = FitConfig(top_m=3, alpha=2.0)
        agg, present = fitting.aggregate_markers(pts, field, config)

        inner_pts = pts + field.vectors()
        for label in range(k):
            members = np.flatnonzero(labels == label)
            if len(members) == 0:
                assert not present[label]
                continue
            ranked = sorted(members, key=lambda i: (-confs[i], i))[:3]
            w = (confs[ranked] / confs[ranked].max()) ** 2.0
            expected = (inner_pts[ranked] * w[:, None]).sum(0) / w.sum()
            assert np.allclose(agg[label], expected, atol=1e-9)

    def test_alpha_limit_selects_top_point(self):
        rng = np.random.default_rng(3)
        pts = np.zeros((5, 3))
        inner = rng.normal(size=(5, 3))
        confs = np.array([0.1, 0.9, 0.5, 0.3, 0.7])
        field = make_field(pts, np.zeros(5, np.int64), confs, 1, inner)
        agg, _ = fitting.aggregate_markers(pts, field,
                                           FitConfig(top_m=5, alpha=64.0))
        assert np.linalg.norm(agg[0] - inner[1]) <= 1e-6

    def test_rigid_equivariance(self):
        rng = np.random.default_rng(29)
        n, k = 200, 6
        pts = rng.normal(size=(n, 3))
        inner = pts + rng.normal(0, 0.1, (n, 3))
        labels = rng.integers(0, k, n)
        confs = rng.random(n)
        field = make_field(pts, labels, confs, k, inner)
        config = FitConfig()
        agg, present = fitting.aggregate_markers(pts, field, config)

        axis = np.array([0.2, 0.5, -0.6])
        R = bm.rodrigues(axis[None])[0]
        t = np.array([3.0, -1.0, 0.5])
        field_r = tn.TightnessField(field.directions @ R.T, field.magnitudes,
                                    field.labels, field.confidences, k)
        agg_r, _ = fitting.aggregate_markers(pts @ R.T + t, field_r, config)
        assert np.abs(agg_r[present] - (agg[present] @ R.T + t)).max() < 1e-9

    def test_ties_break_by_lower_index(self):
        pts = np.zeros((3, 3))
        inner = np.array([[1.0, 0, 0], [2.0, 0, 0], [3.0, 0, 0]])
        confs = np.array([0.5, 0.5, 0.5])
        field = make_field(pts, np.zeros(3, np.int64), confs, 1, inner)
        agg, _ = fitting.aggregate_markers(pts, field, FitConfig(top_m=2))
        assert np.allclose(agg[0], [1.5, 0, 0], atol=1e-12)

    def test_no_supporters_at_all(self):
        pts = np.zeros((2, 3))
        field = make_field(pts, np.zeros(2, np.int64), np.ones(2), 1)
        with pytest.raises(ValidationError):
            # misaligned scan points
            fitting.aggregate_markers(np.zeros((3, 3)), field, FitConfig())


class TestFit:
    def test_round_trip_random_pose(self, stick_medium, markers_medium):
        rng = np.random.default_rng(41)
        p_true = bm.BodyParams(rng.normal(0, 0.4, 10),
                               rng.uniform(-0.3, 0.3, (24, 3)),
                               rng.normal(0, 0.15, 3))
        targets = bm.marker_positions(stick_medium, p_true, markers_medium)
        res = fitting.fit_body_to_markers(stick_medium, markers_medium, targets)
        assert res.marker_rmse <= 1e-4

    def test_fixed_point_flat_trace(self, stick_medium, markers_medium):
        p = bm.BodyParams.zeros(stick_medium)
        targets = bm.marker_positions(stick_medium, p, markers_medium)
        res = fitting.fit_body_to_markers(stick_medium, markers_medium, targets,
                                          init=p)
        assert res.residual_trace[0] <= 1e-20
        assert np.allclose(res.residual_trace, res.residual_trace[0], atol=1e-18)

    def test_trace_nonincreasing(self, stick_medium, markers_medium):
        rng = np.random.default_rng(43)
        p_true = bm.BodyParams(rng.normal(0, 0.5, 10),
                               rng.uniform(-0.3, 0.3, (24, 3)), rng.normal(0, 0.2, 3))
        targets = bm.marker_positions(stick_medium, p_true, markers_medium)
        res = fitting.fit_body_to_markers(stick_medium, markers_medium, targets)
        assert np.all(np.diff(res.residual_trace) <= 1e-15)

    def test_outlier_robustness(self, stick_medium):
        """One of 86 targets displaced a meter away: bounded clean-marker damage.

        Probe frozen after the first calibration run (seeds 47..49, 1.5 cm
        baseline noise floor): measured ratios 3.2-4.3, frozen threshold 5x;
        plain least squares absorbs the outlier locally, so tighter ratios
        would require robust weighting the marker objective does not use.
        """
        markers = tn.select_markers(stick_medium.mesh(), 86, seed=0)
        rng = np.random.default_rng(47)
        p_true = bm.BodyParams(rng.normal(0, 0.3, 10),
                               rng.uniform(-0.25, 0.25, (24, 3)),
                               rng.normal(0, 0.1, 3))
        targets = bm.marker_positions(stick_medium, p_true, markers)
        noisy = targets + rng.normal(0, 0.015, targets.shape)

        res_clean = fitting.fit_body_to_markers(stick_medium, markers, noisy)
        clean_rmse = _clean_rmse(stick_medium, markers, res_clean.params,
                                 targets, exclude=None)

        corrupted = noisy.copy()
        corrupted[5] += [1.0, 0.0, 0.0]
        res_out = fitting.fit_body_to_markers(stick_medium, markers, corrupted)
        out_rmse = _clean_rmse(stick_medium, markers, res_out.params,
                               targets, exclude=5)
        assert out_rmse <= 5.0 * max(clean_rmse, 1e-6)
        assert out_rmse <= 0.05  # a meter-scale outlier costs at most 5 cm

    def test_stage1_freezes_trailing_betas(self, stick_medium, markers_medium):
        rng = np.random.default_rng(53)
        p_true = bm.BodyParams(rng.normal(0, 0.4, 10),
                               rng.uniform(-0.2, 0.2, (24, 3)), np.zeros(3))
        targets = bm.marker_positions(stick_medium, p_true, markers_medium)
        init = bm.BodyParams(np.full(10, 0.123), np.zeros((24, 3)), np.zeros(3))
        config = FitConfig(stage2_steps=1)
        res = fitting.fit_body_to_markers(stick_medium, markers_medium, targets,
                                          init=init,
                                          config=FitConfig(stage1_steps=30,
                                                           stage2_steps=1,
                                                           convergence_tol=0.0))
        # after stage 1 + a single stage-2 step, beta[2:] moved at most once;
        # run again with stage2 disabled via tiny budget to observe the freeze
        config = FitConfig(stage1_steps=8, stage2_steps=1, convergence_tol=0.0)
        trace_params = []
        import tightfit.fitting as fitting_mod
        orig = fitting_mod._residual

        def spy(template, params, markers, targets, present):
            trace_params.append(params.beta[2:].copy())
            return orig(template, params, markers, targets, present)

        fitting_mod._residual = spy
        try:
            fitting.fit_body_to_markers(stick_medium, markers_medium, targets,
                                        init=init, config=config)
        finally:
            fitting_mod._residual = orig
        stage1_betas = trace_params[:8]
        for b in stage1_betas:
            assert np.array_equal(b, np.full(8, 0.123))

    def test_absent_markers_excluded(self, stick_medium, markers_medium):
        rng = np.random.default_rng(59)
        p_true = bm.BodyParams(rng.normal(0, 0.3, 10),
                               rng.uniform(-0.2, 0.2, (24, 3)), np.zeros(3))
        targets = bm.marker_positions(stick_medium, p_true, markers_medium)
        targets[7] = np.nan
        targets[13] = np.nan
        res = fitting.fit_body_to_markers(stick_medium, markers_medium, targets)
        assert res.marker_rmse <= 1e-3

    def test_damping_overflow_carries_best_params(self, stick_medium):
        """A zero-gradient positive-residual start can never improve: the
        damping overflows and the error carries the best-so-far params."""
        from tightfit.errors import NonConvergenceError

        site = bm.MarkerSet(np.zeros(4, np.int64),
                            np.tile([[1.0, 0.0, 0.0]], (4, 1)),
                            validate_distinct=False)
        p0 = bm.BodyParams.zeros(stick_medium)
        pos = bm.marker_positions(stick_medium, p0, site)[0]
        targets = np.stack([pos + [0.1, 0, 0], pos - [0.1, 0, 0],
                            pos + [0, 0.1, 0], pos - [0, 0.1, 0]])
        with pytest.raises(NonConvergenceError) as exc:
            fitting.fit_body_to_markers(stick_medium, site, targets, init=p0)
        assert exc.value.best_params is not None
        assert np.array_equal(exc.value.best_params.as_vector(), p0.as_vector())

    def test_too_few_targets(self, stick_medium, markers_medium):
        targets = np.full((len(markers_medium), 3), np.nan)
        targets[0] = targets[1] = targets[2] = 0.0
        with pytest.raises(ValidationError):
            fitting.fit_body_to_markers(stick_medium, markers_medium, targets)

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            FitConfig(top_m=0)
        with pytest.raises(ValidationError):
            FitConfig(stage1_scale=0.0)
        with pytest.raises(ValidationError):
            FitConfig(alpha=-1.0)

    def test_result_round_trip(self, tmp_path, stick_medium, markers_medium):
        p = bm.BodyParams.zeros(stick_medium)
        targets = bm.marker_positions(stick_medium, p, markers_medium)
        res = fitting.fit_body_to_markers(stick_medium, markers_medium, targets,
                                          init=p)
        path = tmp_path / "fit.json"
        fitting.save_fit_result(path, res)
        back = fitting.load_fit_result(path)
        assert np.array_equal(back.residual_trace, res.residual_trace)
        assert back.converged == res.converged
        assert np.array_equal(back.params.as_vector(), res.params.as_vector())


def _clean_rmse(template, markers, params, clean_targets, exclude):
    pos = bm.marker_positions(template, params, markers)
    mask = np.ones(len(markers), dtype=bool)
    if exclude is not None:
        mask[exclude] = False
    d = pos[mask] - clean_targets[mask]
    return float(np.sqrt((d ** 2).sum() / d.size))


class TestChamferRefine:
    def test_zero_steps_identity(self, stick_medium):
        p = bm.BodyParams(np.full(10, 0.1), np.full((24, 3), 0.05), np.zeros(3))
        out = fitting.chamfer_refine(stick_medium, p, np.zeros((10, 3)), steps=0)
        assert np.array_equal(out.as_vector(), p.as_vector())

    def test_scan_on_body_keeps_params(self, stick_medium):
        rng = np.random.default_rng(61)
        p = bm.BodyParams(rng.normal(0, 0.2, 10), rng.uniform(-0.2, 0.2, (24, 3)),
                          rng.normal(0, 0.1, 3))
        posed = bm.pose_mesh(stick_medium, p)
        scan = meshgeo.sample_surface(stick_medium.mesh(posed), 800, seed=3).positions
        markers = tn.select_markers(stick_medium.mesh(), 20, seed=1)
        before = bm.marker_positions(stick_medium, p, markers)
        out = fitting.chamfer_refine(stick_medium, p, scan, steps=5, step_scale=0.2)
        after = bm.marker_positions(stick_medium, out, markers)
        drift = np.sqrt(((after - before) ** 2).sum(axis=1).mean())
        assert drift <= 1e-4 * 100  # markers drift below 1 cm on self-scan
        assert drift <= 1e-2

    def test_inflated_scan_drags_body_outward(self, stick_medium):
        """3 cm inflation: refinement increases V2V against the true body."""
        rng = np.random.default_rng(67)
        p = bm.BodyParams(rng.normal(0, 0.2, 10), rng.uniform(-0.15, 0.15, (24, 3)),
                          np.zeros(3))
        posed = bm.pose_mesh(stick_medium, p)
        body = stick_medium.mesh(posed)
        from tightfit.synth import smoothed_vertex_normals
        outer = meshgeo.TriMesh(posed + 0.03 * smoothed_vertex_normals(body),
                                stick_medium.faces)
        scan = meshgeo.sample_surface(outer, 1500, seed=5).positions
        refined = fitting.chamfer_refine(stick_medium, p, scan, steps=8,
                                         step_scale=0.3)
        v2v_before = 0.0
        v2v_after = np.linalg.norm(bm.pose_mesh(stick_medium, refined) - posed,
                                   axis=1).mean()
        assert v2v_after > v2v_before
        assert v2v_after > 0.005  # drifted outward by at least half a centimeter
