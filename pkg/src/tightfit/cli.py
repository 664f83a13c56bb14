"""Command-line surface: synth, prep, predict, fit, eval, equivtest, pipeline.

Every command validates inputs before side effects and writes outputs
through a temp-file-plus-rename so partial files never land. JSON artifacts
are byte-deterministic under a fixed seed; wall-clock timing goes to stdout
only. Exit codes: 0 success, 1 validation failure, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import body_model as bm
from . import fitting, groupequiv, meshgeo, metrics, synth, tightness
from .errors import NumericalError, ValidationError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2


def _write_json(path, payload):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
    os.replace(tmp, path)


def _read_json(path):
    if not os.path.exists(path):
        raise ValidationError(f"missing file: {path}")
    with open(path) as fh:
        return json.load(fh)


def default_config():
    return {
        "seed": 0,
        "model": {"kind": "stick"},
        "n_markers": 86,
        "lambda": tightness.DEFAULT_LAMBDA,
        "n_inner": tightness.DEFAULT_N_INNER,
        "n_scatter": tightness.DEFAULT_N_SCATTER,
        "geo_threshold": tightness.DEFAULT_GEO_THRESHOLD,
        "clothing": synth.ClothingProfile().to_dict(),
        "noise": tightness.NoiseConfig().to_dict(),
        "fit": fitting.FitConfig().to_dict(),
        "refine_steps": 10,
        "refine_scale": 0.2,
    }


def load_config(path=None, seed=None):
    config = default_config()
    if path is not None:
        user = _read_json(path)
        for key, value in user.items():
            if key not in config:
                raise ValidationError(f"unknown config key {key!r}")
            if isinstance(config[key], dict) and key != "model":
                config[key] = {**config[key], **value}
            else:
                config[key] = value
    if seed is not None:
        config["seed"] = seed
    return config


def _build_template(config):
    import dataclasses

    model = config["model"]
    kind = model.get("kind", "stick")
    if kind == "stick":
        opts = {k: v for k, v in model.items() if k != "kind"}
        known = {f.name for f in dataclasses.fields(bm.StickConfig)}
        unknown = set(opts) - known
        if unknown:
            raise ValidationError(f"unknown stick model keys: {sorted(unknown)}")
        if "trunk_radii" in opts:
            opts["trunk_radii"] = tuple(opts["trunk_radii"])
        return bm.make_stick_model(bm.StickConfig(**opts))
    if kind == "file":
        if "path" not in model:
            raise ValidationError("model kind 'file' needs a 'path'")
        return bm.load_model(model["path"])
    raise ValidationError(f"unknown model kind {kind!r}")


# ---------------------------------------------------------------------------
# commands

def cmd_synth(args):
    config = load_config(args.config, args.seed)
    out = args.out
    os.makedirs(out, exist_ok=True)
    template = _build_template(config)
    profile = synth.ClothingProfile.from_dict(config["clothing"])

    params, body, outer, offsets = synth.synth_scan(template, profile, config["seed"])
    markers = tightness.select_markers(template.mesh(), config["n_markers"],
                                       seed=config["seed"])

    bm.save_model(os.path.join(out, "template.json"), template)
    tightness.save_markers(os.path.join(out, "markers.json"), markers)
    meshgeo.write_obj(os.path.join(out, "body.obj"), body)
    meshgeo.write_obj(os.path.join(out, "scan.obj"), outer)
    _write_json(os.path.join(out, "gt_params.json"), params.to_dict())
    _write_json(os.path.join(out, "experiment.json"), config)
    print(f"synth: wrote scan ({outer.n_faces} faces, "
          f"mean offset {offsets.mean():.4f} m) to {out}")
    return EXIT_OK


def cmd_prep(args):
    config = load_config(args.config, args.seed)
    scan = meshgeo.read_obj(args.scan)
    body = meshgeo.read_obj(args.body)
    markers = tightness.load_markers(args.markers)
    rate = config["lambda"]

    anchors, corr = tightness.build_correspondence(
        body, scan, n_inner=config["n_inner"], n_scatter=config["n_scatter"],
        geo_threshold=config["geo_threshold"], seed=config["seed"])
    field = tightness.ground_truth_field(corr, body, markers, rate=rate)

    n_geo = int(corr.via_geodesic.sum())
    n_euc = int(len(corr.scatter) - n_geo)
    header = {
        "lambda": rate,
        "K": len(markers),
        "seed": config["seed"],
        "n_inner": config["n_inner"],
        "n_scatter": config["n_scatter"],
        "geo_threshold": config["geo_threshold"],
        "anchors": int(len(anchors)),
        "geodesic_count": n_geo,
        "euclidean_count": n_euc,
        "kind": "ground_truth",
    }
    tightness.save_field(args.out, field, header)
    print(f"prep: {len(field)} points, {n_geo} geodesic / {n_euc} euclidean, "
          f"{len(anchors)} anchors -> {args.out}")
    return EXIT_OK


def cmd_predict(args):
    config = load_config(args.config, args.seed)
    field, header = tightness.load_field(args.field)
    noise_dict = dict(config["noise"])
    for key in ("angle_sigma", "magnitude_sigma", "label_flip_prob",
                "confidence_sigma"):
        value = getattr(args, key, None)
        if value is not None:
            noise_dict[key] = value
    noise = tightness.NoiseConfig.from_dict(noise_dict)

    neighbors = None
    if noise.label_flip_prob > 0:
        if not (args.body and args.markers):
            raise ValidationError(
                "label flips need --body and --markers for marker adjacency")
        body = meshgeo.read_obj(args.body)
        markers = tightness.load_markers(args.markers)
        neighbors = tightness.marker_neighbors(body, markers)
    pred = tightness.oracle_predict(field, noise, seed=config["seed"],
                                    neighbors=neighbors)
    header = dict(header)
    header.update({"kind": "oracle_prediction", "noise": noise.to_dict(),
                   "noise_seed": config["seed"]})
    tightness.save_field(args.out, pred, header)
    print(f"predict: noise {noise.to_dict()} -> {args.out}")
    return EXIT_OK


def cmd_fit(args):
    config = load_config(args.config, args.seed)
    scan = meshgeo.read_obj(args.scan)
    field, header = tightness.load_field(args.field)
    template = bm.load_model(args.template)
    markers = tightness.load_markers(args.markers)
    fit_config = fitting.FitConfig.from_dict(config["fit"])

    scatter = tightness.scatter_samples(scan, int(header["n_scatter"]),
                                        int(header["seed"]))
    if len(scatter) != len(field):
        raise ValidationError("field length does not match its header's n_scatter")

    t0 = time.perf_counter()
    targets, present = fitting.aggregate_markers(scatter.positions, field, fit_config)
    result = fitting.fit_body_to_markers(template, markers, targets,
                                         config=fit_config, present=present)
    wall = time.perf_counter() - t0
    refined = False
    if args.refine:
        params = fitting.chamfer_refine(template, result.params, scatter.positions,
                                        steps=config["refine_steps"],
                                        step_scale=config["refine_scale"])
        result = fitting.FitResult(params, result.residual_trace, result.converged,
                                   result.marker_rmse, result.stage_boundaries)
        refined = True

    fitting.save_fit_result(args.out, result)
    if args.mesh_out:
        meshgeo.write_obj(args.mesh_out,
                          template.mesh(bm.pose_mesh(template, result.params)))
    print(f"fit: rmse {result.marker_rmse:.6f} m over {int(present.sum())} markers, "
          f"{len(result.residual_trace) - 1} iterations, refined={refined}, "
          f"wall {wall:.2f}s -> {args.out}")
    return EXIT_OK


def cmd_eval(args):
    template = bm.load_model(args.template)
    result = fitting.load_fit_result(args.fit_result)
    gt_params = bm.BodyParams.from_dict(_read_json(args.gt_params))

    pred_vertices = bm.pose_mesh(template, result.params)
    gt_vertices = bm.pose_mesh(template, gt_params)
    report = metrics.MetricReport(
        v2v_cm=metrics.v2v(pred_vertices, gt_vertices),
        mpjpe_cm=metrics.mpjpe(bm.posed_joints(template, result.params),
                               bm.posed_joints(template, gt_params)),
        shape_mae=metrics.shape_mae(result.params.beta, gt_params.beta),
    )

    if args.field and args.gt_field and args.scan:
        scan = meshgeo.read_obj(args.scan)
        field, header = tightness.load_field(args.field)
        gt_field, _ = tightness.load_field(args.gt_field)
        report.angular_mean, report.angular_median = metrics.angular_error(
            field.directions, gt_field.directions)
        scatter = tightness.scatter_samples(scan, int(header["n_scatter"]),
                                            int(header["seed"]))
        inner_cloud = scatter.positions + field.vectors()
        gt_samples = meshgeo.sample_surface(template.mesh(gt_vertices), len(inner_cloud),
                                            seed=int(header["seed"]))
        report.chamfer_cm = metrics.chamfer_bidirectional(inner_cloud,
                                                          gt_samples.positions)

    report.save(args.out)
    if args.plots:
        _write_plots(args.plots, result, pred_vertices, gt_vertices)
    line = ", ".join(f"{k}={v:.4f}" for k, v in report.to_dict().items()
                     if not isinstance(v, list) and np.isfinite(v))
    print(f"eval: {line} -> {args.out}")
    return EXIT_OK


def _write_plots(prefix, result, pred_vertices, gt_vertices):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3))
    ax.semilogy(result.residual_trace)
    for b in result.stage_boundaries:
        ax.axvline(b, color="gray", lw=0.5, ls="--")
    ax.set_xlabel("iteration")
    ax.set_ylabel("sum of squared marker residuals")
    fig.tight_layout()
    fig.savefig(f"{prefix}_trace.svg")
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(5, 3))
    err = np.linalg.norm(pred_vertices - gt_vertices, axis=1) * 100.0
    ax.hist(err, bins=40)
    ax.set_xlabel("per-vertex error (cm)")
    ax.set_ylabel("count")
    fig.tight_layout()
    fig.savefig(f"{prefix}_hist.svg")
    plt.close(fig)


def cmd_equivtest(args):
    rng = np.random.default_rng(args.seed)
    points = rng.normal(size=(args.n_points, 3))
    points /= np.linalg.norm(points, axis=1, keepdims=True)
    points *= 0.5 * rng.random((args.n_points, 1)) ** (1.0 / 3.0)

    group = groupequiv.icosahedral_group()
    if args.corrupt_table:
        cayley = group.cayley.copy()
        cayley[1, 2] = (cayley[1, 2] + 1) % 60  # negative-control hook
        group = groupequiv.RotationGroup(group.elements, cayley, group.inverse)
    if args.dump:
        groupequiv.dump_group_json(args.dump, group)

    feature = groupequiv.equiv_descriptor(points, group=group)
    pooled = groupequiv.invariant_pool(feature).values
    weights = groupequiv.score_weights(feature)
    base_rot = np.stack([groupequiv.average_rotation(w, group) for w in weights])
    base_dir = np.einsum("nab,b->na", base_rot, groupequiv.DEFAULT_SEED_VECTOR)

    worst = np.zeros(len(group))
    for g in range(len(group)):
        perm = groupequiv.group_permutation(group, g)
        rotated = points @ group.elements[g].T
        feat_g = groupequiv.equiv_descriptor(rotated, group=group)
        dev_perm = np.abs(feat_g.values - feature.values[:, perm, :]).max()
        dev_pool = np.abs(groupequiv.invariant_pool(feat_g).values - pooled).max()
        dir_g = np.stack([
            groupequiv.decode_direction(groupequiv.average_rotation(w, group))
            for w in groupequiv.score_weights(feat_g)])
        dev_dir = np.abs(dir_g - base_dir @ group.elements[g].T).max()
        worst[g] = max(dev_perm, dev_pool, dev_dir)
        print(f"element {g:2d}: max deviation {worst[g]:.3e}")

    ok = worst.max() <= args.tolerance
    print(f"equivtest: {'PASS' if ok else 'FAIL'} "
          f"(worst {worst.max():.3e}, tolerance {args.tolerance:.1e})")
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_pipeline(args):
    config = load_config(args.config, args.seed)
    out = args.out
    os.makedirs(out, exist_ok=True)

    runs = []
    if args.count == 1:
        runs.append((config["seed"], out))
    else:
        for i in range(args.count):
            runs.append((config["seed"] + i, os.path.join(out, f"run_{i:03d}")))

    if args.jobs > 1 and len(runs) > 1:
        import multiprocessing as mp

        ctx = mp.get_context("spawn")
        with ctx.Pool(args.jobs) as pool:
            rows = pool.starmap(_pipeline_one,
                                [(args, config, seed, rundir) for seed, rundir in runs])
    else:
        rows = [_pipeline_one(args, config, seed, rundir) for seed, rundir in runs]

    if args.count > 1:
        metrics.write_report_csv(os.path.join(out, "batch.csv"),
                                 rows, keys=sorted(rows[0].keys()))
    _write_json(os.path.join(out, "summary.json"), {"runs": rows})
    print(f"pipeline: {len(rows)} run(s) -> {out}")
    return EXIT_OK


def _pipeline_one(args, config, seed, rundir):
    os.makedirs(rundir, exist_ok=True)
    config = dict(config)
    config["seed"] = seed
    cfg_path = os.path.join(rundir, "config.json")
    _write_json(cfg_path, config)

    ns = argparse.Namespace(config=cfg_path, seed=None, out=rundir)
    cmd_synth(ns)

    ns = argparse.Namespace(
        config=cfg_path, seed=None,
        scan=os.path.join(rundir, "scan.obj"), body=os.path.join(rundir, "body.obj"),
        markers=os.path.join(rundir, "markers.json"),
        out=os.path.join(rundir, "field_gt.json"))
    cmd_prep(ns)

    ns = argparse.Namespace(
        config=cfg_path, seed=None, field=os.path.join(rundir, "field_gt.json"),
        body=os.path.join(rundir, "body.obj"),
        markers=os.path.join(rundir, "markers.json"),
        out=os.path.join(rundir, "field_pred.json"),
        angle_sigma=None, magnitude_sigma=None, label_flip_prob=None,
        confidence_sigma=None)
    cmd_predict(ns)

    ns = argparse.Namespace(
        config=cfg_path, seed=None, scan=os.path.join(rundir, "scan.obj"),
        field=os.path.join(rundir, "field_pred.json"),
        template=os.path.join(rundir, "template.json"),
        markers=os.path.join(rundir, "markers.json"),
        out=os.path.join(rundir, "fit_result.json"),
        mesh_out=os.path.join(rundir, "fitted.obj"), refine=args.refine)
    cmd_fit(ns)

    ns = argparse.Namespace(
        template=os.path.join(rundir, "template.json"),
        fit_result=os.path.join(rundir, "fit_result.json"),
        gt_params=os.path.join(rundir, "gt_params.json"),
        field=os.path.join(rundir, "field_pred.json"),
        gt_field=os.path.join(rundir, "field_gt.json"),
        scan=os.path.join(rundir, "scan.obj"),
        out=os.path.join(rundir, "report.json"),
        plots=os.path.join(rundir, "report") if args.plots else None)
    cmd_eval(ns)

    report = metrics.MetricReport.load(os.path.join(rundir, "report.json"))
    row = {"seed": seed}
    row.update({k: v for k, v in report.to_dict().items() if not isinstance(v, list)})
    return row


# ---------------------------------------------------------------------------
# argument parsing

def build_parser():
    parser = argparse.ArgumentParser(
        prog="tightfit",
        description="Tightness-field body fitting: synthetic scans, ground-truth "
                    "fields, marker aggregation, damped Gauss-Newton fitting.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic clothed scan")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prep", help="build the ground-truth tightness field")
    p.add_argument("--scan", required=True)
    p.add_argument("--body", required=True)
    p.add_argument("--markers", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("predict", help="noisy oracle standing in for a trained net")
    p.add_argument("--field", required=True)
    p.add_argument("--body", default=None)
    p.add_argument("--markers", default=None)
    p.add_argument("--angle-sigma", dest="angle_sigma", type=float, default=None)
    p.add_argument("--magnitude-sigma", dest="magnitude_sigma", type=float, default=None)
    p.add_argument("--label-flip-prob", dest="label_flip_prob", type=float, default=None)
    p.add_argument("--confidence-sigma", dest="confidence_sigma", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("fit", help="aggregate markers and fit the body")
    p.add_argument("--scan", required=True)
    p.add_argument("--field", required=True)
    p.add_argument("--template", required=True)
    p.add_argument("--markers", required=True)
    p.add_argument("--refine", action="store_true")
    p.add_argument("--mesh-out", dest="mesh_out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="metric report and plots")
    p.add_argument("--template", required=True)
    p.add_argument("--fit-result", dest="fit_result", required=True)
    p.add_argument("--gt-params", dest="gt_params", required=True)
    p.add_argument("--field", default=None)
    p.add_argument("--gt-field", dest="gt_field", default=None)
    p.add_argument("--scan", default=None)
    p.add_argument("--plots", default=None, help="SVG path prefix")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("equivtest", help="exact discrete-equivariance self-test")
    p.add_argument("--n-points", dest="n_points", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-9)
    p.add_argument("--corrupt-table", dest="corrupt_table", action="store_true",
                   help="negative control: corrupt the Cayley table")
    p.add_argument("--dump", default=None, help="write group elements as JSON")
    p.set_defaults(func=cmd_equivtest)

    p = sub.add_parser("pipeline", help="synth + prep + predict + fit + eval")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--refine", action="store_true")
    p.add_argument("--plots", action="store_true")
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, FileNotFoundError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def console_main():
    sys.exit(main())


if __name__ == "__main__":
    console_main()
