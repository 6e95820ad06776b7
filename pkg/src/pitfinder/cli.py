"""Command-line interface.

Subcommands: transform, fit-surface, detect, eval, synth, batch.
Exit codes: 0 success, 1 processing error, 2 usage error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import LAYOUTS, load_dataset
from .errors import PitfinderError
from .imaging import load_disparity, load_mask, save_mask, save_raster
from .metrics import evaluate, mean_report, read_metrics_csv, write_metrics_csv
from .pipeline import (
    PipelineConfig,
    config_from_values,
    detect_potholes,
    load_config,
)
from .roadmodel import RoadSamples, build_v_disparity, fit_model, save_model, transform_disparity
from .surface import (
    FRAME_IMAGE,
    FRAME_METRIC,
    disparity_to_pointcloud,
    ransac_fit,
    read_ply,
    write_fit_report,
    write_ply,
)
from .synth import PotholeSpec, SceneSpec, generate_scene

log = logging.getLogger("pitfinder")


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="pipeline config file (key = value lines)")
    p.add_argument("--scale", type=float, dest="disparity_scale",
                   help="raw units per disparity pixel")
    p.add_argument("--invalid-value", type=int, dest="invalid_value",
                   help="raw value marking unmeasured pixels")
    p.add_argument("--stride", type=int, dest="fit_stride",
                   help="pixel stride for road-model sampling")
    p.add_argument("--threshold-method", choices=("otsu", "triangle"),
                   dest="threshold_method")
    p.add_argument("--tau", type=float, help="damage threshold (disparity px)")
    p.add_argument("--polarity", choices=("below", "above", "both"))
    p.add_argument("--min-area", type=int, dest="min_region_area",
                   help="drop damage regions smaller than this (px)")
    p.add_argument("--open-radius", type=int, dest="open_radius")
    p.add_argument("--seed", type=int, dest="ransac_seed",
                   help="seed for all randomized steps")
    p.add_argument("--ransac-iterations", type=int, dest="ransac_max_iterations")
    p.add_argument("--inlier-threshold", type=float, dest="ransac_inlier_threshold")
    p.add_argument("--confidence", type=float, dest="ransac_confidence")


_CONFIG_ARG_KEYS = (
    "disparity_scale", "invalid_value", "fit_stride", "threshold_method", "tau",
    "polarity", "min_region_area", "open_radius", "ransac_seed",
    "ransac_max_iterations", "ransac_inlier_threshold", "ransac_confidence",
)


def _build_config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    overrides = {k: getattr(args, k, None) for k in _CONFIG_ARG_KEYS}
    return config_from_values({k: v for k, v in overrides.items() if v is not None}, cfg)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pitfinder",
        description="Detect road potholes in dense disparity images",
    )
    parser.add_argument("--version", action="version", version=f"pitfinder {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transform", help="flatten a disparity image with the road model")
    p.add_argument("--disparity", required=True)
    p.add_argument("--out", required=True, help="output 16-bit raster")
    p.add_argument("--model", help="model sidecar path (default: <out>.model.txt)")
    p.add_argument("--figure", help="write a v-disparity figure here")
    _add_config_args(p)
    p.set_defaults(handler=_cmd_transform)

    p = sub.add_parser("fit-surface", help="robustly fit a quadratic road surface")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--disparity")
    src.add_argument("--ply")
    p.add_argument("--report", required=True, help="output fit-report text file")
    p.add_argument("--export-ply", help="also export the input cloud as PLY")
    _add_config_args(p)
    p.set_defaults(handler=_cmd_fit_surface)

    p = sub.add_parser("detect", help="detect potholes in one disparity image")
    p.add_argument("--disparity", required=True)
    p.add_argument("--out", required=True, help="output mask raster")
    p.add_argument("--figure", help="write detection panels here")
    _add_config_args(p)
    p.set_defaults(handler=_cmd_detect)

    p = sub.add_parser("eval", help="score predicted masks against ground truth")
    p.add_argument("--pred", required=True, help="directory of predicted masks")
    p.add_argument("--gt", required=True, help="directory of ground-truth masks")
    p.add_argument("--out", required=True, help="output metrics CSV")
    p.add_argument("--no-figures", action="store_true",
                   help="skip the chart rendered next to the CSV")
    p.set_defaults(handler=_cmd_eval)

    p = sub.add_parser("synth", help="generate synthetic disparity scenes")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--scenes", type=int, default=10)
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--height", type=int, default=240)
    p.add_argument("--sigma", type=float, default=0.3, help="disparity noise (px)")
    p.add_argument("--roll", type=float, action="append",
                   help="roll angle(s) in radians, cycled across scenes")
    p.add_argument("--depth", type=float, default=6.0, help="pothole depth (px)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=_cmd_synth)

    p = sub.add_parser("batch", help="detect over a dataset and score the results")
    p.add_argument("--dataset", required=True)
    p.add_argument("--layout", choices=LAYOUTS, default="flat-pairs")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-figures", action="store_true")
    _add_config_args(p)
    p.set_defaults(handler=_cmd_batch)

    return parser


def _cmd_transform(args) -> int:
    cfg = _build_config(args)
    disp = load_disparity(args.disparity, scale=cfg.disparity_scale,
                          invalid_value=cfg.invalid_value)
    samples = RoadSamples.from_disparity(disp, stride=cfg.fit_stride)
    model = fit_model(samples)
    transformed, model = transform_disparity(disp, model)
    # 65535 marks invalid pixels; valid flattened values stay clear of it.
    save_raster(transformed.values, args.out, scale=256.0,
                valid=disp.valid, invalid_value=65535)
    model_path = args.model or f"{args.out}.model.txt"
    save_model(model, model_path)
    if args.figure:
        from .figures import save_v_disparity_figure
        vmap = build_v_disparity(disp, bin_width=0.5)
        save_v_disparity_figure(vmap, args.figure, model=model, column=disp.width / 2)
    print(f"transform: wrote {args.out} and {model_path} "
          f"(phi={model.phi:.6g} rad, lambda={model.lam:.6g} px)")
    return 0


def _cmd_fit_surface(args) -> int:
    cfg = _build_config(args)
    if args.ply:
        x, y, z = read_ply(args.ply)
        report = ransac_fit(x, z, y, cfg.ransac, frame=FRAME_METRIC)
        cloud = None
    else:
        disp = load_disparity(args.disparity, scale=cfg.disparity_scale,
                              invalid_value=cfg.invalid_value)
        if cfg.camera is not None:
            cloud = disparity_to_pointcloud(disp, cfg.camera)
            report = ransac_fit(cloud.x, cloud.z, cloud.y, cfg.ransac,
                                frame=FRAME_METRIC)
        else:
            samples = RoadSamples.from_disparity(disp, stride=cfg.fit_stride)
            report = ransac_fit(samples.u, samples.v, samples.g, cfg.ransac,
                                frame=FRAME_IMAGE)
            cloud = None
    write_fit_report(report, args.report)
    if args.export_ply and cloud is not None:
        write_ply(cloud, args.export_ply)
    print(f"fit-surface: {report.inlier_count}/{report.inliers.size} inliers, "
          f"rms {report.rms_residual:.6g}, report {args.report}")
    return 0


def _cmd_detect(args) -> int:
    cfg = _build_config(args)
    disp = load_disparity(args.disparity, scale=cfg.disparity_scale,
                          invalid_value=cfg.invalid_value)
    mask, model, report = detect_potholes(disp, cfg)
    save_mask(mask, args.out)
    save_model(model, f"{args.out}.model.txt")
    write_fit_report(report, f"{args.out}.surface.txt")
    if args.figure:
        from .figures import save_detection_panels
        transformed, _ = transform_disparity(disp, model)
        save_detection_panels(disp, transformed, mask, args.figure)
    print(f"detect: {mask.region_count} damage regions, "
          f"{int(mask.damaged.sum())} px -> {args.out}")
    return 0


def _collect_masks(root: Path) -> dict[str, Path]:
    return {
        str(p.relative_to(root).with_suffix("")): p
        for p in sorted(root.rglob("*"))
        if p.is_file() and p.suffix.lower() in (".png", ".pgm", ".tif", ".tiff", ".bmp")
    }


def _cmd_eval(args) -> int:
    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    preds = _collect_masks(pred_dir)
    gts = _collect_masks(gt_dir)
    shared = sorted(set(preds) & set(gts))
    for missing in sorted(set(preds) ^ set(gts)):
        log.warning("unpaired mask skipped: %s", missing)
    if not shared:
        raise PitfinderError("no prediction/ground-truth pairs found")
    reports = [evaluate(load_mask(preds[s]), load_mask(gts[s]), image_id=s)
               for s in shared]
    _write_reports(reports, Path(args.out), not args.no_figures)
    return 0


def _write_reports(reports, csv_path: Path, figures: bool) -> None:
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(reports, csv_path)
    mean = mean_report(reports)
    if figures:
        from .figures import save_metrics_chart
        save_metrics_chart(reports, csv_path.with_suffix(".png"))
    print(f"eval: {len(reports)} images, mean IoU {mean.iou:.6f}, "
          f"mean F {mean.f_score:.6f} -> {csv_path}")


def _cmd_synth(args) -> int:
    out = Path(args.out)
    (out / "disparity").mkdir(parents=True, exist_ok=True)
    (out / "label").mkdir(parents=True, exist_ok=True)
    (out / "truth").mkdir(parents=True, exist_ok=True)
    rolls = args.roll if args.roll else [0.0, 0.05]
    w, h = args.width, args.height
    varkappa = 0.05
    # Keep disparity positive at 8 sigma below the deepest pothole floor.
    max_roll = max(abs(r) for r in rolls)
    margin = 8.0 * args.sigma
    floor_at_pothole = ((args.depth + margin) / varkappa
                        + math.sin(max_roll) * (w - 1)
                        - math.cos(max_roll) * 0.41 * h)
    floor_global = margin / varkappa + math.sin(max_roll) * (w - 1)
    kappa = max(80.0, math.ceil(max(floor_at_pothole, floor_global)))
    for i in range(args.scenes):
        seed = args.seed + i
        rng = np.random.default_rng([seed, 0xD15B])
        jitter = rng.uniform(-0.04, 0.04, size=4)
        potholes = (
            PotholeSpec(center=((0.32 + jitter[0]) * w, (0.45 + jitter[1]) * h),
                        radius=math.sqrt(400.0 / math.pi), depth=args.depth),
            PotholeSpec(center=((0.66 + jitter[2]) * w, (0.62 + jitter[3]) * h),
                        radius=math.sqrt(900.0 / math.pi), depth=args.depth),
        )
        spec = SceneSpec(width=w, height=h, phi=rolls[i % len(rolls)],
                         kappa=kappa, varkappa=varkappa,
                         noise_sigma=args.sigma, potholes=potholes, seed=seed)
        truth = generate_scene(spec)
        stem = f"scene_{i:03d}"
        save_raster(truth.disparity.values, out / "disparity" / f"{stem}.png",
                    scale=256.0)
        save_raster(truth.gt_mask.astype(np.float64) * 255.0,
                    out / "label" / f"{stem}.png", scale=1.0, bit_depth=8)
        _write_truth(spec, out / "truth" / f"{stem}.txt")
    print(f"synth: wrote {args.scenes} scenes under {out}")
    return 0


def _write_truth(spec: SceneSpec, path: Path) -> None:
    lines = [
        f"phi_rad = {spec.phi:.17g}",
        f"kappa = {spec.kappa:.17g}",
        f"varkappa = {spec.varkappa:.17g}",
        f"noise_sigma = {spec.noise_sigma:.17g}",
        f"seed = {spec.seed}",
        f"width = {spec.width}",
        f"height = {spec.height}",
    ]
    for p in spec.potholes:
        lines.append(
            f"pothole = {p.center[0]:.17g} {p.center[1]:.17g} "
            f"{p.radius:.17g} {p.depth:.17g} {p.profile}"
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _batch_one(sample, cfg: PipelineConfig, out: Path):
    disp = load_disparity(sample.disparity_path, scale=cfg.disparity_scale,
                          invalid_value=cfg.invalid_value)
    mask, _, _ = detect_potholes(disp, cfg)
    mask_path = out / "masks" / f"{sample.id}.png"
    save_mask(mask, mask_path)
    gt = load_mask(sample.label_path)
    return evaluate(mask, gt, image_id=sample.id)


def _cmd_batch(args) -> int:
    cfg = _build_config(args)
    samples = load_dataset(args.dataset, layout=args.layout)
    if not samples:
        raise PitfinderError(f"no samples found under {args.dataset!r}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(lambda s: _batch_one(s, cfg, out), samples))
    else:
        reports = [_batch_one(s, cfg, out) for s in samples]
    _write_reports(reports, out / "metrics.csv", not args.no_figures)
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except (PitfinderError, OSError, ValueError) as exc:
        print(f"pitfinder: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
