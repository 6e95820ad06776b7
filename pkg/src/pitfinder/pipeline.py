"""End-to-end pothole detection workflow and its configuration.

The detection recipe: flatten the disparity image with the fitted road
model, threshold the flattened raster to find likely undamaged road,
robustly fit a quadratic surface to the original disparities of that road
mask, then flag pixels whose measured disparity falls short of the fitted
surface.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import DegenerateHistogramError, EmptyRoadMaskError
from .imaging import CameraModel, DamageMask, DisparityImage
from .roadmodel import RoadDisparityModel, RoadSamples, fit_model, transform_disparity
from .segmentation import (
    DEFAULT_MIN_REGION_AREA,
    histogram,
    otsu_threshold,
    triangle_threshold,
)
from .surface import (
    DEFAULT_TAU_IMAGE,
    FRAME_IMAGE,
    FitReport,
    RansacConfig,
    extract_damage,
    ransac_fit,
)

THRESHOLD_METHODS = ("otsu", "triangle")
POLARITIES = ("below", "above", "both")


@dataclass
class PipelineConfig:
    """Tunable parameters of the detection pipeline.

    ``tau`` is the damage threshold in the image frame (disparity pixels);
    the metric threshold applies only when a camera model routes processing
    through the point cloud.
    """

    disparity_scale: float | None = None  # None: pick by raster bit depth
    invalid_value: int = 0
    fit_stride: int = 1
    histogram_bins: int = 256
    threshold_method: str = "otsu"
    tau: float = DEFAULT_TAU_IMAGE
    polarity: str = "below"
    min_region_area: int = DEFAULT_MIN_REGION_AREA
    open_radius: int = 1
    ransac: RansacConfig = field(
        default_factory=lambda: RansacConfig(inlier_threshold=DEFAULT_TAU_IMAGE)
    )
    camera: CameraModel | None = None

    def __post_init__(self):
        if self.threshold_method not in THRESHOLD_METHODS:
            raise ValueError(f"threshold_method must be one of {THRESHOLD_METHODS}")
        if self.polarity not in POLARITIES:
            raise ValueError(f"polarity must be one of {POLARITIES}")
        if self.fit_stride < 1:
            raise ValueError("fit_stride must be >= 1")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.min_region_area < 0 or self.open_radius < 0:
            raise ValueError("min_region_area and open_radius must be >= 0")


def detect_potholes(disp: DisparityImage,
                    cfg: PipelineConfig | None = None
                    ) -> tuple[DamageMask, RoadDisparityModel, FitReport]:
    """Run the full detection pipeline on one disparity image.

    Returns the damage mask, the fitted road-disparity model (with its
    non-negativity offset), and the robust surface-fit report.
    """
    if cfg is None:
        cfg = PipelineConfig()
    samples = RoadSamples.from_disparity(disp, stride=cfg.fit_stride)
    model = fit_model(samples)
    transformed, model = transform_disparity(disp, model)

    hist = histogram(transformed, mask=disp.valid, bins=cfg.histogram_bins)
    pick = otsu_threshold if cfg.threshold_method == "otsu" else triangle_threshold
    try:
        thr = pick(hist)
        road = disp.valid & (transformed.values >= thr.threshold)
    except DegenerateHistogramError:
        # Flat transformed raster: everything is road, nothing to split off.
        road = disp.valid.copy()
    if int(road.sum()) < 6:
        raise EmptyRoadMaskError(
            f"road mask keeps {int(road.sum())} pixels; cannot fit a surface"
        )

    vv, uu = np.nonzero(road)
    report = ransac_fit(uu, vv, disp.values[vv, uu], cfg.ransac, frame=FRAME_IMAGE)
    mask = extract_damage(
        disp, report.surface, tau=cfg.tau, polarity=cfg.polarity,
        open_radius=cfg.open_radius, min_area=cfg.min_region_area,
    )
    return mask, model, report


_BOOLS = {"true": True, "false": False, "yes": True, "no": False, "1": True, "0": False}


def _coerce(value: str, target_type):
    if target_type is int:
        return int(value)
    if target_type is float:
        return float(value)
    if target_type is bool:
        return _BOOLS[value.lower()]
    return value


_CONFIG_KEYS = {
    "disparity_scale": float,
    "invalid_value": int,
    "fit_stride": int,
    "histogram_bins": int,
    "threshold_method": str,
    "tau": float,
    "polarity": str,
    "min_region_area": int,
    "open_radius": int,
    "ransac_max_iterations": int,
    "ransac_inlier_threshold": float,
    "ransac_confidence": float,
    "ransac_min_sample": int,
    "ransac_seed": int,
    "camera_focal_length": float,
    "camera_baseline": float,
    "camera_cx": float,
    "camera_cy": float,
    "camera_disparity_scale": float,
}


def parse_config_text(text: str) -> dict:
    """Parse `key = value` lines (utf-8, # comments) into typed values."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not sep or not key or not value:
            raise ValueError(f"config line {lineno}: expected `key = value`, got {raw!r}")
        if key not in _CONFIG_KEYS:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        out[key] = _coerce(value, _CONFIG_KEYS[key])
    return out


def config_from_values(values: dict, base: PipelineConfig | None = None) -> PipelineConfig:
    """Apply flat key/value overrides on top of a base config."""
    cfg = base if base is not None else PipelineConfig()
    plain = {f.name for f in fields(PipelineConfig)} - {"ransac", "camera"}
    cfg_kwargs = {}
    ransac_kwargs = {}
    camera_kwargs = {}
    for key, value in values.items():
        if value is None:
            continue
        if key in plain:
            cfg_kwargs[key] = value
        elif key.startswith("ransac_"):
            ransac_kwargs[key[len("ransac_"):]] = value
        elif key.startswith("camera_"):
            camera_kwargs[key[len("camera_"):]] = value
        else:
            raise ValueError(f"unknown config key {key!r}")
    if ransac_kwargs:
        cfg_kwargs["ransac"] = replace(cfg.ransac, **ransac_kwargs)
    if camera_kwargs:
        cx = camera_kwargs.pop("cx", cfg.camera.principal_point[0] if cfg.camera else 0.0)
        cy = camera_kwargs.pop("cy", cfg.camera.principal_point[1] if cfg.camera else 0.0)
        base_cam = cfg.camera or CameraModel(focal_length=1.0, baseline=1.0)
        camera_kwargs.setdefault("focal_length", base_cam.focal_length)
        camera_kwargs.setdefault("baseline", base_cam.baseline)
        camera_kwargs.setdefault("disparity_scale", base_cam.disparity_scale)
        cfg_kwargs["camera"] = CameraModel(principal_point=(cx, cy), **camera_kwargs)
    return replace(cfg, **cfg_kwargs)


def load_config(path) -> PipelineConfig:
    """Read a pipeline configuration file."""
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_values(parse_config_text(fh.read()))
