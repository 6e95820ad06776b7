"""Pothole detection from dense stereo disparity imagery.

The pipeline flattens road disparities with a fitted roll-aware projection
model, separates likely road from damage by histogram thresholding, fits a
robust quadratic surface to the road, and extracts damage from the residual
between measured and modelled values.
"""

from . import errors
from .datasets import DatasetSample, load_dataset
from .imaging import (
    CameraModel,
    DamageMask,
    DisparityImage,
    GrayImage,
    PixelCoord,
    load_disparity,
    load_mask,
    median_filter,
    save_mask,
    save_raster,
)
from .metrics import EvalReport, evaluate, mean_report, read_metrics_csv, write_metrics_csv
from .pipeline import PipelineConfig, detect_potholes, load_config
from .roadmodel import (
    RoadDisparityModel,
    RoadSamples,
    VDisparityMap,
    build_v_disparity,
    fit_model,
    fit_roll_angle,
    load_model,
    predict_road_disparity,
    roll_energy,
    save_model,
    transform_disparity,
)
from .segmentation import (
    IntensityHistogram,
    RegionStats,
    ThresholdResult,
    connected_components,
    filter_min_area,
    histogram,
    label_mask,
    morphological_open,
    otsu_threshold,
    segment_below,
    triangle_threshold,
)
from .surface import (
    FitReport,
    Point3,
    PointCloud3D,
    QuadraticSurface,
    RansacConfig,
    assemble_normal_equations,
    disparity_to_pointcloud,
    evaluate_surface,
    extract_damage,
    fit_quadratic_surface,
    ransac_fit,
    read_ply,
    write_fit_report,
    write_ply,
)
from .synth import (
    PotholeSpec,
    SceneSpec,
    SceneTruth,
    generate_scene,
    oracle_planar_fit,
    oracle_quadratic_fit,
)

__version__ = "0.1.0"

__all__ = [
    "CameraModel", "DamageMask", "DatasetSample", "DisparityImage", "EvalReport",
    "FitReport", "GrayImage", "IntensityHistogram", "PipelineConfig", "PixelCoord",
    "Point3", "PointCloud3D", "PotholeSpec", "QuadraticSurface", "RansacConfig",
    "RegionStats", "RoadDisparityModel", "RoadSamples", "SceneSpec", "SceneTruth",
    "ThresholdResult", "VDisparityMap", "assemble_normal_equations",
    "build_v_disparity", "connected_components", "detect_potholes",
    "disparity_to_pointcloud", "errors", "evaluate", "evaluate_surface",
    "extract_damage", "filter_min_area", "fit_model", "fit_quadratic_surface",
    "fit_roll_angle", "generate_scene", "histogram", "label_mask", "load_config",
    "load_dataset", "load_disparity", "load_mask", "load_model", "mean_report",
    "median_filter", "morphological_open", "oracle_planar_fit",
    "oracle_quadratic_fit", "otsu_threshold", "predict_road_disparity",
    "ransac_fit", "read_metrics_csv", "read_ply", "roll_energy", "save_mask",
    "save_model", "save_raster", "segment_below", "transform_disparity",
    "triangle_threshold", "write_fit_report", "write_metrics_csv", "write_ply",
]
