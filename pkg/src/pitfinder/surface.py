"""3-D reconstruction, robust quadratic road-surface fitting, and residual
damage extraction.

The road surface is modelled as f(x, z) = a0 + a1*x + a2*z + a3*x^2 +
a4*z^2 + a5*x*z, fitted by least squares either in the metric camera frame
(x = X right, z = Z forward, height y = Y down) or directly in the image
frame (x = u, z = v, height y = disparity).  Damage is whatever sits beyond
a threshold from the fitted surface: potholes are deeper (larger Y) and
farther (smaller disparity) than the model predicts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateGeometryError,
    EmptySelectionError,
    FrameMismatchError,
    InsufficientPointsError,
    NoConsensusError,
)
from .imaging import CameraModel, DamageMask, DisparityImage
from .segmentation import DEFAULT_MIN_REGION_AREA, label_mask, morphological_open

FRAME_METRIC = "metric-xz"
FRAME_IMAGE = "image-uv"

DEFAULT_TAU_METRIC = 0.04   # metres; standard pothole point-cloud threshold
DEFAULT_TAU_IMAGE = 1.0     # pixels of disparity
DEFAULT_MIN_DISPARITY = 1.0  # caps depth-error amplification as g -> 0
MIN_SAMPLE = 6               # quadratic surface has six coefficients

_ORTHO_TOL = 1e-8


@dataclass(frozen=True)
class Point3:
    """Metric point in the camera frame: X right, Y down, Z forward."""

    x: float
    y: float
    z: float


@dataclass(frozen=True)
class PointCloud3D:
    """Metric road points in the camera frame, with their source pixels."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    pixel_u: np.ndarray
    pixel_v: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        arrays = [np.asarray(a, dtype=np.float64).ravel() for a in (self.x, self.y, self.z)]
        pu = np.asarray(self.pixel_u, dtype=np.int64).ravel()
        pv = np.asarray(self.pixel_v, dtype=np.int64).ravel()
        n = arrays[0].size
        if any(a.size != n for a in arrays) or pu.size != n or pv.size != n:
            raise ValueError("point cloud arrays must share one length")
        object.__setattr__(self, "x", arrays[0])
        object.__setattr__(self, "y", arrays[1])
        object.__setattr__(self, "z", arrays[2])
        object.__setattr__(self, "pixel_u", pu)
        object.__setattr__(self, "pixel_v", pv)

    def __len__(self) -> int:
        return self.x.size

    def point(self, i: int) -> Point3:
        return Point3(float(self.x[i]), float(self.y[i]), float(self.z[i]))


@dataclass(frozen=True)
class QuadraticSurface:
    """Six-coefficient surface y = f(x, z) plus the frame it was fitted in.

    Coefficients are stored in the original (de-conditioned) frame;
    ``center``/``scale`` record the conditioning applied while solving.
    """

    a: np.ndarray
    frame: str = FRAME_METRIC
    center: tuple[float, float] = (0.0, 0.0)
    scale: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64).ravel()
        if a.size != 6 or not np.all(np.isfinite(a)):
            raise ValueError("surface needs six finite coefficients")
        if self.frame not in (FRAME_METRIC, FRAME_IMAGE):
            raise ValueError(f"unknown frame {self.frame!r}")
        if min(self.scale) <= 0:
            raise ValueError("conditioning scale must be positive")
        object.__setattr__(self, "a", a)

    def evaluate(self, x, z):
        x = np.asarray(x, dtype=np.float64)
        z = np.asarray(z, dtype=np.float64)
        a = self.a
        return a[0] + a[1] * x + a[2] * z + a[3] * x * x + a[4] * z * z + a[5] * x * z


@dataclass(frozen=True)
class RansacConfig:
    """Hypothesize-and-verify settings for robust surface fitting."""

    max_iterations: int = 1000
    inlier_threshold: float = DEFAULT_TAU_METRIC
    confidence: float = 0.999
    min_sample: int = MIN_SAMPLE
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.confidence < 1.0):
            raise ValueError("confidence must be in (0, 1)")
        if self.inlier_threshold <= 0:
            raise ValueError("inlier_threshold must be positive")
        if self.min_sample < MIN_SAMPLE:
            raise ValueError(f"min_sample must be >= {MIN_SAMPLE}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class FitReport:
    """Robust-fit outcome: surface, final inlier flags, and fit quality."""

    surface: QuadraticSurface
    inliers: np.ndarray
    rms_residual: float
    iterations_used: int

    def __post_init__(self):
        object.__setattr__(self, "inliers", np.asarray(self.inliers, dtype=bool))

    @property
    def inlier_count(self) -> int:
        return int(np.count_nonzero(self.inliers))


def disparity_to_pointcloud(disp: DisparityImage, cam: CameraModel,
                            min_disparity: float = DEFAULT_MIN_DISPARITY) -> PointCloud3D:
    """Back-project valid pixels with g >= min_disparity into the camera frame.

    Z = f*b/g, X = (u - cx) * Z / f, Y = (v - cy) * Z / f, with Y pointing
    down so potholes have larger Y than the surrounding road.
    """
    if min_disparity <= 0:
        raise ValueError("min_disparity must be positive")
    keep = disp.valid & (disp.values >= min_disparity)
    vv, uu = np.nonzero(keep)
    if vv.size == 0:
        raise EmptySelectionError("no pixels at or above min_disparity")
    g = disp.values[vv, uu]
    f = cam.focal_length
    cx, cy = cam.principal_point
    z = f * cam.baseline / g
    x = (uu - cx) * z / f
    y = (vv - cy) * z / f
    return PointCloud3D(x, y, z, uu, vv, disp.width, disp.height)


def _design_matrix(x: np.ndarray, z: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones_like(x), x, z, x * x, z * z, x * z])


def assemble_normal_equations(x, z, y) -> tuple[np.ndarray, np.ndarray]:
    """Explicit power-sum assembly of the 6x6 normal equations M a = q.

    Every entry is a raw sum such as S_xz2 = sum(x * z^2); this duplicates
    the design-matrix product W'W / W'y term by term and exists as an
    independently-built cross-check of that path.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    z = np.asarray(z, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    k = float(x.size)
    s_x, s_z = x.sum(), z.sum()
    s_x2, s_z2, s_xz = (x * x).sum(), (z * z).sum(), (x * z).sum()
    s_x3, s_z3 = (x ** 3).sum(), (z ** 3).sum()
    s_x2z, s_xz2 = (x * x * z).sum(), (x * z * z).sum()
    s_x4, s_z4 = (x ** 4).sum(), (z ** 4).sum()
    s_x3z, s_xz3, s_x2z2 = (x ** 3 * z).sum(), (x * z ** 3).sum(), (x * x * z * z).sum()
    m = np.array([
        [k,     s_x,   s_z,   s_x2,   s_z2,   s_xz],
        [s_x,   s_x2,  s_xz,  s_x3,   s_xz2,  s_x2z],
        [s_z,   s_xz,  s_z2,  s_x2z,  s_z3,   s_xz2],
        [s_x2,  s_x3,  s_x2z, s_x4,   s_x2z2, s_x3z],
        [s_z2,  s_xz2, s_z3,  s_x2z2, s_z4,   s_xz3],
        [s_xz,  s_x2z, s_xz2, s_x3z,  s_xz3,  s_x2z2],
    ])
    q = np.array([
        y.sum(), (x * y).sum(), (y * z).sum(),
        (y * x * x).sum(), (y * z * z).sum(), (x * y * z).sum(),
    ])
    return m, q


def _decondition(b: np.ndarray, center, scale) -> np.ndarray:
    """Map coefficients fitted on (x-cx)/sx, (z-cz)/sz back to raw x, z."""
    cx, cz = center
    sx, sz = scale
    b0, b1, b2, b3, b4, b5 = b
    a = np.empty(6)
    a[0] = (b0 - b1 * cx / sx - b2 * cz / sz + b3 * cx * cx / (sx * sx)
            + b4 * cz * cz / (sz * sz) + b5 * cx * cz / (sx * sz))
    a[1] = b1 / sx - 2.0 * b3 * cx / (sx * sx) - b5 * cz / (sx * sz)
    a[2] = b2 / sz - 2.0 * b4 * cz / (sz * sz) - b5 * cx / (sx * sz)
    a[3] = b3 / (sx * sx)
    a[4] = b4 / (sz * sz)
    a[5] = b5 / (sx * sz)
    return a


def _recondition(a: np.ndarray, center, scale) -> np.ndarray:
    """Inverse of _decondition: express raw-frame coefficients on conditioned inputs."""
    cx, cz = center
    sx, sz = scale
    a0, a1, a2, a3, a4, a5 = a
    b = np.empty(6)
    b[0] = a0 + a1 * cx + a2 * cz + a3 * cx * cx + a4 * cz * cz + a5 * cx * cz
    b[1] = (a1 + 2.0 * a3 * cx + a5 * cz) * sx
    b[2] = (a2 + 2.0 * a4 * cz + a5 * cx) * sz
    b[3] = a3 * sx * sx
    b[4] = a4 * sz * sz
    b[5] = a5 * sx * sz
    return b


def fit_quadratic_surface(x, z, y, frame: str = FRAME_METRIC) -> QuadraticSurface:
    """Least-squares quadratic surface through (x, z, y) samples.

    Inputs are centered at their means and scaled by their standard
    deviations before solving the normal equations (raw fourth-power sums
    are numerically hostile); the returned coefficients are mapped back to
    the original frame.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    z = np.asarray(z, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if not (x.size == z.size == y.size):
        raise ValueError("x, z, y must have equal length")
    if x.size < MIN_SAMPLE:
        raise InsufficientPointsError(f"need at least {MIN_SAMPLE} points, got {x.size}")
    cx, cz = float(x.mean()), float(z.mean())
    sx = float(x.std()) or 1.0
    sz = float(z.std()) or 1.0
    xs = (x - cx) / sx
    zs = (z - cz) / sz
    w = _design_matrix(xs, zs)
    wtw = w.T @ w
    wty = w.T @ y
    try:
        b = np.linalg.solve(wtw, wty)
    except np.linalg.LinAlgError as exc:
        raise DegenerateGeometryError(f"normal equations singular: {exc}") from exc
    # Residual orthogonality certifies the solve; near-singular systems fail here.
    ortho = np.linalg.norm(w.T @ (y - w @ b))
    if not np.isfinite(ortho) or ortho > _ORTHO_TOL * (np.linalg.norm(y) + 1e-12):
        raise DegenerateGeometryError("point configuration too close to a conic degeneracy")
    return QuadraticSurface(
        a=_decondition(b, (cx, cz), (sx, sz)),
        frame=frame,
        center=(cx, cz),
        scale=(sx, sz),
    )


def evaluate_surface(s: QuadraticSurface, x, z):
    """Evaluate f(x, z) in the surface's own frame."""
    return s.evaluate(x, z)


def _exact_fit_6(x, z, y):
    w = _design_matrix(x, z)
    try:
        a = np.linalg.solve(w, y)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(a)):
        return None
    # Reject ill-conditioned interpolations that do not reproduce their own sample.
    if np.max(np.abs(w @ a - y)) > 1e-6 * (1.0 + np.max(np.abs(y))):
        return None
    return a


def ransac_fit(x, z, y, cfg: RansacConfig = RansacConfig(),
               frame: str = FRAME_METRIC) -> FitReport:
    """Robust quadratic fit: sample 6 points, score consensus, refit inliers.

    Iteration count adapts as log(1-confidence) / log(1-w^6) with w the best
    inlier ratio so far, capped by cfg.max_iterations.  Each iteration draws
    from a generator seeded by (cfg.seed, iteration), so results do not
    depend on scheduling or on how many iterations other runs used.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    z = np.asarray(z, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    n = x.size
    if n < cfg.min_sample:
        raise InsufficientPointsError(f"need at least {cfg.min_sample} points, got {n}")
    best_count = -1
    best_inliers = None
    needed = float(cfg.max_iterations)
    iteration = 0
    while iteration < cfg.max_iterations and iteration < needed:
        rng = np.random.default_rng([cfg.seed, iteration])
        idx = rng.choice(n, size=cfg.min_sample, replace=False)
        a = _exact_fit_6(x[idx], z[idx], y[idx])
        iteration += 1
        if a is None:
            continue
        resid = np.abs(y - QuadraticSurface(a, frame).evaluate(x, z))
        inliers = resid <= cfg.inlier_threshold
        count = int(np.count_nonzero(inliers))
        if count > best_count:
            best_count = count
            best_inliers = inliers
            ratio = count / n
            if ratio >= 1.0:
                needed = iteration
            else:
                p_sample = ratio ** cfg.min_sample
                if p_sample > 0.0:
                    needed = math.log(max(1.0 - cfg.confidence, 1e-300)) / math.log(1.0 - p_sample)
    if best_inliers is None or best_count < 2 * cfg.min_sample:
        raise NoConsensusError(
            f"best consensus {max(best_count, 0)} below {2 * cfg.min_sample} points"
        )
    surface = fit_quadratic_surface(x[best_inliers], z[best_inliers], y[best_inliers],
                                    frame=frame)
    resid = y - surface.evaluate(x, z)
    final_inliers = np.abs(resid) <= cfg.inlier_threshold
    picked = resid[final_inliers]
    rms = float(np.sqrt(np.mean(picked * picked))) if picked.size else 0.0
    return FitReport(surface=surface, inliers=final_inliers, rms_residual=rms,
                     iterations_used=iteration)


def extract_damage(source, s: QuadraticSurface, tau: float | None = None,
                   polarity: str = "below", open_radius: int = 1,
                   min_area: int = DEFAULT_MIN_REGION_AREA,
                   connectivity: int = 4) -> DamageMask:
    """Flag pixels whose measured height deviates from the fitted surface.

    ``source`` is either a DisparityImage (surface fitted in the image
    frame: residual = f(u, v) - g, potholes are farther so their disparity
    is lower) or a PointCloud3D (metric frame: residual = Y - f(X, Z),
    potholes are deeper so Y is larger).  With polarity "below" a pixel is
    damaged when residual >= tau; "above" negates the residual; "both" uses
    its absolute value.  The raw mask is cleaned by a morphological opening
    and a minimum-region-area filter.
    """
    if polarity not in ("below", "above", "both"):
        raise ValueError(f"unknown polarity {polarity!r}")
    if isinstance(source, DisparityImage):
        if s.frame != FRAME_IMAGE:
            raise FrameMismatchError("disparity raster input needs an image-frame surface")
        if tau is None:
            tau = DEFAULT_TAU_IMAGE
        uu = np.arange(source.width, dtype=np.float64)[None, :]
        vv = np.arange(source.height, dtype=np.float64)[:, None]
        residual = np.where(source.valid, s.evaluate(uu, vv) - source.values, 0.0)
        flagged = _apply_polarity(residual, tau, polarity) & source.valid
        shape = (source.height, source.width)
    elif isinstance(source, PointCloud3D):
        if s.frame != FRAME_METRIC:
            raise FrameMismatchError("point cloud input needs a metric-frame surface")
        if tau is None:
            tau = DEFAULT_TAU_METRIC
        residual = source.y - s.evaluate(source.x, source.z)
        keep = _apply_polarity(residual, tau, polarity)
        flagged = np.zeros((source.height, source.width), dtype=bool)
        flagged[source.pixel_v[keep], source.pixel_u[keep]] = True
        shape = flagged.shape
    else:
        raise TypeError("source must be a DisparityImage or PointCloud3D")
    if open_radius >= 1:
        flagged = morphological_open(flagged.reshape(shape), open_radius)
    return label_mask(flagged, connectivity=connectivity, min_area=min_area)


def _apply_polarity(residual: np.ndarray, tau: float, polarity: str) -> np.ndarray:
    if polarity == "below":
        return residual >= tau
    if polarity == "above":
        return -residual >= tau
    return np.abs(residual) >= tau


def write_ply(cloud: PointCloud3D, path) -> None:
    """Export the cloud as ASCII PLY (x y z per vertex)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {len(cloud)}\n")
        fh.write("property float x\nproperty float y\nproperty float z\n")
        fh.write("end_header\n")
        for xi, yi, zi in zip(cloud.x, cloud.y, cloud.z):
            fh.write(f"{xi:.9g} {yi:.9g} {zi:.9g}\n")


def read_ply(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read an ASCII PLY written by write_ply; returns (x, y, z) arrays."""
    with open(path, "r", encoding="utf-8") as fh:
        line = fh.readline().strip()
        if line != "ply":
            raise ValueError(f"{path!r} is not a PLY file")
        count = None
        while True:
            line = fh.readline()
            if not line:
                raise ValueError(f"{path!r}: missing end_header")
            line = line.strip()
            if line.startswith("element vertex"):
                count = int(line.split()[-1])
            elif line == "end_header":
                break
        if count is None:
            raise ValueError(f"{path!r}: no vertex element")
        data = np.loadtxt(fh, dtype=np.float64, max_rows=count, ndmin=2)
    if data.shape[0] != count or data.shape[1] < 3:
        raise ValueError(f"{path!r}: vertex data does not match header")
    return data[:, 0], data[:, 1], data[:, 2]


def write_fit_report(report: FitReport, path) -> None:
    """Write the fit outcome as key = value text with full float precision."""
    s = report.surface
    lines = [f"frame = {s.frame}"]
    lines += [f"a{i} = {coef:.17g}" for i, coef in enumerate(s.a)]
    lines += [
        f"inlier_count = {report.inlier_count}",
        f"point_count = {report.inliers.size}",
        f"rms_residual = {report.rms_residual:.17g}",
        f"iterations_used = {report.iterations_used}",
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
