"""Road-disparity projection model and disparity flattening.

On an undamaged planar road imaged by a (possibly rolled) stereo rig, the
disparity at pixel (u, v) follows

    g(u, v) = varkappa * (cos(phi) * v - sin(phi) * u + kappa),

where phi is the rig roll angle and (kappa, varkappa) are the projection
coefficients.  Fitting proceeds in two stages: phi minimizes the residual
energy of the best single-variable linear fit of g against the rotated row
coordinate w = cos(phi) * v - sin(phi) * u, then (kappa, varkappa) drop out
of that linear fit.  Subtracting the fitted model from the raster (plus an
offset that keeps the result non-negative) flattens the road to a constant,
leaving damage as low-valued outliers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .errors import (
    DegenerateGeometryError,
    EmptySelectionError,
    FlatEnergyError,
    InsufficientPointsError,
    UnidentifiableModelError,
)
from .imaging import DisparityImage, GrayImage, PixelCoord

PHI_LIMIT = math.pi / 4          # physical roll never approaches 45 degrees
GRID_POINTS = 181
GOLDEN_TOL = 1e-9                # bracket width, radians
FLAT_ENERGY_REL = 1e-12
VARKAPPA_MIN = 1e-12
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class RoadDisparityModel:
    """Fitted road-disparity model: roll angle, coefficients, and offset.

    ``lam`` is the non-negativity offset added by the disparity
    transformation (0 until a transform sets it).
    """

    phi: float
    kappa: float
    varkappa: float
    lam: float = 0.0

    def __post_init__(self):
        if not (-PHI_LIMIT < self.phi < PHI_LIMIT):
            raise ValueError(f"phi {self.phi} outside (-pi/4, pi/4)")
        if not (math.isfinite(self.varkappa) and self.varkappa != 0.0):
            raise ValueError("varkappa must be finite and nonzero")
        if not math.isfinite(self.kappa) or not math.isfinite(self.lam):
            raise ValueError("kappa and lam must be finite")

    def predict(self, u, v):
        """Model disparity at pixel coordinates (vectorized)."""
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        return self.varkappa * (
            math.cos(self.phi) * v - math.sin(self.phi) * u + self.kappa
        )


@dataclass(frozen=True)
class RoadSamples:
    """Pixel samples feeding the model fit: parallel (u, v, g) vectors."""

    u: np.ndarray
    v: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64).ravel()
        v = np.asarray(self.v, dtype=np.float64).ravel()
        g = np.asarray(self.g, dtype=np.float64).ravel()
        if not (u.size == v.size == g.size):
            raise ValueError("u, v, g must have equal length")
        if g.size and (not np.all(np.isfinite(g)) or g.min() < 0):
            raise ValueError("disparity samples must be finite and >= 0")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "g", g)

    def __len__(self) -> int:
        return self.g.size

    @classmethod
    def from_disparity(cls, disp: DisparityImage, stride: int = 1) -> "RoadSamples":
        """Collect every valid pixel (optionally subsampled by a row/col stride)."""
        if stride < 1:
            raise ValueError("stride must be >= 1")
        valid = disp.valid[::stride, ::stride]
        vv, uu = np.nonzero(valid)
        if vv.size == 0:
            raise EmptySelectionError("disparity image has no valid pixels")
        g = disp.values[::stride, ::stride][vv, uu]
        return cls(uu * stride, vv * stride, g)


@dataclass(frozen=True)
class VDisparityMap:
    """Row-wise disparity histogram: counts[v][bin] over valid pixels."""

    counts: np.ndarray
    bin_width: float

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2:
            raise ValueError("counts must be rows x bins")
        if self.bin_width <= 0:
            raise ValueError("bin_width must be positive")
        object.__setattr__(self, "counts", counts)

    @property
    def rows(self) -> int:
        return self.counts.shape[0]

    @property
    def bins(self) -> int:
        return self.counts.shape[1]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def build_v_disparity(disp: DisparityImage, bin_width: float = 1.0,
                      bins: int | None = None) -> VDisparityMap:
    """Accumulate valid disparities into per-row histogram bins.

    Bin index is floor(g / bin_width); when ``bins`` caps the width of the
    map, overflowing disparities are clipped into the last bin.
    """
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    if disp.valid_count == 0:
        raise EmptySelectionError("disparity image has no valid pixels")
    vv, uu = np.nonzero(disp.valid)
    g = disp.values[vv, uu]
    idx = np.floor(g / bin_width).astype(np.int64)
    if bins is None:
        bins = int(idx.max()) + 1
    np.clip(idx, 0, bins - 1, out=idx)
    counts = np.zeros((disp.height, bins), dtype=np.int64)
    np.add.at(counts, (vv, idx), 1)
    return VDisparityMap(counts, float(bin_width))


def predict_road_disparity(model: RoadDisparityModel, p: PixelCoord) -> float:
    """Model disparity at a single pixel."""
    return float(model.predict(p.u, p.v))


class _RollMoments:
    """Centered second moments of (u, v, g); energy is O(1) per angle."""

    def __init__(self, samples: RoadSamples):
        u, v, g = samples.u, samples.v, samples.g
        self.k = g.size
        self.mean_u = u.mean()
        self.mean_v = v.mean()
        self.mean_g = g.mean()
        uc = u - self.mean_u
        vc = v - self.mean_v
        gc = g - self.mean_g
        self.suu = float(uc @ uc)
        self.svv = float(vc @ vc)
        self.suv = float(uc @ vc)
        self.sgu = float(gc @ uc)
        self.sgv = float(gc @ vc)
        self.sgg = float(gc @ gc)
        self.gg_raw = float(g @ g)
        self.den_scale = self.suu + self.svv

    def rotated_variance(self, phi):
        c, s = np.cos(phi), np.sin(phi)
        return c * c * self.svv - 2.0 * s * c * self.suv + s * s * self.suu

    def degenerate(self, den) -> bool:
        # Centered sums cancel to ~eps * den_scale for collinear geometry,
        # so the cutoff must sit well above that floor.
        return den <= self.den_scale * 1e-12 + 1e-30

    def energy(self, phi):
        """Residual sum of squares of the linear fit at roll angle phi."""
        c, s = np.cos(phi), np.sin(phi)
        num = c * self.sgv - s * self.sgu
        den = self.rotated_variance(phi)
        return self.sgg - num * num / np.maximum(den, 1e-300)

    def stationarity(self, phi):
        """Zero exactly where the energy is stationary (cancellation-free).

        With r(phi) = num^2/den the explained energy, E' = -num * h / den^2
        for h = 2*num'*den - num*den'; at the minimum num != 0, so h = 0.
        """
        c, s = math.cos(phi), math.sin(phi)
        num = c * self.sgv - s * self.sgu
        dnum = -s * self.sgv - c * self.sgu
        den = c * c * self.svv - 2.0 * s * c * self.suv + s * s * self.suu
        dden = 2.0 * s * c * (self.suu - self.svv) - 2.0 * (c * c - s * s) * self.suv
        return 2.0 * dnum * den - num * dden

    def slope_intercept(self, phi):
        c, s = math.cos(phi), math.sin(phi)
        den = self.rotated_variance(phi)
        if self.degenerate(den):
            raise DegenerateGeometryError(
                "rotated coordinate has no variance; samples are collinear"
            )
        slope = (c * self.sgv - s * self.sgu) / den
        mean_w = c * self.mean_v - s * self.mean_u
        return slope, self.mean_g - slope * mean_w


def roll_energy(phi: float, samples: RoadSamples) -> float:
    """Residual energy of the road-disparity fit at a fixed roll angle.

    Equals g.g minus the squared norm of the projection of g onto the span
    of [ones, cos(phi)*v - sin(phi)*u]; always >= 0 for non-degenerate
    geometry.
    """
    if len(samples) < 3:
        raise InsufficientPointsError("need at least 3 samples")
    m = _RollMoments(samples)
    if m.degenerate(m.rotated_variance(phi)):
        raise DegenerateGeometryError(
            "rotated coordinate has no variance at this angle"
        )
    return max(float(m.energy(phi)), 0.0)


def _golden_section(f, a: float, b: float, tol: float) -> float:
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def fit_roll_angle(samples: RoadSamples) -> float:
    """Roll angle minimizing the residual energy over (-pi/4, pi/4).

    A coarse grid brackets the global minimum, then golden-section search
    refines it.  Raises FlatEnergyError when the energy carries no roll
    signal (relative variation below 1e-12) and DegenerateGeometryError for
    collinear sample geometry.
    """
    if len(samples) < 3:
        raise InsufficientPointsError("need at least 3 samples")
    m = _RollMoments(samples)
    phis = np.linspace(-PHI_LIMIT, PHI_LIMIT, GRID_POINTS)
    dens = m.rotated_variance(phis)
    if not np.any(dens > m.den_scale * 1e-18 + 1e-30):
        raise DegenerateGeometryError("samples do not span two pixel directions")
    energies = m.energy(phis)
    span = float(energies.max() - energies.min())
    if span <= FLAT_ENERGY_REL * max(m.gg_raw, 1e-30):
        raise FlatEnergyError("roll energy is flat; road model unidentifiable")
    i = int(np.argmin(energies))
    lo = phis[max(i - 1, 0)]
    hi = phis[min(i + 1, GRID_POINTS - 1)]
    phi = float(_golden_section(lambda p: float(m.energy(p)), lo, hi, GOLDEN_TOL))
    # Golden section stalls on the energy's flat floating-point floor near the
    # minimum; a root solve of the stationarity condition recovers full precision.
    a = max(phi - 1e-4, -PHI_LIMIT)
    b = min(phi + 1e-4, PHI_LIMIT)
    ha, hb = m.stationarity(a), m.stationarity(b)
    if np.isfinite(ha) and np.isfinite(hb) and ha * hb < 0:
        phi = float(brentq(m.stationarity, a, b, xtol=1e-14, rtol=8.9e-16))
    return phi


def fit_model(samples: RoadSamples) -> RoadDisparityModel:
    """Fit (phi, kappa, varkappa) to road pixel samples; lam starts at 0."""
    phi = fit_roll_angle(samples)
    m = _RollMoments(samples)
    slope, intercept = m.slope_intercept(phi)
    if abs(slope) < VARKAPPA_MIN:
        raise UnidentifiableModelError("fitted slope is ~0; road model unidentifiable")
    return RoadDisparityModel(phi=phi, kappa=intercept / slope, varkappa=slope)


def transform_disparity(disp: DisparityImage,
                        model: RoadDisparityModel) -> tuple[GrayImage, RoadDisparityModel]:
    """Subtract the fitted road model so undamaged road becomes constant.

    Output value at a valid pixel is g - model.predict(u, v) + lam with lam
    = -min(residual), making the minimum exactly 0.  Invalid pixels are set
    to 0 and keep their invalid flag in the caller's validity raster.

    Returns the transformed raster and the model updated with lam.
    """
    uu = np.arange(disp.width, dtype=np.float64)[None, :]
    vv = np.arange(disp.height, dtype=np.float64)[:, None]
    residual = disp.values - model.predict(uu, vv)
    picked = residual[disp.valid]
    if picked.size == 0:
        raise EmptySelectionError("disparity image has no valid pixels")
    lam = -float(picked.min())
    out = np.zeros_like(residual)
    out[disp.valid] = residual[disp.valid] + lam
    return GrayImage(out), replace(model, lam=lam)


def save_model(model: RoadDisparityModel, path) -> None:
    """Write the model as key = value text with full float precision."""
    lines = [
        f"phi_rad = {model.phi:.17g}",
        f"kappa = {model.kappa:.17g}",
        f"varkappa = {model.varkappa:.17g}",
        f"lambda = {model.lam:.17g}",
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> RoadDisparityModel:
    """Read a model written by save_model."""
    fields = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            fields[key.strip()] = float(value.strip())
    try:
        return RoadDisparityModel(
            phi=fields["phi_rad"],
            kappa=fields["kappa"],
            varkappa=fields["varkappa"],
            lam=fields["lambda"],
        )
    except KeyError as exc:
        raise ValueError(f"model file {path!r} is missing key {exc}") from exc
