"""Deterministic synthetic road scenes and independent fitting oracles.

Scenes are rendered directly from the road-disparity model (roll angle plus
linear coefficients), with optional Gaussian noise and circular potholes
stamped in as local disparity drops.  Noise comes from numpy's PCG64
generator via Generator.standard_normal, so a (spec, seed) pair renders the
same raster on every platform.

The oracle functions solve the same estimation problems as the production
fits but through deliberately different algebra (hand-rolled Gaussian
elimination, QR factorization); the test suites cross-check the two routes
against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometryError, InsufficientPointsError
from .imaging import DisparityImage
from .roadmodel import PHI_LIMIT, RoadDisparityModel

PROFILE_FLAT = "flat"
PROFILE_PARABOLIC = "parabolic"


@dataclass(frozen=True)
class PotholeSpec:
    """One circular pothole: center (u, v), radius and depth in pixels."""

    center: tuple[float, float]
    radius: float
    depth: float
    profile: str = PROFILE_FLAT

    def __post_init__(self):
        if self.radius <= 0 or self.depth <= 0:
            raise ValueError("radius and depth must be positive")
        if self.profile not in (PROFILE_FLAT, PROFILE_PARABOLIC):
            raise ValueError(f"unknown profile {self.profile!r}")


@dataclass(frozen=True)
class SceneSpec:
    """Parameters of a synthetic scene; fully determines the rendered raster."""

    width: int
    height: int
    phi: float = 0.0
    kappa: float = 80.0
    varkappa: float = 0.05
    noise_sigma: float = 0.0
    potholes: tuple[PotholeSpec, ...] = ()
    seed: int = 0

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ValueError("scene must be at least 2x2")
        if not (-PHI_LIMIT < self.phi < PHI_LIMIT):
            raise ValueError("phi outside (-pi/4, pi/4)")
        if self.varkappa <= 0:
            raise ValueError("varkappa must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        object.__setattr__(self, "potholes", tuple(self.potholes))
        for p in self.potholes:
            cu, cv = p.center
            if not (p.radius <= cu <= self.width - 1 - p.radius
                    and p.radius <= cv <= self.height - 1 - p.radius):
                raise ValueError(f"pothole footprint {p} leaves the image")


@dataclass(frozen=True)
class SceneTruth:
    """Rendered scene plus its generating model and exact damage footprint.

    ``gt_mask`` marks pixels whose disparity was lowered by at least half the
    pothole's nominal depth, which makes the boundary unambiguous for
    parabolic profiles.
    """

    disparity: DisparityImage
    gt_mask: np.ndarray
    model: RoadDisparityModel


def generate_scene(spec: SceneSpec) -> SceneTruth:
    """Render a scene; raises if the parameters would produce negative disparity."""
    uu = np.arange(spec.width, dtype=np.float64)[None, :]
    vv = np.arange(spec.height, dtype=np.float64)[:, None]
    road = spec.varkappa * (
        math.cos(spec.phi) * vv - math.sin(spec.phi) * uu + spec.kappa
    )
    road = np.broadcast_to(road, (spec.height, spec.width)).copy()
    depth = np.zeros_like(road)
    gt = np.zeros(road.shape, dtype=bool)
    for p in spec.potholes:
        cu, cv = p.center
        rr2 = (uu - cu) ** 2 + (vv - cv) ** 2
        inside = rr2 <= p.radius ** 2
        if p.profile == PROFILE_FLAT:
            bump = np.where(inside, p.depth, 0.0)
        else:
            bump = np.where(inside, p.depth * (1.0 - rr2 / p.radius ** 2), 0.0)
        depth += bump
        gt |= bump >= 0.5 * p.depth
    values = road - depth
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        values = values + spec.noise_sigma * rng.standard_normal(values.shape)
    if values.min() < 0:
        raise ValueError(
            "scene parameters produce negative disparity; raise kappa or shrink depth"
        )
    disparity = DisparityImage(values, np.ones(values.shape, dtype=bool))
    model = RoadDisparityModel(phi=spec.phi, kappa=spec.kappa, varkappa=spec.varkappa)
    return SceneTruth(disparity=disparity, gt_mask=gt, model=model)


def _gauss_solve(a: list[list[float]], b: list[float]) -> list[float]:
    """Gaussian elimination with partial pivoting on plain Python floats."""
    n = len(b)
    m = [row[:] + [b[i]] for i, row in enumerate(a)]
    scale = max(abs(m[i][j]) for i in range(n) for j in range(n)) or 1.0
    for col in range(n):
        pivot_row = max(range(col, n), key=lambda r: abs(m[r][col]))
        if abs(m[pivot_row][col]) <= 1e-12 * scale:
            raise DegenerateGeometryError("rank-deficient system")
        m[col], m[pivot_row] = m[pivot_row], m[col]
        pivot = m[col][col]
        for r in range(col + 1, n):
            factor = m[r][col] / pivot
            if factor != 0.0:
                for c in range(col, n + 1):
                    m[r][c] -= factor * m[col][c]
    out = [0.0] * n
    for r in range(n - 1, -1, -1):
        acc = m[r][n] - sum(m[r][c] * out[c] for c in range(r + 1, n))
        out[r] = acc / m[r][r]
    return out


def oracle_planar_fit(u, v, g) -> tuple[float, float, float, float]:
    """Ordinary least squares for g ~ a + b*v + c*u via hand-rolled elimination.

    Returns (a, b, c, rss).  Independent of numpy.linalg on purpose.
    """
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    g = np.asarray(g, dtype=np.float64).ravel()
    if u.size < 3:
        raise InsufficientPointsError("need at least 3 samples")
    k = float(u.size)
    normal = [
        [k, float(v.sum()), float(u.sum())],
        [float(v.sum()), float(v @ v), float(u @ v)],
        [float(u.sum()), float(u @ v), float(u @ u)],
    ]
    rhs = [float(g.sum()), float(g @ v), float(g @ u)]
    a, b, c = _gauss_solve(normal, rhs)
    resid = g - (a + b * v + c * u)
    return a, b, c, float(resid @ resid)


def oracle_quadratic_fit(x, z, y) -> np.ndarray:
    """Least-squares quadratic surface coefficients via QR factorization.

    Orthogonal decomposition route, distinct from the normal-equation solve
    used by the production fit.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    z = np.asarray(z, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size < 6:
        raise InsufficientPointsError("need at least 6 points")
    w = np.column_stack([np.ones_like(x), x, z, x * x, z * z, x * z])
    q, r = np.linalg.qr(w)
    diag = np.abs(np.diag(r))
    if diag.min() <= 1e-12 * max(diag.max(), 1.0):
        raise DegenerateGeometryError("rank-deficient point configuration")
    return np.linalg.solve(r, q.T @ y)
