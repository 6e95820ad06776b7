import math

import numpy as np
import pytest

from pitfinder.errors import DegenerateGeometryError
from pitfinder.roadmodel import RoadSamples, fit_model, fit_roll_angle, roll_energy, transform_disparity
from pitfinder.synth import (
    PotholeSpec,
    SceneSpec,
    generate_scene,
    oracle_planar_fit,
    oracle_quadratic_fit,
)


def spec_with_pothole(profile="flat", **kw):
    defaults = dict(width=120, height=90, phi=0.02, kappa=90, varkappa=0.06,
                    potholes=(PotholeSpec(center=(60.0, 45.0), radius=14.0,
                                          depth=4.0, profile=profile),))
    defaults.update(kw)
    return SceneSpec(**defaults)


# ---------------------------------------------------------------- scenes

def test_scene_bit_deterministic_per_seed():
    spec = spec_with_pothole(noise_sigma=0.5, seed=42)
    a = generate_scene(spec)
    b = generate_scene(spec)
    assert np.array_equal(a.disparity.values, b.disparity.values)
    assert np.array_equal(a.gt_mask, b.gt_mask)


def test_scene_seeds_change_noise_not_truth():
    a = generate_scene(spec_with_pothole(noise_sigma=0.5, seed=1))
    b = generate_scene(spec_with_pothole(noise_sigma=0.5, seed=2))
    assert not np.array_equal(a.disparity.values, b.disparity.values)
    assert np.array_equal(a.gt_mask, b.gt_mask)


def test_noise_free_scene_inverts_exactly():
    scene = generate_scene(SceneSpec(width=100, height=80, phi=-0.04,
                                     kappa=70, varkappa=0.05))
    m = fit_model(RoadSamples.from_disparity(scene.disparity))
    assert m.phi == pytest.approx(-0.04, abs=1e-8)
    assert m.kappa == pytest.approx(70, rel=1e-6)
    assert m.varkappa == pytest.approx(0.05, rel=1e-6)


def test_flat_pothole_mask_is_exact_disk():
    scene = generate_scene(spec_with_pothole(profile="flat"))
    uu, vv = np.meshgrid(np.arange(120.0), np.arange(90.0))
    disk = (uu - 60.0) ** 2 + (vv - 45.0) ** 2 <= 14.0 ** 2
    assert np.array_equal(scene.gt_mask, disk)
    inside = scene.disparity.values[disk]
    road = scene.model.predict(uu, vv)[disk]
    assert np.allclose(road - inside, 4.0)


def test_parabolic_mask_is_half_depth_region():
    scene = generate_scene(spec_with_pothole(profile="parabolic"))
    uu, vv = np.meshgrid(np.arange(120.0), np.arange(90.0))
    rr2 = (uu - 60.0) ** 2 + (vv - 45.0) ** 2
    assert np.array_equal(scene.gt_mask, rr2 <= 14.0 ** 2 / 2.0)
    # depth profile tapers to zero at the rim
    center_depth = scene.model.predict(60.0, 45.0) - scene.disparity.values[45, 60]
    assert center_depth == pytest.approx(4.0)


def test_scene_rejects_negative_disparity():
    with pytest.raises(ValueError):
        generate_scene(SceneSpec(width=100, height=80, phi=0.0, kappa=10,
                                 varkappa=0.05,
                                 potholes=(PotholeSpec((50.0, 10.0), 8.0, 30.0),)))


def test_scene_rejects_out_of_bounds_pothole():
    with pytest.raises(ValueError):
        spec_with_pothole(potholes=(PotholeSpec((5.0, 45.0), 14.0, 2.0),))


def test_generator_fit_transform_composition_bound():
    # after fitting and flattening, road pixels stay within 4 sigma of lambda
    for seed in (0, 1, 2):
        sigma = 0.3
        scene = generate_scene(spec_with_pothole(noise_sigma=sigma, seed=seed,
                                                 width=160, height=120,
                                                 potholes=(PotholeSpec(
                                                     (80.0, 60.0), 12.0, 5.0),)))
        model = fit_model(RoadSamples.from_disparity(scene.disparity))
        transformed, fitted = transform_disparity(scene.disparity, model)
        road = ~scene.gt_mask
        frac = np.mean(np.abs(transformed.values[road] - fitted.lam) <= 4 * sigma)
        assert frac >= 0.99


# ------------------------------------------------------------ planar oracle

def test_oracle_planar_exact_data():
    rng = np.random.default_rng(0)
    u = rng.uniform(0, 50, 40)
    v = rng.uniform(0, 50, 40)
    g = 2.0 + 0.25 * v - 0.1 * u
    a, b, c, rss = oracle_planar_fit(u, v, g)
    assert (a, b, c) == pytest.approx((2.0, 0.25, -0.1), rel=1e-10)
    assert rss == pytest.approx(0.0, abs=1e-18)


def test_oracle_planar_three_points_interpolates():
    u = np.array([0.0, 1.0, 0.0])
    v = np.array([0.0, 0.0, 1.0])
    g = np.array([3.0, 5.0, 4.0])
    a, b, c, rss = oracle_planar_fit(u, v, g)
    assert rss == pytest.approx(0.0, abs=1e-20)
    assert a + b * v + c * u == pytest.approx(g)


def test_oracle_planar_rank_deficient():
    u = np.full(10, 3.0)
    v = np.full(10, 4.0)
    with pytest.raises(DegenerateGeometryError):
        oracle_planar_fit(u, v, np.arange(10.0))


def test_oracle_rss_equals_minimized_roll_energy():
    # cross-oracle identity: unconstrained planar rss == min-phi roll energy
    rng = np.random.default_rng(21)
    for seed in range(8):
        rng = np.random.default_rng(seed)
        u = rng.uniform(0, 250, 100)
        v = rng.uniform(30, 220, 100)
        g = 0.05 * (math.cos(0.04) * v - math.sin(0.04) * u + 150)
        g = g + 0.3 * rng.standard_normal(100)
        s = RoadSamples(u, v, g)
        *_, rss = oracle_planar_fit(u, v, g)
        e_min = roll_energy(fit_roll_angle(s), s)
        assert abs(e_min - rss) <= 1e-9 * float(g @ g)


# --------------------------------------------------------- quadratic oracle

def test_oracle_quadratic_exact_data():
    rng = np.random.default_rng(33)
    x = rng.uniform(-2, 2, 50)
    z = rng.uniform(-2, 2, 50)
    a_true = np.array([0.5, 0.1, -0.2, 0.01, 0.02, -0.005])
    y = (a_true[0] + a_true[1] * x + a_true[2] * z + a_true[3] * x * x
         + a_true[4] * z * z + a_true[5] * x * z)
    a = oracle_quadratic_fit(x, z, y)
    assert a == pytest.approx(a_true, rel=1e-10, abs=1e-12)


def test_oracle_quadratic_six_points_interpolates():
    rng = np.random.default_rng(35)
    x = rng.uniform(-1, 1, 6)
    z = rng.uniform(-1, 1, 6)
    y = rng.uniform(-1, 1, 6)
    a = oracle_quadratic_fit(x, z, y)
    fitted = a[0] + a[1] * x + a[2] * z + a[3] * x * x + a[4] * z * z + a[5] * x * z
    assert fitted == pytest.approx(y, abs=1e-8)


def test_oracle_quadratic_rank_deficient():
    x = np.full(10, 1.0)  # constant x collapses three design columns
    z = np.linspace(0, 1, 10)
    with pytest.raises(DegenerateGeometryError):
        oracle_quadratic_fit(x, z, np.ones(10))
