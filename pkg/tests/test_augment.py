"""Tests for the sensor model and the augmentation engines."""

import math

import numpy as np
import pytest
from scipy import optimize, stats

from lidarweather.augment import (
    AugmentResult,
    Label,
    SensorConfig,
    _point_keys,
    _uniform,
    apply_range_noise,
    beam_diameter,
    expected_scatterer_count,
    lisa_augment,
    min_detectable_power,
    mini_lisa_augment,
    probabilistic_round,
    range_sigma,
    sample_scatterer_range,
    scatterer_received_power,
    target_received_power,
)
from lidarweather.psd import MonodispersePSD, marshall_palmer_from_rain_rate, tail_count
from lidarweather.scattering import fresnel_reflectivity
from lidarweather.weather import WeatherCondition, rain_condition

from scan_fixtures import synthetic_scan

SENSOR = SensorConfig()


def dry_weather() -> WeatherCondition:
    return WeatherCondition(
        name="dry",
        psd=marshall_palmer_from_rain_rate(0.0),
        refractive_index=1.328 + 0j,
        alpha=0.0,
        rain_rate=0.0,
    )


def fog_weather(alpha: float) -> WeatherCondition:
    return WeatherCondition(
        name="fog", psd=None, refractive_index=1.328 + 0j, alpha=alpha
    )


class TestSensorPrimitives:
    def test_min_detectable_power(self):
        assert min_detectable_power(SENSOR) == 0.9 / 14400.0
        assert min_detectable_power(SensorConfig(r_max=1.0, r_min=0.0)) == 0.9
        half = SensorConfig(r_max=60.0)
        assert min_detectable_power(half) == 4 * min_detectable_power(SENSOR)

    def test_beam_diameter(self):
        assert beam_diameter(0.0, SENSOR) == 0.0
        assert beam_diameter(100.0, SENSOR) == pytest.approx(0.3000, abs=1e-6)
        # small-angle linearity
        assert beam_diameter(200.0, SENSOR) == pytest.approx(
            2 * beam_diameter(100.0, SENSOR), rel=1e-9
        )

    def test_expected_count_guards(self):
        psd = marshall_palmer_from_rain_rate(25.0)
        assert expected_scatterer_count(SENSOR.r_min, psd, SENSOR) == 0.0
        assert expected_scatterer_count(0.5, psd, SENSOR) == 0.0
        empty = marshall_palmer_from_rain_rate(0.0)
        assert expected_scatterer_count(80.0, empty, SENSOR) == 0.0

    def test_expected_count_against_volume_seeding(self):
        # independent oracle: seed droplets uniformly in a cylinder that
        # encloses the beam cone, with diameters drawn above a smaller floor,
        # then count those inside the cone and above d_start
        psd = marshall_palmer_from_rain_rate(25.0)
        r_target = 80.0
        expected = expected_scatterer_count(r_target, psd, SENSOR)

        rng = np.random.default_rng(1234)
        n_seed = 1_000_000
        d_floor = 0.02
        cone_base_radius = 0.5 * beam_diameter(r_target, SENSOR)
        cyl_volume = math.pi * cone_base_radius**2 * r_target
        density_floor = tail_count(psd, d_floor)

        z = rng.uniform(0.0, r_target, n_seed)
        rho = cone_base_radius * np.sqrt(rng.uniform(0.0, 1.0, n_seed))
        inside = rho <= (z / r_target) * cone_base_radius
        diam = d_floor - np.log1p(-rng.random(n_seed)) / psd.lambda_mp
        hits = np.count_nonzero(inside & (diam >= SENSOR.d_start))
        estimate = hits / n_seed * cyl_volume * density_floor
        assert estimate == pytest.approx(expected, rel=0.02)

    def test_probabilistic_round(self):
        assert probabilistic_round(3.0, 0.99) == 3
        assert probabilistic_round(0.0, 0.0) == 0
        u = np.random.default_rng(5).random(100_000)
        mean = probabilistic_round(np.full(u.shape, 2.3), u).mean()
        assert mean == pytest.approx(2.3, abs=0.01)
        with pytest.raises(ValueError):
            probabilistic_round(-0.5, 0.5)

    def test_sample_scatterer_range(self):
        assert sample_scatterer_range(50.0, 1.0) == 50.0
        assert sample_scatterer_range(50.0, 0.125) == pytest.approx(25.0, rel=1e-12)
        u = np.random.default_rng(17).random(100_000)
        draws = sample_scatterer_range(64.0, u)
        result = stats.kstest(draws, lambda r: (r / 64.0) ** 3)
        assert result.pvalue > 0.01
        assert result.statistic < 0.01

    def test_scatterer_received_power(self):
        # full interception when the droplet covers the beam
        p = scatterer_received_power(10.0, 0.02, 1e3, alpha=0.0, sensor=SENSOR)
        assert p == pytest.approx(0.02 / 100.0, rel=1e-12)
        # hand case: Db(1 m) = 3 mm, D = 0.5 mm
        p = scatterer_received_power(1.0, 0.02, 0.5, alpha=0.0, sensor=SENSOR)
        assert p == pytest.approx(5.556e-4, abs=1e-7)
        # monotone decreasing in range
        ranges = np.linspace(1.0, 100.0, 200)
        powers = scatterer_received_power(ranges, 0.02, 0.5, 1e-3, SENSOR)
        assert np.all(np.diff(powers) < 0)

    def test_target_received_power(self):
        pmin = min_detectable_power(SENSOR)
        assert target_received_power(0.9, SENSOR.r_max, 0.0) == pmin
        assert target_received_power(0.09, 50.0, 0.0) == pytest.approx(3.6e-5)
        assert target_received_power(0.09, 50.0, 0.0) < pmin
        # halving alpha at fixed range rescales by exp(alpha * 2R / 2)
        p1 = target_received_power(0.5, 100.0, 0.02)
        p2 = target_received_power(0.5, 100.0, 0.01)
        assert p2 / p1 == pytest.approx(math.exp(100.0 * 0.02), rel=1e-9)
        with pytest.raises(ValueError):
            target_received_power(0.5, 0.0, 0.0)

    def test_range_sigma(self):
        assert range_sigma(0.5, SENSOR) == pytest.approx(0.09)
        assert range_sigma(2.0, SENSOR) == pytest.approx(0.045)
        assert range_sigma(1e12, SENSOR) < 1e-6
        with pytest.raises(ValueError):
            range_sigma(0.0, SENSOR)
        with pytest.raises(ValueError):
            range_sigma(-1.0, SENSOR)

    @pytest.mark.parametrize("snr", [0.5, 2.0, 10.0])
    def test_range_noise_statistics(self, snr):
        # 1e4 replicates through the engines' own per-point streams
        from scipy.special import ndtri

        keys = _point_keys(99, 10_000)
        z = ndtri(_uniform(keys, 0))
        jittered = apply_range_noise(50.0, snr, SENSOR, z)
        sigma = np.std(jittered - 50.0)
        assert sigma == pytest.approx(range_sigma(snr, SENSOR), rel=0.05)


class TestLisaAugment:
    def test_degenerate_weather_is_identity_on_detectable_points(self):
        pts = synthetic_scan(2000, seed=3, r_lo=2.0, r_hi=100.0)
        sensor = SensorConfig(range_accuracy=0.0)
        res = lisa_augment(pts, dry_weather(), sensor, seed=7)
        r = np.linalg.norm(pts[:, :3], axis=1)
        detectable = pts[:, 3] / r**2 >= min_detectable_power(sensor)
        assert np.array_equal(res.labels == Label.ORIGINAL, detectable)
        assert np.array_equal(res.points[detectable], pts[detectable])
        assert np.all(res.points[~detectable] == 0.0)

    def test_dim_far_point_is_lost(self):
        pts = np.array([[50.0, 0.0, 0.0, 0.09]])
        res = lisa_augment(pts, dry_weather(), SENSOR, seed=0)
        assert res.labels[0] == Label.LOST
        assert np.all(res.points[0] == 0.0)

    def test_boundary_point_is_kept(self):
        pts = np.array([[120.0, 0.0, 0.0, 0.9]])
        res = lisa_augment(pts, dry_weather(), SensorConfig(range_accuracy=0.0), seed=0)
        assert res.labels[0] == Label.ORIGINAL

    def test_label_partition(self):
        pts = synthetic_scan(5000, seed=11, r_lo=1.0, r_hi=90.0)
        res = lisa_augment(pts, rain_condition(30.0), SENSOR, seed=5)
        lost, scattered, original = res.label_counts()
        assert lost + scattered + original == len(pts)
        assert scattered > 0  # rain at 30 mm/hr must scatter something

    def test_direction_preserved(self):
        pts = synthetic_scan(5000, seed=13, r_lo=2.0, r_hi=60.0)
        res = lisa_augment(pts, rain_condition(25.0), SENSOR, seed=21)
        keep = res.labels != Label.LOST
        u_in = pts[keep, :3] / np.linalg.norm(pts[keep, :3], axis=1, keepdims=True)
        u_out = res.points[keep, :3] / np.linalg.norm(
            res.points[keep, :3], axis=1, keepdims=True
        )
        assert np.max(np.abs(u_out - u_in)) < 1e-9

    def test_scattered_ranges_inside_blind_zone_excluded(self):
        pts = synthetic_scan(20_000, seed=29, r_lo=2.0, r_hi=60.0)
        res = lisa_augment(pts, rain_condition(50.0), SENSOR, seed=2)
        scattered = res.labels == Label.SCATTERED
        assert scattered.any()
        r_in = np.linalg.norm(pts[scattered, :3], axis=1)
        r_out = np.linalg.norm(res.points[scattered, :3], axis=1)
        assert np.all(r_out > SENSOR.r_min)
        assert np.all(r_out <= r_in * (1 + 1e-12))

    def test_attenuation_identity_for_original_points(self):
        weather = rain_condition(25.0)
        pts = synthetic_scan(5000, seed=31, r_lo=2.0, r_hi=60.0)
        res = lisa_augment(pts, weather, SENSOR, seed=3)
        original = res.labels == Label.ORIGINAL
        r = np.linalg.norm(pts[original, :3], axis=1)
        expected = pts[original, 3] * np.exp(-2.0 * weather.alpha * r)
        actual = res.points[original, 3]
        assert np.max(np.abs(actual - expected) / expected) < 1e-12

    def test_scattered_reflectivity_formula(self):
        weather = rain_condition(50.0)
        pts = synthetic_scan(20_000, seed=37, r_lo=2.0, r_hi=60.0)
        res = lisa_augment(pts, weather, SENSOR, seed=4)
        scattered = res.labels == Label.SCATTERED
        rho_f = fresnel_reflectivity(weather.refractive_index)
        r_out = np.linalg.norm(res.points[scattered, :3], axis=1)
        rho_out = res.points[scattered, 3]
        # occlusion factor in (0, 1]: rho_new = rho_f * exp(-2 a R) * occl
        occl = rho_out / (rho_f * np.exp(-2.0 * weather.alpha * r_out))
        assert np.all(occl > 0.0)
        assert np.all(occl <= 1.0 + 1e-12)

    def test_determinism_and_seed_sensitivity(self):
        pts = synthetic_scan(3000, seed=41, r_lo=2.0, r_hi=60.0)
        weather = rain_condition(25.0)
        a = lisa_augment(pts, weather, SENSOR, seed=42)
        b = lisa_augment(pts, weather, SENSOR, seed=42)
        assert np.array_equal(a.points, b.points)
        assert np.array_equal(a.labels, b.labels)
        c = lisa_augment(pts, weather, SENSOR, seed=43)
        assert not np.array_equal(a.points, c.points)

    def test_chunking_does_not_change_results(self, monkeypatch):
        import lidarweather.augment as aug

        pts = synthetic_scan(2000, seed=43, r_lo=2.0, r_hi=60.0)
        weather = rain_condition(25.0)
        full = lisa_augment(pts, weather, SENSOR, seed=1)
        monkeypatch.setattr(aug, "_DRAW_BUDGET", 1000)
        chunked = aug.lisa_augment(pts, weather, SENSOR, seed=1)
        assert np.array_equal(full.points, chunked.points)
        assert np.array_equal(full.labels, chunked.labels)

    def test_monotone_degradation_with_rain_rate(self):
        pts = synthetic_scan(10_000, seed=47, r_lo=2.0, r_hi=70.0)
        fractions = []
        for rate in (10.0, 30.0, 50.0):
            res = lisa_augment(pts, rain_condition(rate), SENSOR, seed=8)
            lost, scattered, original = res.label_counts()
            fractions.append((lost + scattered) / len(pts))
        assert fractions[0] < fractions[1] < fractions[2]

    def test_origin_point_is_lost_with_diagnostic(self):
        pts = np.array([[0.0, 0.0, 0.0, 0.5], [10.0, 0.0, 0.0, 0.5]])
        res = lisa_augment(pts, dry_weather(), SENSOR, seed=0)
        assert res.labels[0] == Label.LOST
        assert res.lost_at_origin == 1
        assert res.labels[1] == Label.ORIGINAL

    def test_pipeline_jitter_statistics(self):
        # replicate one point whose snr is known: snr = rho rmax^2 / (0.9 R^2)
        for snr, r in ((2.0, 50.0), (10.0, 30.0)):
            rho = 0.9 * snr * r**2 / SENSOR.r_max**2
            assert rho <= 1.0
            pts = np.tile([r, 0.0, 0.0, rho], (10_000, 1))
            res = lisa_augment(pts, dry_weather(), SENSOR, seed=77)
            assert np.all(res.labels == Label.ORIGINAL)
            ranges = res.points[:, 0]
            assert np.std(ranges - r) == pytest.approx(
                range_sigma(snr, SENSOR), rel=0.05
            )

    def test_monodisperse_scatterers_are_hand_computable(self):
        # dim target at 20 m in a monodisperse cloud of large droplets:
        # every drawn scatterer has the same diameter and reflectivity
        psd = MonodispersePSD(diameter=2.0, number_density=500.0)
        weather = WeatherCondition(
            name="mono", psd=psd, refractive_index=1.328 + 0j, alpha=0.0
        )
        pts = np.tile([20.0, 0.0, 0.0, 0.1], (2000, 1))
        res = lisa_augment(pts, weather, SENSOR, seed=101)
        scattered = res.labels == Label.SCATTERED
        assert scattered.any()
        rho_f = fresnel_reflectivity(1.328 + 0j)
        r_out = np.linalg.norm(res.points[scattered, :3], axis=1)
        db = r_out * math.tan(SENSOR.divergence)
        occl = np.minimum((2e-3 / db) ** 2, 1.0)
        assert res.points[scattered, 3] == pytest.approx(rho_f * occl, rel=1e-12)

    def test_rejects_bad_input(self):
        weather = dry_weather()
        with pytest.raises(ValueError, match="shape"):
            lisa_augment(np.zeros((3, 3)), weather, SENSOR, seed=0)
        with pytest.raises(ValueError, match="non-finite"):
            lisa_augment(np.array([[np.nan, 0, 0, 0.5]]), weather, SENSOR, seed=0)
        with pytest.raises(ValueError, match="reflectivity"):
            lisa_augment(np.array([[1.0, 0, 0, 1.5]]), weather, SENSOR, seed=0)
        with pytest.raises(TypeError):
            lisa_augment(np.array([[1.0, 0, 0, 0.5]]), fog_weather(0.01), SENSOR, 0)

    def test_empty_scan(self):
        res = lisa_augment(np.zeros((0, 4)), dry_weather(), SENSOR, seed=0)
        assert res.points.shape == (0, 4)
        assert res.labels.shape == (0,)


class TestMiniLisaAugment:
    def test_identity_when_clear(self):
        pts = synthetic_scan(2000, seed=53, r_lo=2.0, r_hi=100.0)
        sensor = SensorConfig(range_accuracy=0.0)
        res = mini_lisa_augment(pts, fog_weather(0.0), sensor, seed=1)
        r = np.linalg.norm(pts[:, :3], axis=1)
        detectable = pts[:, 3] / r**2 >= min_detectable_power(sensor)
        assert np.array_equal(res.points[detectable], pts[detectable])

    def test_never_scatters(self):
        pts = synthetic_scan(20_000, seed=59, r_lo=1.0, r_hi=110.0)
        res = mini_lisa_augment(pts, fog_weather(0.05), SENSOR, seed=2)
        assert not np.any(res.labels == Label.SCATTERED)

    def test_cutoff_matches_bisection_oracle(self):
        alpha, rho = 0.03, 0.9
        pmin = min_detectable_power(SENSOR)
        cutoff = optimize.brentq(
            lambda r: rho * math.exp(-2 * alpha * r) / r**2 - pmin, 1.0, 120.0,
            xtol=1e-12,
        )
        ranges = np.linspace(2.0, 119.0, 4001)
        pts = np.zeros((ranges.size, 4))
        pts[:, 0] = ranges
        pts[:, 3] = rho
        res = mini_lisa_augment(pts, fog_weather(alpha), SENSOR, seed=3)
        should_be_lost = ranges > cutoff
        assert np.array_equal(res.labels == Label.LOST, should_be_lost)

    def test_reflectivity_identity(self):
        alpha = 0.01
        pts = synthetic_scan(3000, seed=61, r_lo=2.0, r_hi=40.0)
        res = mini_lisa_augment(pts, fog_weather(alpha), SENSOR, seed=4)
        original = res.labels == Label.ORIGINAL
        r = np.linalg.norm(pts[original, :3], axis=1)
        expected = pts[original, 3] * np.exp(-2.0 * alpha * r)
        assert np.max(np.abs(res.points[original, 3] - expected) / expected) < 1e-12

    def test_determinism(self):
        pts = synthetic_scan(1000, seed=67, r_lo=2.0, r_hi=80.0)
        a = mini_lisa_augment(pts, fog_weather(0.02), SENSOR, seed=5)
        b = mini_lisa_augment(pts, fog_weather(0.02), SENSOR, seed=5)
        assert np.array_equal(a.points, b.points)
