"""Weather augmentation engines for lidar point clouds.

A scan is an ``(n, 4)`` float array of ``x, y, z, reflectivity`` rows
(coordinates in metres, reflectivity in [0, 1]).  Two engines are provided:

* :func:`lisa_augment` places large scatterers randomly inside each beam with
  a hybrid Monte-Carlo model and applies averaged extinction, detectability
  culling and SNR-dependent range noise (rain, snow).
* :func:`mini_lisa_augment` applies only extinction, culling and range noise
  and never emits scattered points (dense small-droplet fog).

Each output point carries a provenance label: 0 = lost, 1 = randomly
scattered, 2 = original.

Randomness is drawn from deterministic per-point streams derived from
``(seed, point index)`` with a splitmix-style counter hash, so results are
bit-reproducible and independent of iteration order, chunking or any
parallel schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from scipy.special import ndtri

from .psd import MarshallPalmerPSD, MonodispersePSD, sample_diameter, tail_count
from .scattering import fresnel_reflectivity
from .weather import WeatherCondition

__all__ = [
    "Label",
    "SensorConfig",
    "AugmentResult",
    "DrawStatsAccumulator",
    "min_detectable_power",
    "beam_diameter",
    "expected_scatterer_count",
    "probabilistic_round",
    "sample_scatterer_range",
    "scatterer_received_power",
    "target_received_power",
    "range_sigma",
    "apply_range_noise",
    "lisa_augment",
    "mini_lisa_augment",
]


class Label(IntEnum):
    LOST = 0
    SCATTERED = 1
    ORIGINAL = 2


@dataclass(frozen=True)
class SensorConfig:
    """Lidar hardware parameters.

    Defaults describe a typical automotive unit: 120 m maximum range, 0.9 m
    bistatic blind zone, 3 mrad beam divergence, +/-4.5 cm range accuracy,
    905 nm wavelength, and a 50 um minimum Monte-Carlo particle diameter.
    """

    r_max: float = 120.0
    r_min: float = 0.9
    divergence: float = 3e-3
    range_accuracy: float = 0.09
    wavelength: float = 905e-9
    d_start: float = 0.05  # mm

    def __post_init__(self):
        if not self.r_max > self.r_min:
            raise ValueError(f"r_max must exceed r_min, got {self.r_max} <= {self.r_min}")
        if self.r_min < 0:
            raise ValueError(f"r_min must be >= 0, got {self.r_min}")
        if not self.divergence > 0:
            raise ValueError(f"divergence must be > 0, got {self.divergence}")
        if self.range_accuracy < 0:
            raise ValueError(f"range_accuracy must be >= 0, got {self.range_accuracy}")
        if not self.wavelength > 0:
            raise ValueError(f"wavelength must be > 0, got {self.wavelength}")
        if not self.d_start > 0:
            raise ValueError(f"d_start must be > 0, got {self.d_start}")


# ---------------------------------------------------------------------------
# sensor model primitives (pure, scalar or vectorized)

def min_detectable_power(sensor: SensorConfig) -> float:
    """Detectability floor in arbitrary power units: 0.9 / r_max^2.

    Anchored so that a 0.9-reflectivity target at maximum range in clear air
    is exactly at the limit of detection.
    """
    return 0.9 / sensor.r_max**2


def beam_diameter(distance, sensor: SensorConfig):
    """Beam footprint diameter distance * tan(divergence), in metres."""
    distance = np.asarray(distance, dtype=np.float64)
    if (distance < 0).any():
        raise ValueError("distance must be >= 0")
    return (distance * math.tan(sensor.divergence))[()]


def expected_scatterer_count(distance, psd, sensor: SensorConfig):
    """Expected number of particles above ``sensor.d_start`` in the conic
    beam volume out to ``distance``; zero inside the blind zone."""
    distance = np.asarray(distance, dtype=np.float64)
    db = distance * math.tan(sensor.divergence)
    bvol = (math.pi / 3.0) * distance * (0.5 * db) ** 2
    count = bvol * tail_count(psd, sensor.d_start)
    return np.where(distance > sensor.r_min, count, 0.0)[()]


def probabilistic_round(n, u):
    """Round ``n >= 0`` to an integer whose expectation over ``u`` equals ``n``."""
    n = np.asarray(n, dtype=np.float64)
    if (n < 0).any():
        raise ValueError("cannot probabilistically round negative values")
    u = np.asarray(u, dtype=np.float64)
    base = np.floor(n)
    return (base + (u < n - base)).astype(np.int64)[()]


def sample_scatterer_range(target_range, u):
    """Scatterer range draw R * u^(1/3) on [0, R], density proportional to R^2.

    The cube-root map is the inverse CDF of the quadratic profile produced by
    a linearly diverging beam: droplet count per unit range grows with the
    beam cross-sectional area.
    """
    target_range = np.asarray(target_range, dtype=np.float64)
    if (target_range <= 0).any():
        raise ValueError("target_range must be > 0")
    u = np.asarray(u, dtype=np.float64)
    if ((u < 0) | (u > 1)).any():
        raise ValueError("uniform variates must lie in [0, 1]")
    return (target_range * np.cbrt(u))[()]


def scatterer_received_power(distance, reflectivity, diameter_mm, alpha, sensor):
    """Range-corrected power echoed by one droplet (arbitrary units).

    reflectivity * exp(-2 alpha R) / R^2, reduced by the beam occlusion
    ratio min((D / Db(R))^2, 1); a zero beam diameter counts as fully
    intercepting.
    """
    distance = np.asarray(distance, dtype=np.float64)
    if (distance <= 0).any():
        raise ValueError("scatterer distance must be > 0")
    db = distance * math.tan(sensor.divergence)
    d_m = np.asarray(diameter_mm, dtype=np.float64) * 1e-3
    with np.errstate(divide="ignore"):
        occlusion = np.where(db > 0, np.minimum((d_m / db) ** 2, 1.0), 1.0)
    return (reflectivity * np.exp(-2.0 * alpha * distance) / distance**2 * occlusion)[()]


def target_received_power(reflectivity, distance, alpha):
    """Range-corrected power echoed by the real target: rho e^(-2 alpha R)/R^2."""
    distance = np.asarray(distance, dtype=np.float64)
    if (distance <= 0).any():
        raise ValueError("target distance must be > 0")
    return (reflectivity * np.exp(-2.0 * alpha * distance) / distance**2)[()]


def range_sigma(snr, sensor: SensorConfig):
    """Range noise standard deviation: range_accuracy / sqrt(2 snr), metres."""
    snr = np.asarray(snr, dtype=np.float64)
    if (snr <= 0).any():
        raise ValueError("snr must be > 0")
    return (sensor.range_accuracy / np.sqrt(2.0 * snr))[()]


def apply_range_noise(distance, snr, sensor: SensorConfig, z):
    """Jitter a range with zero-mean Gaussian noise of std ``range_sigma(snr)``.

    ``z`` is a standard-normal variate (scalar or array); this is the exact
    operation the engines apply to points kept on the original branch.
    """
    return (np.asarray(distance, dtype=np.float64) + np.asarray(z) * range_sigma(snr, sensor))[()]


# ---------------------------------------------------------------------------
# deterministic per-point random streams

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SEED_MASK = 0xFFFFFFFFFFFFFFFF


def _mix64(v: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer (bijective avalanche on uint64)."""
    with np.errstate(over="ignore"):
        v = (v ^ (v >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        v = (v ^ (v >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return v ^ (v >> np.uint64(31))


def _point_keys(seed: int, count: int) -> np.ndarray:
    """One decorrelated 64-bit stream key per point index."""
    base = np.full(1, (int(seed) & _SEED_MASK), dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = _mix64(base + _GAMMA)
        idx = np.arange(count, dtype=np.uint64)
        return _mix64(base + idx * _GAMMA)


def _uniform(keys: np.ndarray, draw: np.ndarray | int) -> np.ndarray:
    """Uniform(0, 1) variate number ``draw`` of each key's stream."""
    draw = np.asarray(draw, dtype=np.uint64)
    with np.errstate(over="ignore"):
        bits = _mix64(keys + (draw + np.uint64(1)) * _GAMMA)
    return ((bits >> np.uint64(11)) + 0.5) * 2.0**-53


# ---------------------------------------------------------------------------
# engines

@dataclass
class DrawStatsAccumulator:
    """Histograms of Monte-Carlo scatterer draws, for diagnostics output.

    Ranges are recorded normalized by the target range (so the quadratic
    profile is scene-independent); diameters are recorded in mm.
    """

    range_edges: np.ndarray = field(default_factory=lambda: np.linspace(0.0, 1.0, 51))
    diameter_edges: np.ndarray = field(default_factory=lambda: np.linspace(0.0, 5.0, 101))
    range_counts: np.ndarray = field(init=False)
    diameter_counts: np.ndarray = field(init=False)
    total_draws: int = field(init=False, default=0)

    def __post_init__(self):
        self.range_counts = np.zeros(len(self.range_edges) - 1, dtype=np.int64)
        self.diameter_counts = np.zeros(len(self.diameter_edges) - 1, dtype=np.int64)

    def add(self, normalized_ranges: np.ndarray, diameters_mm: np.ndarray) -> None:
        self.range_counts += np.histogram(normalized_ranges, self.range_edges)[0]
        self.diameter_counts += np.histogram(diameters_mm, self.diameter_edges)[0]
        self.total_draws += int(normalized_ranges.size)

    def merge(self, other: "DrawStatsAccumulator") -> None:
        if not (
            np.array_equal(self.range_edges, other.range_edges)
            and np.array_equal(self.diameter_edges, other.diameter_edges)
        ):
            raise ValueError("cannot merge accumulators with different binning")
        self.range_counts += other.range_counts
        self.diameter_counts += other.diameter_counts
        self.total_draws += other.total_draws


@dataclass
class AugmentResult:
    """Augmented scan: ``points`` is (n, 4) float64, ``labels`` is (n,) uint8."""

    points: np.ndarray
    labels: np.ndarray
    lost_at_origin: int = 0
    clamped_reflectivity: int = 0

    def label_counts(self) -> tuple[int, int, int]:
        """(lost, scattered, original) point counts."""
        counts = np.bincount(self.labels, minlength=3)
        return int(counts[0]), int(counts[1]), int(counts[2])


def _validated_scan(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 4:
        raise ValueError(f"scan must have shape (n, 4), got {pts.shape}")
    if not np.isfinite(pts).all():
        bad = int(np.argwhere(~np.isfinite(pts))[0, 0])
        raise ValueError(f"scan contains non-finite values (first at point {bad})")
    refl = pts[:, 3]
    if ((refl < 0) | (refl > 1)).any():
        bad = int(np.argwhere((refl < 0) | (refl > 1))[0, 0])
        raise ValueError(
            f"reflectivity outside [0, 1] at point {bad} (value {refl[bad]!r})"
        )
    return pts


# points per scatterer-processing chunk are sized so the flattened draw
# arrays stay within a modest memory budget
_DRAW_BUDGET = 4_000_000


def lisa_augment(
    points,
    weather: WeatherCondition,
    sensor: SensorConfig = SensorConfig(),
    seed: int = 0,
    draw_stats: DrawStatsAccumulator | None = None,
) -> AugmentResult:
    """Hybrid Monte-Carlo augmentation for rain and snow.

    For every input point: random scatterers are seeded in the beam cone
    (count from the particle distribution tail and the conic beam volume,
    probabilistically rounded), their echo powers are compared against the
    target echo and the detectability floor, and the point is emitted as
    lost, randomly scattered, or original with attenuated reflectivity and
    SNR-dependent range jitter.  Output order matches input order and the
    result is fully determined by ``(points, weather, sensor, seed)``.
    """
    pts = _validated_scan(points)
    psd = weather.psd
    if not isinstance(psd, (MarshallPalmerPSD, MonodispersePSD)):
        raise TypeError(
            "hybrid Monte-Carlo augmentation needs a sampleable particle "
            f"distribution (exponential or monodisperse), got {type(psd).__name__}"
        )
    alpha = float(weather.alpha)
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    n = pts.shape[0]
    out = np.zeros_like(pts)
    labels = np.zeros(n, dtype=np.uint8)
    if n == 0:
        return AugmentResult(out, labels)

    rho_scatterer = fresnel_reflectivity(weather.refractive_index)
    pmin = min_detectable_power(sensor)
    keys = _point_keys(seed, n)

    x, y, z, rho = pts.T
    r = np.sqrt(x * x + y * y + z * z)
    at_origin = r == 0.0
    r_safe = np.where(at_origin, 1.0, r)
    attenuation = np.exp(-2.0 * alpha * r)
    p0 = np.where(at_origin, 0.0, rho * attenuation / r_safe**2)

    nt = probabilistic_round(
        expected_scatterer_count(r, psd, sensor), _uniform(keys, 0)
    )
    nt = np.atleast_1d(nt)

    # strongest scatterer echo per point, and its range
    p_best = np.full(n, -np.inf)
    r_best = np.zeros(n)
    tan_div = math.tan(sensor.divergence)

    start = 0
    while start < n:
        stop = start
        budget = 0
        while stop < n and (budget == 0 or budget + nt[stop] <= _DRAW_BUDGET):
            budget += int(nt[stop])
            stop += 1
        nt_c = nt[start:stop]
        total = int(nt_c.sum())
        if total > 0:
            local_starts = np.concatenate(([0], np.cumsum(nt_c)[:-1]))
            pod = np.repeat(np.arange(stop - start), nt_c)
            j = np.arange(total, dtype=np.int64) - np.repeat(local_starts, nt_c)
            key_pod = keys[start:stop][pod]
            u_range = _uniform(key_pod, 1 + 2 * j)
            u_diam = _uniform(key_pod, 2 + 2 * j)
            norm_range = np.cbrt(u_range)
            r_rand = r[start:stop][pod] * norm_range
            d_rand = np.asarray(sample_diameter(psd, sensor.d_start, u_diam))
            if draw_stats is not None:
                draw_stats.add(norm_range, d_rand)
            db = r_rand * tan_div
            with np.errstate(divide="ignore", invalid="ignore"):
                occlusion = np.where(db > 0, np.minimum((d_rand * 1e-3 / db) ** 2, 1.0), 1.0)
                p_rand = rho_scatterer * np.exp(-2.0 * alpha * r_rand) / r_rand**2 * occlusion
            p_rand = np.where(r_rand < sensor.r_min, -np.inf, p_rand)
            nz = nt_c > 0
            starts_nz = local_starts[nz]
            seg_max = np.maximum.reduceat(p_rand, starts_nz)
            p_best[start:stop][nz] = seg_max
            # first draw attaining the segment maximum
            candidates = np.where(
                p_rand == np.repeat(seg_max, nt_c[nz]),
                np.arange(total, dtype=np.int64),
                total,
            )
            winner = np.minimum.reduceat(candidates, starts_nz)
            r_best[start:stop][nz] = r_rand[winner]
        start = stop

    lost = ~at_origin & (p0 < pmin) & (p_best < pmin)
    scattered = ~at_origin & ~lost & (p_best > p0)
    original = ~at_origin & ~lost & ~scattered

    # range jitter on the original branch; draw 1 + 2*nt follows the
    # per-point scatterer draws in each stream
    z_norm = ndtri(_uniform(keys, 1 + 2 * nt))
    snr_safe = np.where(original, p0 / pmin, 1.0)
    sigma = sensor.range_accuracy / np.sqrt(2.0 * snr_safe)
    r_new = np.where(
        original, r + z_norm * sigma, np.where(scattered, r_best, 0.0)
    )

    # rebuild Cartesian coordinates along the original ray direction; when
    # r_new == r the scale is exactly 1.0 and coordinates pass through
    # bit-identically
    scale = np.where(at_origin | lost, 0.0, r_new / r_safe)
    out[:, 0] = x * scale
    out[:, 1] = y * scale
    out[:, 2] = z * scale

    rho_scat_out = np.where(scattered, p_best, 0.0) * r_best**2
    clamped = int(np.count_nonzero(scattered & (rho_scat_out > 1.0)))
    rho_out = np.where(
        original,
        rho * attenuation,
        np.where(scattered, np.clip(rho_scat_out, 0.0, 1.0), 0.0),
    )
    out[:, 3] = rho_out

    labels[scattered] = Label.SCATTERED
    labels[original] = Label.ORIGINAL
    return AugmentResult(
        out,
        labels,
        lost_at_origin=int(np.count_nonzero(at_origin)),
        clamped_reflectivity=clamped,
    )


def mini_lisa_augment(
    points,
    weather: WeatherCondition,
    sensor: SensorConfig = SensorConfig(),
    seed: int = 0,
) -> AugmentResult:
    """Averaged-extinction augmentation for fog: no random scatterers.

    Every point is either lost (echo below the detectability floor) or kept
    with attenuated reflectivity and SNR-dependent range jitter.
    """
    pts = _validated_scan(points)
    alpha = float(weather.alpha)
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    n = pts.shape[0]
    out = np.zeros_like(pts)
    labels = np.zeros(n, dtype=np.uint8)
    if n == 0:
        return AugmentResult(out, labels)

    pmin = min_detectable_power(sensor)
    keys = _point_keys(seed, n)

    x, y, z, rho = pts.T
    r = np.sqrt(x * x + y * y + z * z)
    at_origin = r == 0.0
    r_safe = np.where(at_origin, 1.0, r)
    attenuation = np.exp(-2.0 * alpha * r)
    p0 = np.where(at_origin, 0.0, rho * attenuation / r_safe**2)

    original = ~at_origin & (p0 >= pmin)
    z_norm = ndtri(_uniform(keys, 0))
    snr_safe = np.where(original, p0 / pmin, 1.0)
    sigma = sensor.range_accuracy / np.sqrt(2.0 * snr_safe)
    r_new = np.where(original, r + z_norm * sigma, 0.0)

    scale = np.where(original, r_new / r_safe, 0.0)
    out[:, 0] = x * scale
    out[:, 1] = y * scale
    out[:, 2] = z * scale
    out[:, 3] = np.where(original, rho * attenuation, 0.0)

    labels[original] = Label.ORIGINAL
    return AugmentResult(
        out, labels, lost_at_origin=int(np.count_nonzero(at_origin))
    )
