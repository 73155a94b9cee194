"""Batch weather augmentation of scan directories.

Every ``*.bin`` scan in the input directory is augmented and written to the
output directory together with a one-byte-per-point label sidecar
(``<stem>.label``), plus a plain-text run report and histogram tables for
external plotting.  Per-scan seeds are derived from the global seed and the
scan filename, so batch results do not depend on enumeration order or on the
worker pool schedule.

Exit codes: 0 success, 2 usage error, 3 data error (one or more scans failed;
the report records the failures).
"""

from __future__ import annotations

import argparse
import hashlib
import os
import struct
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .atmosphere import RainRateSamplerConfig, sample_rain_rate
from .augment import (
    DrawStatsAccumulator,
    SensorConfig,
    lisa_augment,
    mini_lisa_augment,
)
from .scan_io import read_scan, write_labels, write_scan
from .weather import (
    WeatherCondition,
    condition_from_preset,
    is_fixed_extinction,
    load_presets,
    rain_condition,
)

__all__ = [
    "EXIT_OK",
    "EXIT_USAGE",
    "EXIT_DATA",
    "RunConfig",
    "ScanOutcome",
    "RunReport",
    "UsageError",
    "scan_seed",
    "run_batch",
    "write_report",
    "emit_histograms",
    "main",
]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3

WORKERS_ENV_VAR = "LIDARWEATHER_WORKERS"

REPORT_HEADER = "# lidarweather run report v1"
HISTOGRAM_HEADER = "# lidarweather histogram v1"


class UsageError(ValueError):
    """Configuration rejected before any scan was processed."""


@dataclass(frozen=True)
class RunConfig:
    """One batch run.  Exactly one of ``weather_preset``, ``rain_rate`` and
    ``sample_rain_rate`` selects the weather."""

    model: str  # "lisa" | "mini_lisa"
    input_dir: Path
    output_dir: Path
    stats_path: Path | None = None
    weather_preset: str | None = None
    rain_rate: float | None = None
    sample_rain_rate: bool = False
    sampler: RainRateSamplerConfig = field(default_factory=RainRateSamplerConfig)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    seed: int = 0
    presets_path: Path | None = None
    workers: int = 1
    collect_draw_stats: bool = True


@dataclass
class ScanOutcome:
    """Per-scan report line."""

    name: str
    rain_rate: float  # nan for fixed (fog-type) populations
    alpha: float
    n_points: int = 0
    n_lost: int = 0
    n_scattered: int = 0
    n_original: int = 0
    mean_refl_in: float = float("nan")
    mean_refl_out: float = float("nan")
    error: str | None = None


@dataclass
class RunReport:
    """Aggregated outcome of a batch run."""

    model: str
    seed: int
    scans: list[ScanOutcome]
    draw_stats: DrawStatsAccumulator | None = None

    @property
    def failed(self) -> list[ScanOutcome]:
        return [s for s in self.scans if s.error is not None]

    def rain_rates(self) -> np.ndarray:
        return np.array(
            [s.rain_rate for s in self.scans if s.error is None], dtype=np.float64
        )


def scan_seed(global_seed: int, name: str) -> int:
    """Stable 64-bit per-scan seed from the global seed and scan basename."""
    key = struct.pack("<Q", global_seed & 0xFFFFFFFFFFFFFFFF)
    digest = hashlib.blake2b(name.encode("utf-8"), digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little")


def _validate(cfg: RunConfig) -> None:
    selectors = [
        cfg.weather_preset is not None,
        cfg.rain_rate is not None,
        cfg.sample_rain_rate,
    ]
    if sum(selectors) != 1:
        raise UsageError(
            "exactly one of --weather, --rain-rate and --sample-rain-rate "
            "must be given"
        )
    if cfg.model not in ("lisa", "mini_lisa"):
        raise UsageError(f"unknown model {cfg.model!r}")
    if cfg.rain_rate is not None and cfg.rain_rate < 0:
        raise UsageError("--rain-rate must be >= 0")


def _resolve_weather(cfg: RunConfig):
    """Returns (presets table or None, fixed WeatherCondition or None)."""
    if cfg.weather_preset is None:
        return None, None
    presets = load_presets(cfg.presets_path)
    if cfg.weather_preset not in presets:
        known = ", ".join(sorted(presets))
        raise UsageError(
            f"unknown weather preset {cfg.weather_preset!r} (known: {known})"
        )
    entry = presets[cfg.weather_preset]
    if cfg.model == "mini_lisa" and not is_fixed_extinction(entry):
        raise UsageError(
            "mini-lisa needs a fixed-extinction preset; "
            f"{cfg.weather_preset!r} is rate-driven"
        )
    if cfg.model == "lisa" and is_fixed_extinction(entry):
        raise UsageError(
            "lisa needs a sampleable particle distribution; fixed fog preset "
            f"{cfg.weather_preset!r} runs under --model mini-lisa"
        )
    condition = None
    if is_fixed_extinction(entry):
        condition = condition_from_preset(
            cfg.weather_preset, presets, wavelength=cfg.sensor.wavelength
        )
    return presets, condition


def _scan_condition(cfg, presets, fixed_condition, sseed) -> WeatherCondition:
    if fixed_condition is not None:
        return fixed_condition
    if cfg.sample_rain_rate:
        u = float(np.random.default_rng([sseed, 1]).random())
        rate = float(sample_rain_rate(cfg.sampler, u))
    else:
        rate = float(cfg.rain_rate)
    if cfg.weather_preset is not None:
        return condition_from_preset(
            cfg.weather_preset, presets, rain_rate=rate,
            wavelength=cfg.sensor.wavelength,
        )
    return rain_condition(rate, wavelength=cfg.sensor.wavelength)


def _process_scan(cfg, presets, fixed_condition, path: Path):
    sseed = scan_seed(cfg.seed, path.name)
    stats = DrawStatsAccumulator() if cfg.collect_draw_stats else None
    try:
        points = read_scan(path)
        weather = _scan_condition(cfg, presets, fixed_condition, sseed)
        if cfg.model == "lisa":
            result = lisa_augment(
                points, weather, cfg.sensor, seed=sseed, draw_stats=stats
            )
        else:
            result = mini_lisa_augment(points, weather, cfg.sensor, seed=sseed)
        write_scan(result.points, cfg.output_dir / path.name)
        write_labels(result.labels, cfg.output_dir / (path.stem + ".label"))
        lost, scattered, original = result.label_counts()
        n = points.shape[0]
        outcome = ScanOutcome(
            name=path.name,
            rain_rate=weather.rain_rate if weather.rain_rate is not None else float("nan"),
            alpha=weather.alpha,
            n_points=n,
            n_lost=lost,
            n_scattered=scattered,
            n_original=original,
            mean_refl_in=float(points[:, 3].mean()) if n else float("nan"),
            mean_refl_out=float(result.points[:, 3].mean()) if n else float("nan"),
        )
        return outcome, stats
    except (OSError, ValueError) as exc:
        return (
            ScanOutcome(
                name=path.name, rain_rate=float("nan"), alpha=float("nan"),
                error=f"{type(exc).__name__}: {exc}",
            ),
            None,
        )


def run_batch(cfg: RunConfig, files: list[Path] | None = None) -> RunReport:
    """Augment every scan and write outputs, sidecars and the report.

    ``files`` overrides input enumeration (any order; results are identical
    because per-scan seeds depend only on filenames).
    """
    _validate(cfg)
    if files is None:
        files = sorted(Path(cfg.input_dir).glob("*.bin"))
    files = [Path(f) for f in files]
    if not files:
        raise UsageError(f"no input scans found in {cfg.input_dir}")
    presets, fixed_condition = _resolve_weather(cfg)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(
                pool.map(lambda f: _process_scan(cfg, presets, fixed_condition, f), files)
            )
    else:
        results = [_process_scan(cfg, presets, fixed_condition, f) for f in files]

    merged = DrawStatsAccumulator() if cfg.collect_draw_stats else None
    outcomes = []
    for outcome, stats in results:
        outcomes.append(outcome)
        if merged is not None and stats is not None:
            merged.merge(stats)
    outcomes.sort(key=lambda s: s.name)
    report = RunReport(model=cfg.model, seed=cfg.seed, scans=outcomes, draw_stats=merged)
    if cfg.stats_path is not None:
        write_report(report, cfg.stats_path)
    return report


def _label_fractions_by_rate(report: RunReport, n_bins: int = 8):
    """(bin_center, n_scans, frac_lost, frac_scattered, frac_original) rows."""
    ok = [s for s in report.scans if s.error is None and s.n_points > 0]
    rates = np.array([s.rain_rate for s in ok])
    if rates.size == 0 or not np.isfinite(rates).all():
        return []
    hi = max(float(np.ceil(rates.max())), 1.0)
    edges = np.linspace(0.0, hi, n_bins + 1)
    rows = []
    which = np.clip(np.digitize(rates, edges) - 1, 0, n_bins - 1)
    for b in range(n_bins):
        sel = [s for s, w in zip(ok, which) if w == b]
        if not sel:
            continue
        pts = sum(s.n_points for s in sel)
        rows.append(
            (
                0.5 * (edges[b] + edges[b + 1]),
                len(sel),
                sum(s.n_lost for s in sel) / pts,
                sum(s.n_scattered for s in sel) / pts,
                sum(s.n_original for s in sel) / pts,
            )
        )
    return rows


def write_report(report: RunReport, path) -> None:
    """Serialize a run report as diff-friendly plain text."""
    lines = [
        REPORT_HEADER,
        f"# model={report.model} seed={report.seed} scans={len(report.scans)}",
        "# columns: scan rain_rate_mm_hr alpha_per_m points lost scattered "
        "original mean_refl_in mean_refl_out status",
    ]
    for s in report.scans:
        status = "ok" if s.error is None else "error:" + s.error.replace(" ", "_")
        lines.append(
            f"{s.name} {s.rain_rate:.10g} {s.alpha:.10g} {s.n_points} "
            f"{s.n_lost} {s.n_scattered} {s.n_original} "
            f"{s.mean_refl_in:.10g} {s.mean_refl_out:.10g} {status}"
        )
    ok = [s for s in report.scans if s.error is None]
    lines.append(
        "# aggregate: scans_ok=%d scans_failed=%d points=%d lost=%d "
        "scattered=%d original=%d"
        % (
            len(ok),
            len(report.scans) - len(ok),
            sum(s.n_points for s in ok),
            sum(s.n_lost for s in ok),
            sum(s.n_scattered for s in ok),
            sum(s.n_original for s in ok),
        )
    )
    rows = _label_fractions_by_rate(report)
    if rows:
        lines.append("# label fractions vs rain rate:")
        lines.append("# rate_bin_center scans frac_lost frac_scattered frac_original")
        for center, count, fl, fs, fo in rows:
            lines.append(f"{center:.10g} {count} {fl:.10g} {fs:.10g} {fo:.10g}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_hist(path, name, centers, counts) -> None:
    lines = [HISTOGRAM_HEADER, f"# {name}", "# columns: bin_center count"]
    for c, k in zip(centers, counts):
        lines.append(f"{c:.10g} {int(k)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def emit_histograms(report: RunReport, out_dir) -> list[Path]:
    """Write plain-text histogram tables for external plotting.

    Produces ``rain_rate_hist.txt`` (per-scan precipitation rates),
    ``scatterer_range_hist.txt`` (Monte-Carlo ranges normalized by target
    range) and ``scatterer_diameter_hist.txt`` (drawn diameters, mm).
    Empty data yields header-only files.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    rates = report.rain_rates()
    rates = rates[np.isfinite(rates)]
    path = out_dir / "rain_rate_hist.txt"
    if rates.size:
        hi = max(float(np.ceil(rates.max())), 1.0)
        counts, edges = np.histogram(rates, bins=40, range=(0.0, hi))
        _write_hist(path, "rain rate (mm/hr)", 0.5 * (edges[:-1] + edges[1:]), counts)
    else:
        _write_hist(path, "rain rate (mm/hr)", [], [])
    written.append(path)

    stats = report.draw_stats
    path = out_dir / "scatterer_range_hist.txt"
    if stats is not None and stats.total_draws:
        centers = 0.5 * (stats.range_edges[:-1] + stats.range_edges[1:])
        _write_hist(path, "scatterer range / target range", centers, stats.range_counts)
    else:
        _write_hist(path, "scatterer range / target range", [], [])
    written.append(path)

    path = out_dir / "scatterer_diameter_hist.txt"
    if stats is not None and stats.total_draws:
        centers = 0.5 * (stats.diameter_edges[:-1] + stats.diameter_edges[1:])
        _write_hist(path, "scatterer diameter (mm)", centers, stats.diameter_counts)
    else:
        _write_hist(path, "scatterer diameter (mm)", [], [])
    written.append(path)
    return written


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lidarweather",
        description="Batch weather augmentation of lidar scan directories.",
    )
    parser.add_argument(
        "--model", required=True, choices=["lisa", "mini-lisa"],
        help="augmentation engine",
    )
    weather = parser.add_mutually_exclusive_group(required=True)
    weather.add_argument("--weather", help="weather preset name")
    weather.add_argument("--rain-rate", type=float, help="rain rate in mm/hr")
    weather.add_argument(
        "--sample-rain-rate", action="store_true",
        help="draw a per-scan rain rate from the exponential distribution",
    )
    parser.add_argument("--seed", type=int, default=0, help="global 64-bit seed")
    parser.add_argument("--rmax", type=float, default=120.0, help="max range, m")
    parser.add_argument("--rmin", type=float, default=0.9, help="min range, m")
    parser.add_argument(
        "--divergence", type=float, default=3e-3, help="beam divergence, rad"
    )
    parser.add_argument(
        "--range-accuracy", type=float, default=0.09, help="range accuracy, m"
    )
    parser.add_argument(
        "--wavelength", type=float, default=905e-9, help="laser wavelength, m"
    )
    parser.add_argument(
        "--dmin", type=float, default=0.05,
        help="smallest Monte-Carlo particle diameter, mm",
    )
    parser.add_argument("--input", required=True, help="directory of *.bin scans")
    parser.add_argument("--output", required=True, help="output directory")
    parser.add_argument(
        "--stats", default=None,
        help="report path (default: <output>/report.txt)",
    )
    parser.add_argument(
        "--presets", default=None,
        help=f"preset file (default: ${'{'}LIDARWEATHER_PRESETS{'}'} or packaged)",
    )
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    try:
        sensor = SensorConfig(
            r_max=args.rmax,
            r_min=args.rmin,
            divergence=args.divergence,
            range_accuracy=args.range_accuracy,
            wavelength=args.wavelength,
            d_start=args.dmin,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    workers = int(os.environ.get(WORKERS_ENV_VAR, "1"))
    output_dir = Path(args.output)
    stats = Path(args.stats) if args.stats is not None else output_dir / "report.txt"
    return RunConfig(
        model=args.model.replace("-", "_"),
        input_dir=Path(args.input),
        output_dir=output_dir,
        stats_path=stats,
        weather_preset=args.weather,
        rain_rate=args.rain_rate,
        sample_rain_rate=args.sample_rain_rate,
        sensor=sensor,
        seed=args.seed,
        presets_path=Path(args.presets) if args.presets else None,
        workers=max(workers, 1),
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        report = run_batch(cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    emit_histograms(report, cfg.output_dir)
    if report.failed:
        for s in report.failed:
            print(f"failed: {s.name}: {s.error}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
