"""Physics-based augmentation of clear-weather lidar scans with rain, snow and fog.

The package converts clean lidar point clouds into simulated adverse-weather
scans using exact Mie scattering efficiencies, measured-drop-size
distributions, Beer-Lambert extinction, and a hybrid Monte-Carlo scatterer
model, exposed as a numpy library and a batch command-line tool.
"""

from .atmosphere import (
    RainRateSamplerConfig,
    asymptotic_rain_extinction,
    extinction_from_psd,
    sample_rain_rate,
    transmittance,
)
from .augment import (
    AugmentResult,
    DrawStatsAccumulator,
    Label,
    SensorConfig,
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
from .psd import (
    GammaPSD,
    MarshallPalmerPSD,
    MonodispersePSD,
    evaluate_density,
    marshall_palmer_from_rain_rate,
    sample_diameter,
    tail_count,
)
from .scan_io import (
    ScanDataError,
    ScanFormatError,
    read_labels,
    read_scan,
    read_scan_text,
    write_labels,
    write_scan,
    write_scan_text,
)
from .scattering import (
    ICE_INDEX_905NM,
    WATER_INDEX_905NM,
    MieEfficiencies,
    fresnel_reflectivity,
    mie_efficiencies,
    mie_efficiencies_batch,
    size_parameter,
)
from .weather import (
    WeatherCondition,
    condition_from_preset,
    load_presets,
    rain_condition,
)

__version__ = "0.1.0"

__all__ = [
    "AugmentResult",
    "DrawStatsAccumulator",
    "GammaPSD",
    "ICE_INDEX_905NM",
    "Label",
    "MarshallPalmerPSD",
    "MieEfficiencies",
    "MonodispersePSD",
    "RainRateSamplerConfig",
    "ScanDataError",
    "ScanFormatError",
    "SensorConfig",
    "WATER_INDEX_905NM",
    "WeatherCondition",
    "apply_range_noise",
    "asymptotic_rain_extinction",
    "beam_diameter",
    "condition_from_preset",
    "evaluate_density",
    "expected_scatterer_count",
    "extinction_from_psd",
    "fresnel_reflectivity",
    "lisa_augment",
    "load_presets",
    "marshall_palmer_from_rain_rate",
    "mie_efficiencies",
    "mie_efficiencies_batch",
    "min_detectable_power",
    "mini_lisa_augment",
    "probabilistic_round",
    "range_sigma",
    "rain_condition",
    "read_labels",
    "read_scan",
    "read_scan_text",
    "sample_diameter",
    "sample_rain_rate",
    "sample_scatterer_range",
    "scatterer_received_power",
    "size_parameter",
    "tail_count",
    "target_received_power",
    "transmittance",
    "write_labels",
    "write_scan",
    "write_scan_text",
]
