"""Named atmospheric states and the human-editable weather preset file.

A :class:`WeatherCondition` bundles everything the augmentation engines
need: the particle size distribution, the scatterer refractive index and the
precomputed extinction coefficient.  Conditions are built either directly
from a precipitation rate (:func:`rain_condition`) or from a named entry in
a YAML preset file (:func:`condition_from_preset`).

Preset file schema (see ``data/presets.yaml`` for the shipped defaults)::

    version: 1
    presets:
      <name>:
        kind: marshall_palmer | gamma
        # marshall_palmer: n0 = n0_coeff * Rr^n0_exp,
        #                  lambda = lambda_coeff * Rr^lambda_exp  (D in mm)
        n0_coeff: float       # m^-3 mm^-1
        n0_exp: float
        lambda_coeff: float   # mm^-1
        lambda_exp: float
        rate_mm_hr: float     # default precipitation rate
        # gamma: fixed fog population (mode diameter in mm)
        n0_total: float       # m^-3
        a: float
        gamma_exp: float
        d_mode_mm: float
        refractive_index: {real: float, imag: float}
        extinction: per_rate | fixed

``extinction: fixed`` marks populations whose extinction coefficient is
computed once from the distribution and shared by every scan (fog);
``per_rate`` populations are re-evaluated for each precipitation rate.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import yaml

from .atmosphere import extinction_from_psd
from .psd import GammaPSD, marshall_palmer_from_rain_rate
from .scattering import WATER_INDEX_905NM

__all__ = [
    "PRESETS_ENV_VAR",
    "WeatherCondition",
    "load_presets",
    "rain_condition",
    "condition_from_preset",
]

PRESETS_ENV_VAR = "LIDARWEATHER_PRESETS"


@dataclass(frozen=True)
class WeatherCondition:
    """One atmospheric state, ready to feed to an augmentation engine.

    ``rain_rate`` is the generating precipitation rate in mm/hr, or ``None``
    for fixed populations such as fog.  ``alpha`` is the one-way Napierian
    extinction coefficient in m^-1.
    """

    name: str
    psd: object
    refractive_index: complex
    alpha: float
    rain_rate: float | None = None


def load_presets(path: str | os.PathLike | None = None) -> dict:
    """Load the preset table from ``path``, the ``LIDARWEATHER_PRESETS``
    environment variable, or the packaged defaults, in that order."""
    if path is None:
        path = os.environ.get(PRESETS_ENV_VAR)
    if path is None:
        text = (
            resources.files("lidarweather").joinpath("data/presets.yaml").read_text()
        )
    else:
        text = Path(path).read_text()
    doc = yaml.safe_load(text)
    if not isinstance(doc, dict) or "presets" not in doc:
        raise ValueError("preset file must be a mapping with a 'presets' table")
    presets = doc["presets"]
    if not isinstance(presets, dict):
        raise ValueError("'presets' must map names to preset entries")
    return presets


def _index_of(entry: dict, name: str) -> complex:
    try:
        idx = entry["refractive_index"]
        return complex(float(idx["real"]), float(idx["imag"]))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"preset {name!r}: malformed refractive_index") from exc


def rain_condition(
    rain_rate: float,
    wavelength: float = 905e-9,
    refractive_index: complex = WATER_INDEX_905NM,
) -> WeatherCondition:
    """Marshall-Palmer rain at the given precipitation rate (mm/hr)."""
    psd = marshall_palmer_from_rain_rate(rain_rate)
    alpha = extinction_from_psd(psd, wavelength, refractive_index)
    return WeatherCondition(
        name=f"rain_{rain_rate:g}mmhr",
        psd=psd,
        refractive_index=refractive_index,
        alpha=alpha,
        rain_rate=float(rain_rate),
    )


def condition_from_preset(
    name: str,
    presets: dict | None = None,
    rain_rate: float | None = None,
    wavelength: float = 905e-9,
) -> WeatherCondition:
    """Build a :class:`WeatherCondition` from a named preset entry.

    ``rain_rate`` overrides the preset's ``rate_mm_hr`` default for
    rate-driven (``marshall_palmer``) presets and is rejected for fixed
    populations.
    """
    if presets is None:
        presets = load_presets()
    try:
        entry = presets[name]
    except KeyError:
        known = ", ".join(sorted(presets))
        raise ValueError(f"unknown weather preset {name!r} (known: {known})") from None
    kind = entry.get("kind")
    index = _index_of(entry, name)
    if kind == "marshall_palmer":
        rate = rain_rate if rain_rate is not None else entry.get("rate_mm_hr")
        if rate is None:
            raise ValueError(f"preset {name!r} needs a precipitation rate")
        psd = marshall_palmer_from_rain_rate(
            float(rate),
            n0_coeff=float(entry.get("n0_coeff", 8000.0)),
            n0_exp=float(entry.get("n0_exp", 0.0)),
            lambda_coeff=float(entry.get("lambda_coeff", 4.1)),
            lambda_exp=float(entry.get("lambda_exp", -0.21)),
        )
        alpha = extinction_from_psd(psd, wavelength, index)
        return WeatherCondition(
            name=name,
            psd=psd,
            refractive_index=index,
            alpha=alpha,
            rain_rate=float(rate),
        )
    if kind == "gamma":
        if rain_rate is not None:
            raise ValueError(f"preset {name!r} is a fixed population, not rate-driven")
        try:
            psd = GammaPSD(
                n0_total=float(entry["n0_total"]),
                a=float(entry["a"]),
                gamma_exp=float(entry["gamma_exp"]),
                d_mode=float(entry["d_mode_mm"]),
            )
        except KeyError as exc:
            raise ValueError(f"preset {name!r}: missing gamma parameter {exc}") from None
        alpha = extinction_from_psd(psd, wavelength, index)
        return WeatherCondition(
            name=name, psd=psd, refractive_index=index, alpha=alpha, rain_rate=None
        )
    raise ValueError(f"preset {name!r}: unknown kind {kind!r}")


def is_fixed_extinction(entry: dict) -> bool:
    """True when a preset entry declares a scan-independent extinction."""
    return entry.get("extinction", "per_rate") == "fixed"
