"""Particle size distributions for rain, snow and fog.

All densities ``N(D)`` are number densities per unit volume per unit
diameter, in m^-3 mm^-1, with diameters in millimetres throughout this
module.  Conversions to metres happen once, at the module boundaries that
need physical cross sections (see :mod:`lidarweather.atmosphere`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn

__all__ = [
    "MarshallPalmerPSD",
    "GammaPSD",
    "MonodispersePSD",
    "marshall_palmer_from_rain_rate",
    "evaluate_density",
    "tail_count",
    "sample_diameter",
]


@dataclass(frozen=True)
class MarshallPalmerPSD:
    """Exponential drop size distribution N(D) = n0 * exp(-lambda_mp * D).

    ``n0`` is the density intercept in m^-3 mm^-1 and ``lambda_mp`` the decay
    constant in mm^-1.  ``rain_rate`` records the precipitation rate (mm/hr)
    that generated the parameters.  A zero rain rate is represented by the
    empty distribution (``n0 = 0``).
    """

    n0: float
    lambda_mp: float
    rain_rate: float

    def __post_init__(self):
        if self.n0 < 0:
            raise ValueError(f"n0 must be >= 0, got {self.n0}")
        if not self.lambda_mp > 0:
            raise ValueError(f"lambda_mp must be > 0, got {self.lambda_mp}")


@dataclass(frozen=True)
class GammaPSD:
    """Modified-Gamma size distribution used for fog droplet populations.

    N(D) = gamma_exp * n0_total * b^((a+1)/gamma_exp) / Gamma((a+1)/gamma_exp)
           * (D/2)^a * exp(-b * (D/2)^gamma_exp)

    with the rate parameter tied to the mode diameter ``d_mode`` (mm) by
    b = a / (gamma_exp * (d_mode/2)^gamma_exp), so the density peaks exactly
    at D = d_mode.  ``n0_total`` is a number-density scale in m^-3.
    """

    n0_total: float
    a: float
    gamma_exp: float
    d_mode: float
    b: float = field(init=False)

    def __post_init__(self):
        if self.n0_total <= 0:
            raise ValueError(f"n0_total must be > 0, got {self.n0_total}")
        if self.a <= 0:
            raise ValueError(f"shape exponent a must be > 0, got {self.a}")
        if self.gamma_exp <= 0:
            raise ValueError(f"gamma_exp must be > 0, got {self.gamma_exp}")
        if self.d_mode <= 0:
            raise ValueError(f"d_mode must be > 0, got {self.d_mode}")
        object.__setattr__(
            self, "b", self.a / (self.gamma_exp * (self.d_mode / 2.0) ** self.gamma_exp)
        )


@dataclass(frozen=True)
class MonodispersePSD:
    """Degenerate distribution: ``number_density`` (m^-3) droplets, all with
    the same ``diameter`` (mm).  Mainly useful for closed-form validation."""

    diameter: float
    number_density: float

    def __post_init__(self):
        if self.diameter <= 0:
            raise ValueError(f"diameter must be > 0, got {self.diameter}")
        if self.number_density < 0:
            raise ValueError(f"number_density must be >= 0, got {self.number_density}")


def marshall_palmer_from_rain_rate(
    rain_rate: float,
    n0_coeff: float = 8000.0,
    n0_exp: float = 0.0,
    lambda_coeff: float = 4.1,
    lambda_exp: float = -0.21,
) -> MarshallPalmerPSD:
    """Exponential PSD parametrized by precipitation rate in mm/hr.

    Defaults are the canonical rain values n0 = 8000 m^-3 mm^-1 and
    lambda = 4.1 * Rr^-0.21 mm^-1; snow uses different coefficients supplied
    through the weather preset file.
    """
    if not (isinstance(rain_rate, (int, float)) and math.isfinite(rain_rate)):
        raise ValueError(f"rain_rate must be a finite number, got {rain_rate!r}")
    if rain_rate < 0:
        raise ValueError(f"rain_rate must be >= 0, got {rain_rate}")
    if rain_rate == 0:
        return MarshallPalmerPSD(n0=0.0, lambda_mp=math.inf, rain_rate=0.0)
    return MarshallPalmerPSD(
        n0=n0_coeff * rain_rate**n0_exp,
        lambda_mp=lambda_coeff * rain_rate**lambda_exp,
        rain_rate=float(rain_rate),
    )


def evaluate_density(psd, d):
    """Number density N(D) in m^-3 mm^-1 at diameter ``d`` (mm, scalar or array).

    Besides the distribution types above, any object exposing a
    ``density(d)`` method is accepted, so custom populations can be fed to
    the extinction integral.
    """
    d = np.asarray(d, dtype=np.float64)
    if (d < 0).any():
        raise ValueError("diameters must be >= 0")
    if isinstance(psd, MarshallPalmerPSD):
        if psd.n0 == 0.0:
            return np.zeros_like(d)[()]
        return (psd.n0 * np.exp(-psd.lambda_mp * d))[()]
    if isinstance(psd, GammaPSD):
        s = (psd.a + 1.0) / psd.gamma_exp
        coeff = psd.gamma_exp * psd.n0_total * psd.b**s / gamma_fn(s)
        r = d / 2.0
        with np.errstate(divide="ignore"):
            # r^a underflows to 0 at d = 0 for a > 0, which is the correct limit
            val = coeff * r**psd.a * np.exp(-psd.b * r**psd.gamma_exp)
        return val[()]
    if hasattr(psd, "density"):
        return np.asarray(psd.density(d), dtype=np.float64)[()]
    raise TypeError(f"no density evaluation for {type(psd).__name__}")


def tail_count(psd, d_start: float) -> float:
    """Total droplet count per m^3 with diameter >= ``d_start`` (mm)."""
    if d_start < 0:
        raise ValueError(f"d_start must be >= 0, got {d_start}")
    if isinstance(psd, MarshallPalmerPSD):
        if psd.n0 == 0.0:
            return 0.0
        return psd.n0 / psd.lambda_mp * math.exp(-psd.lambda_mp * d_start)
    if isinstance(psd, MonodispersePSD):
        return psd.number_density if psd.diameter >= d_start else 0.0
    if isinstance(psd, GammaPSD):
        # total count over all diameters is 2*n0_total (substitution u = b*(D/2)^gamma)
        total = 2.0 * psd.n0_total
        value, _ = integrate.quad(
            lambda d: float(evaluate_density(psd, d)),
            d_start,
            np.inf,
            epsabs=1e-9 * total,
            limit=200,
        )
        return max(value, 0.0)
    raise TypeError(f"no tail count for {type(psd).__name__}")


def sample_diameter(psd, d_start: float, u):
    """Inverse-transform draw of a diameter (mm) conditioned on D >= d_start.

    For the exponential distribution this is the shifted-exponential map
    ``d = -ln(1 - u)/lambda + d_start``; ``u`` may be a scalar or an array of
    uniform(0, 1) variates.  ``u = 1`` is rejected (infinite diameter).
    """
    if d_start < 0:
        raise ValueError(f"d_start must be >= 0, got {d_start}")
    u = np.asarray(u, dtype=np.float64)
    if ((u < 0) | (u >= 1)).any():
        raise ValueError("uniform variates must lie in [0, 1)")
    if isinstance(psd, MarshallPalmerPSD):
        if not psd.lambda_mp > 0:
            raise ValueError("lambda_mp must be > 0 for sampling")
        return (-np.log1p(-u) / psd.lambda_mp + d_start)[()]
    if isinstance(psd, MonodispersePSD):
        if psd.diameter < d_start:
            raise ValueError("monodisperse diameter below d_start: nothing to sample")
        return np.broadcast_to(np.float64(psd.diameter), u.shape).copy()[()]
    raise TypeError(f"no diameter sampling for {type(psd).__name__}")
