"""Channel coefficients and Shannon capacities for the three link classes.

* UAV -> user: Rician fading with separate LoS / NLoS path-loss exponents.
* LEO -> ground (user or UAV): deterministic free-space coefficient, observed
  through an outdated-CSI model whose correlation is J0(2*pi*f_D*T).
* LEO -> LEO: inter-satellite link budget with thermal noise.

All quantities are linear SI units; dB conversions happen in the config layer.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadConfig, NonPositiveDistance
from .kernels import j0

SPEED_OF_LIGHT = 299_792_458.0
BOLTZMANN = 1.380649e-23


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class FadingParams:
    rician_kappa: float = 10.0
    alpha_los: float = 2.2
    alpha_nlos: float = 2.5
    noise_power: float = 1e-16
    bandwidth: float = 20e6
    los_phase: float = 0.0

    def __post_init__(self):
        if not self.rician_kappa >= 0:
            raise BadConfig("rician_kappa must be >= 0")
        if not (self.alpha_los > 0 and self.alpha_nlos > 0):
            raise BadConfig("path-loss exponents must be positive")
        if not (self.noise_power > 0 and self.bandwidth > 0):
            raise BadConfig("noise_power and bandwidth must be positive")


@dataclass(frozen=True)
class SatLinkParams:
    antenna_gain: float
    carrier_wavelength: float
    phase: float = 0.0
    doppler_max: float = 0.0
    prop_delay: float = 0.0

    def __post_init__(self):
        if not (self.antenna_gain > 0 and self.carrier_wavelength > 0):
            raise BadConfig("antenna_gain and carrier_wavelength must be positive")

    @property
    def correlation(self) -> float:
        return j0(2.0 * math.pi * self.doppler_max * self.prop_delay)

    @classmethod
    def for_link(cls, d: float, relative_speed: float, antenna_gain: float,
                 carrier_freq: float, phase: float = 0.0) -> "SatLinkParams":
        """Doppler from ``relative_speed`` at ``carrier_freq``; delay is d / c."""
        return cls(antenna_gain=antenna_gain,
                   carrier_wavelength=SPEED_OF_LIGHT / carrier_freq,
                   phase=phase,
                   doppler_max=relative_speed / SPEED_OF_LIGHT * carrier_freq,
                   prop_delay=d / SPEED_OF_LIGHT)


@dataclass(frozen=True)
class IslParams:
    peak_gain: float = db_to_linear(42.0)
    boltzmann: float = BOLTZMANN
    thermal_noise: float = 354.81
    carrier_freq: float = 25e9
    light_speed: float = SPEED_OF_LIGHT
    bandwidth: float = 20e6

    def __post_init__(self):
        for name in ("peak_gain", "boltzmann", "thermal_noise", "carrier_freq",
                     "light_speed", "bandwidth"):
            if not getattr(self, name) > 0:
                raise BadConfig(f"{name} must be positive")


@dataclass(frozen=True)
class ChannelRealization:
    link: tuple[str, str]
    exact_coeff: complex
    outdated_coeff: complex
    capacity: float
    capacity_outdated: float


def complex_normal(rng: np.random.Generator, size=None, variance: float = 1.0):
    """Circularly-symmetric complex Gaussian with E|z|^2 = variance."""
    scale = math.sqrt(variance / 2.0)
    if size is None:
        re, im = rng.standard_normal(2)
        return complex(re * scale, im * scale)
    z = rng.standard_normal((2,) + tuple(np.atleast_1d(size)))
    return (z[0] + 1j * z[1]) * scale


def _check_distance(d):
    if np.any(np.asarray(d) <= 0):
        raise NonPositiveDistance(f"distance must be positive, got {d}")


def sample_uav_user_channel(d: float, params: FadingParams, rng: np.random.Generator) -> complex:
    _check_distance(d)
    nlos = complex_normal(rng)
    return _rician(d, params, nlos)


def sample_uav_user_channels(d: np.ndarray, params: FadingParams, rng: np.random.Generator) -> np.ndarray:
    """Vectorised Rician draws, one per distance."""
    d = np.asarray(d, dtype=float)
    _check_distance(d)
    nlos = complex_normal(rng, d.shape)
    return _rician(d, params, nlos)


def _rician(d, params: FadingParams, nlos):
    k = params.rician_kappa
    if math.isinf(k):
        w_los, w_nlos = 1.0, 0.0
    else:
        w_los, w_nlos = math.sqrt(k / (k + 1.0)), math.sqrt(1.0 / (k + 1.0))
    los = complex(math.cos(params.los_phase), math.sin(params.los_phase))
    return (w_los * los * d ** (-params.alpha_los / 2.0)
            + w_nlos * nlos * d ** (-params.alpha_nlos / 2.0))


def sat_channel(d: float, params: SatLinkParams) -> complex:
    _check_distance(d)
    mag = math.sqrt(params.antenna_gain) * params.carrier_wavelength / (4.0 * math.pi * d)
    return mag * complex(math.cos(params.phase), math.sin(params.phase))


def apply_outdated_csi(h: complex, params: SatLinkParams, rng: np.random.Generator,
                       correlation: float | None = None) -> complex:
    """h_bar = xi * h + sqrt(1 - xi^2) * h_hat with E|h_hat|^2 = |h|^2."""
    xi = params.correlation if correlation is None else correlation
    if abs(xi) > 1.0:
        raise BadConfig(f"correlation {xi} outside [-1, 1]")
    h_hat = complex_normal(rng, variance=abs(h) ** 2)
    return xi * h + math.sqrt(1.0 - xi * xi) * h_hat


def capacity(h, tx_power: float, bandwidth: float, noise: float):
    """B log2(1 + P |h|^2 / sigma^2); vectorises over ``h``."""
    gain = np.abs(h) ** 2 if isinstance(h, np.ndarray) else abs(h) ** 2
    snr = tx_power * gain / noise
    if isinstance(snr, np.ndarray):
        return bandwidth * np.log2(1.0 + snr)
    return bandwidth * math.log2(1.0 + snr)


def isl_snr(d: float, tx_power: float, params: IslParams) -> float:
    _check_distance(d)
    path = (4.0 * math.pi * d * params.carrier_freq / params.light_speed) ** 2
    return (tx_power * params.peak_gain ** 2
            / (params.boltzmann * params.thermal_noise * params.bandwidth * path))


def isl_capacity(d: float, tx_power: float, params: IslParams) -> float:
    return params.bandwidth * math.log2(1.0 + isl_snr(d, tx_power, params))
