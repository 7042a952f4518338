"""Hybrid transmission modes and the semantic efficiency metric.

Three modes share one task: plain bit transmission of a compressed image,
text-only semantic transmission, and text + image-feature transmission with
several compression layers. Semantic modes reconstruct through ``e``
denoising steps; quality follows a saturating surrogate curve
``floor + (ceiling - floor) * (1 - exp(-e / tau))``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

from .errors import BadWeights, InvalidChoice, ZeroRateHop

_WEIGHT_TOL = 1e-9


class Mode(enum.IntEnum):
    BIT = 1
    TEXT = 2
    TEXT_IMAGE = 3


@dataclass(frozen=True)
class ModeChoice:
    mode: Mode
    layer: int = 1
    denoise_steps: int = 0

    def validate(self, profile: "ModeProfile | None" = None) -> "ModeChoice":
        if self.mode is Mode.BIT:
            if self.denoise_steps != 0 or self.layer != 1:
                raise InvalidChoice("BIT mode takes layer 1 and zero denoising steps")
        else:
            if self.denoise_steps < 1:
                raise InvalidChoice(f"{self.mode.name} needs at least one denoising step")
            if self.mode is Mode.TEXT and self.layer != 1:
                raise InvalidChoice("TEXT mode has a single layer")
            if self.layer < 1 or (profile is not None and self.mode is Mode.TEXT_IMAGE
                                  and self.layer > profile.n_layers):
                raise InvalidChoice(f"layer {self.layer} out of range")
        return self

    @property
    def label(self) -> str:
        if self.mode is Mode.BIT:
            return "bit"
        if self.mode is Mode.TEXT:
            return "text"
        return f"text_image{self.layer}"


@dataclass(frozen=True)
class ModeProfile:
    original_bits: float = 3.5e6 * 8
    bit_compression: float = 8.0
    text_bits: float = 1e3 * 8
    layer_bits: tuple[float, ...] = (64e3 * 8, 32e3 * 8, 16e3 * 8)
    tx_compute: float = 810.0
    rx_compute_per_step: float = 686.0
    bit_quality: float = 40.0
    text_floor: float = 10.0
    text_ceiling: float = 16.0
    text_timescale: float = 8.0
    layer_floors: tuple[float, ...] = (12.0, 12.0, 12.0)
    layer_ceilings: tuple[float, ...] = (26.0, 23.0, 20.0)
    layer_timescales: tuple[float, ...] = (8.0, 8.0, 8.0)

    def __post_init__(self):
        n = len(self.layer_bits)
        if not (len(self.layer_floors) == len(self.layer_ceilings) == len(self.layer_timescales) == n):
            raise ValueError("per-layer tuples must have equal length")
        if not (self.bit_bits > max(self.layer_bits) and min(self.layer_bits) > self.text_bits):
            raise ValueError("payload ordering BIT > TEXT_IMAGE > TEXT violated")
        for lo, hi, tau in zip(self.layer_floors + (self.text_floor,),
                               self.layer_ceilings + (self.text_ceiling,),
                               self.layer_timescales + (self.text_timescale,)):
            if hi < lo or tau <= 0:
                raise ValueError("quality ceiling must be >= floor and timescale positive")

    @property
    def n_layers(self) -> int:
        return len(self.layer_bits)

    @property
    def bit_bits(self) -> float:
        return self.original_bits / self.bit_compression

    def payload_bits(self, mode: Mode, layer: int = 1) -> float:
        if mode is Mode.BIT:
            return self.bit_bits
        if mode is Mode.TEXT:
            return self.text_bits
        return self.layer_bits[layer - 1]

    def quality_curve(self, mode: Mode, layer: int = 1) -> tuple[float, float, float]:
        """(floor, ceiling, timescale) for a semantic mode."""
        if mode is Mode.TEXT:
            return self.text_floor, self.text_ceiling, self.text_timescale
        i = layer - 1
        return self.layer_floors[i], self.layer_ceilings[i], self.layer_timescales[i]


def quality(choice: ModeChoice, profile: ModeProfile) -> float:
    choice.validate(profile)
    if choice.mode is Mode.BIT:
        return profile.bit_quality
    floor, ceiling, tau = profile.quality_curve(choice.mode, choice.layer)
    return floor + (ceiling - floor) * (1.0 - math.exp(-choice.denoise_steps / tau))


def compute_cost(choice: ModeChoice, profile: ModeProfile) -> tuple[float, float]:
    """(transmitter, receiver) workload in GFLOP."""
    choice.validate(profile)
    if choice.mode is Mode.BIT:
        return 0.0, 0.0
    return profile.tx_compute, choice.denoise_steps * profile.rx_compute_per_step


def task_delay(choice: ModeChoice, profile: ModeProfile, route_rates: Sequence[float],
               route_prop_delays: Sequence[float], tx_throughput: float, rx_throughput: float) -> float:
    """Extraction + per-hop store-and-forward serialisation + reconstruction time."""
    if any(r <= 0 for r in route_rates):
        raise ZeroRateHop("a hop on the chosen route has zero rate")
    tx, rx = compute_cost(choice, profile)
    payload = profile.payload_bits(choice.mode, choice.layer)
    hops = sum(payload / r for r in route_rates) + sum(route_prop_delays)
    return tx / tx_throughput + hops + rx / rx_throughput


@dataclass(frozen=True)
class SemWeights:
    theta_d: float = 1.0 / 3.0
    theta_r: float = 1.0 / 3.0
    theta_c: float = 1.0 / 3.0

    def __post_init__(self):
        ws = (self.theta_d, self.theta_r, self.theta_c)
        if any(not 0.0 <= w <= 1.0 for w in ws) or abs(sum(ws) - 1.0) > _WEIGHT_TOL:
            raise BadWeights(f"weights {ws} must lie in [0, 1] and sum to 1")

    @classmethod
    def delay_sweep(cls, theta_d: float) -> "SemWeights":
        """Delay weight ``theta_d`` with the remainder split equally."""
        rest = (1.0 - theta_d) / 2.0
        return cls(theta_d, rest, 1.0 - theta_d - rest)


@dataclass(frozen=True)
class SemNormalization:
    quality_ref: float = 40.0
    compute_ref: float = 16 * 686.0 + 810.0

    @classmethod
    def for_profile(cls, profile: ModeProfile, max_steps: int) -> "SemNormalization":
        return cls(quality_ref=profile.bit_quality,
                   compute_ref=max_steps * profile.rx_compute_per_step + profile.tx_compute)


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def normalized_terms(delay: float, delay_max: float, quality_: float, quality_min: float,
                     compute: float, norm: SemNormalization) -> tuple[float, float, float]:
    """(latency margin, quality margin, compute load), each clamped to [0, 1]."""
    if delay_max <= 0 or norm.compute_ref <= 0 or norm.quality_ref <= quality_min:
        raise ValueError("normalisation references must be positive")
    return (_clamp01((delay_max - delay) / delay_max),
            _clamp01((quality_ - quality_min) / (norm.quality_ref - quality_min)),
            _clamp01(compute / norm.compute_ref))


def sem_terms(delay: float, delay_max: float, quality_: float, quality_min: float, compute: float,
              weights: SemWeights, norm: SemNormalization) -> tuple[float, float, float]:
    """Weighted (latency, quality, compute) terms; SEM is t0 + t1 - t2."""
    d, q, c = normalized_terms(delay, delay_max, quality_, quality_min, compute, norm)
    return weights.theta_d * d, weights.theta_r * q, weights.theta_c * c


def sem(delay: float, delay_max: float, quality_: float, quality_min: float, compute: float,
        weights: SemWeights, norm: SemNormalization) -> float:
    t_d, t_r, t_c = sem_terms(delay, delay_max, quality_, quality_min, compute, weights, norm)
    return t_d + t_r - t_c


@dataclass
class TaskOutcome:
    task_id: int
    delay: float
    delay_max: float
    quality: float
    quality_min: float
    compute: float
    completed: bool
    sem: float = field(default=float("nan"))
