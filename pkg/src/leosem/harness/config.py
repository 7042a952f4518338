"""Scenario configuration: INI sections mapped 1:1 onto typed dataclasses.

Every key of every section is a field of the matching dataclass below, with
the same name. Floats are written with ``repr`` so a load/serialise/load
cycle reproduces the configuration exactly. Decibel quantities stay in dB
in the file and are converted when the simulator objects are built.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
from dataclasses import dataclass, field
from pathlib import Path

from ..channel import FadingParams, IslParams, db_to_linear, dbm_to_watt
from ..env import EnvConfig
from ..errors import BadConfig
from ..geometry import WorldConfig
from ..rl import TrainerConfig
from ..semlink import ModeProfile, SemWeights


@dataclass(frozen=True)
class ChannelSection:
    rician_kappa: float = 10.0
    alpha_los: float = 2.2
    alpha_nlos: float = 2.5
    noise_dbm: float = -130.0
    bandwidth: float = 20e6
    los_phase: float = 0.0
    leo_antenna_gain_db: float = 42.0
    ground_carrier_freq: float = 20e9
    isl_peak_gain_db: float = 42.0
    isl_carrier_freq: float = 25e9
    thermal_noise: float = 354.81
    leo_power: float = 1.0
    uav_power: float = 0.35
    uav_coverage_radius: float = 300.0


@dataclass(frozen=True)
class ScenarioSection:
    n_leo: int = 5
    n_uav: int = 2
    n_user: int = 5
    n_tasks: int = 100
    arrival_rate: float = 2.0
    horizon: int = 600
    service_radius: float = 50e3
    relay_users: tuple[int, ...] = (1, 2)
    uav_spawn_distance: tuple[float, ...] = (150.0, 450.0)
    leo_spacing: tuple[float, ...] = (200e3, 600e3)
    leo_first_offset_max: float = 800e3
    delay_max_range: tuple[float, ...] = (3.0, 10.0)
    quality_min_range: tuple[float, ...] = (12.0, 22.0)
    step_options: tuple[int, ...] = (4, 8, 16)
    allowed_modes: tuple[str, ...] = ("bit", "text", "text_image")
    hover_only: bool = False
    tx_throughput: float = 10_000.0
    rx_throughput: float = 5_000.0
    theta_d: float = 1.0 / 3.0
    theta_r: float = 1.0 / 3.0
    theta_c: float = 1.0 / 3.0


@dataclass(frozen=True)
class ExperimentSettings:
    master_seed: int = 2025
    replications: int = 5
    eval_episodes: int = 4
    greedy_eval: bool = True
    delay_weights: tuple[float, ...] = (0.1, 0.3, 0.5, 0.7, 0.9)
    fixed_model_weight: float = 0.1
    powers: tuple[float, ...] = (0.5, 1.0, 2.0, 4.0)
    # layer:steps:throughput-scale, ordered level 1 (moderate), 2 (less), 3 (most)
    breakdown_levels: tuple[str, ...] = ("1:8:1.0", "1:4:0.25", "1:16:4.0")
    breakdown_episodes: int = 1
    write_traces: bool = True

    def __post_init__(self):
        if self.replications < 1 or self.eval_episodes < 1 or self.breakdown_episodes < 1:
            raise BadConfig("replications and episode counts must be >= 1")
        if not self.delay_weights or any(not 0.0 <= w <= 1.0 for w in self.delay_weights):
            raise BadConfig("delay_weights must be a nonempty list in [0, 1]")
        if not self.powers or min(self.powers) <= 0:
            raise BadConfig("powers must be a nonempty list of positive values")
        for lv in self.breakdown_levels:
            parse_level(lv)


def parse_level(text: str) -> tuple[int, int, float]:
    try:
        layer, steps, scale = text.split(":")
        out = int(layer), int(steps), float(scale)
    except ValueError:
        raise BadConfig(f"breakdown level {text!r} is not layer:steps:scale") from None
    if out[0] < 1 or out[1] < 1 or out[2] <= 0:
        raise BadConfig(f"breakdown level {text!r} out of range")
    return out


SECTIONS = {
    "world": WorldConfig,
    "channel": ChannelSection,
    "semantic": ModeProfile,
    "scenario": ScenarioSection,
    "trainer": TrainerConfig,
    "experiment": ExperimentSettings,
}


@dataclass(frozen=True)
class ScenarioConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    channel: ChannelSection = field(default_factory=ChannelSection)
    semantic: ModeProfile = field(default_factory=ModeProfile)
    scenario: ScenarioSection = field(default_factory=ScenarioSection)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    experiment: ExperimentSettings = field(default_factory=ExperimentSettings)

    # ------------------------------------------------------------- builders
    def env_config(self, **overrides) -> EnvConfig:
        ch, sc = self.channel, self.scenario
        try:
            kw = dict(
                world=self.world,
                fading=FadingParams(ch.rician_kappa, ch.alpha_los, ch.alpha_nlos,
                                    dbm_to_watt(ch.noise_dbm), ch.bandwidth, ch.los_phase),
                isl=IslParams(peak_gain=db_to_linear(ch.isl_peak_gain_db), thermal_noise=ch.thermal_noise,
                              carrier_freq=ch.isl_carrier_freq, bandwidth=ch.bandwidth),
                profile=self.semantic,
                weights=SemWeights(sc.theta_d, sc.theta_r, sc.theta_c),
                n_leo=sc.n_leo, n_uav=sc.n_uav, n_user=sc.n_user, n_tasks=sc.n_tasks,
                arrival_rate=sc.arrival_rate, horizon=sc.horizon,
                leo_power=ch.leo_power, uav_power=ch.uav_power,
                leo_antenna_gain=db_to_linear(ch.leo_antenna_gain_db),
                ground_carrier_freq=ch.ground_carrier_freq,
                service_radius=sc.service_radius,
                uav_coverage_radius=ch.uav_coverage_radius,
                uav_spawn_distance=_pair(sc.uav_spawn_distance, "uav_spawn_distance"),
                relay_users=_pair(sc.relay_users, "relay_users"),
                leo_spacing=_pair(sc.leo_spacing, "leo_spacing"),
                leo_first_offset_max=sc.leo_first_offset_max,
                delay_max_range=_pair(sc.delay_max_range, "delay_max_range"),
                quality_min_range=_pair(sc.quality_min_range, "quality_min_range"),
                step_options=sc.step_options,
                allowed_modes=sc.allowed_modes,
                hover_only=sc.hover_only,
                tx_throughput=sc.tx_throughput,
                rx_throughput=sc.rx_throughput,
            )
            kw.update(overrides)
            return EnvConfig(**kw)
        except BadConfig:
            raise
        except ValueError as exc:
            raise BadConfig(str(exc)) from exc

    def trainer_config(self, **overrides) -> TrainerConfig:
        return dataclasses.replace(self.trainer, **overrides)

    def replace(self, section: str, **values) -> "ScenarioConfig":
        return dataclasses.replace(self, **{section: dataclasses.replace(getattr(self, section), **values)})

    # -------------------------------------------------------- serialisation
    def to_ini(self) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        for name in SECTIONS:
            obj = getattr(self, name)
            parser[name] = {f.name: _format(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str) -> "ScenarioConfig":
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise BadConfig(f"unreadable config: {exc}") from exc
        unknown = set(parser.sections()) - set(SECTIONS)
        if unknown:
            raise BadConfig(f"unknown config sections: {sorted(unknown)}")
        parts = {}
        for name, klass in SECTIONS.items():
            values = dict(parser[name]) if parser.has_section(name) else {}
            parts[name] = _build(klass, name, values)
        cfg = cls(**parts)
        cfg.env_config()
        return cfg

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise BadConfig(f"cannot read config {path}: {exc}") from exc
        return cls.from_ini(text)

    def save(self, path) -> None:
        Path(path).write_text(self.to_ini())

    def digest(self) -> str:
        return hashlib.sha256(self.to_ini().encode()).hexdigest()


def default_config_path() -> Path:
    return Path(__file__).with_name("default.ini")


def _pair(values, name):
    if len(values) != 2:
        raise BadConfig(f"{name} needs exactly two values")
    return tuple(values)


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def _parse(raw: str, default, key: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [s for s in (p.strip() for p in raw.split(",")) if s]
            proto = default[0] if default else ""
            return tuple(_parse(s, proto, key) for s in items)
        return raw
    except ValueError:
        raise BadConfig(f"bad value {raw!r} for {key}") from None


def _build(klass, section: str, values: dict[str, str]):
    defaults = klass()
    names = {f.name for f in dataclasses.fields(klass)}
    unknown = set(values) - names
    if unknown:
        raise BadConfig(f"unknown keys in [{section}]: {sorted(unknown)}")
    kw = {k: _parse(v, getattr(defaults, k), f"{section}.{k}") for k, v in values.items()}
    try:
        return klass(**kw)
    except BadConfig:
        raise
    except (TypeError, ValueError) as exc:
        raise BadConfig(f"[{section}]: {exc}") from exc
