"""Experiment drivers: mode-level breakdown, delay-weight sweep, power sweep."""
from __future__ import annotations

import dataclasses
import enum
import logging
import math
import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from ..env import EnvConfig, SemanticSatEnv
from ..errors import BadConfig
from ..rl import Policy, Trainer, rollout
from ..semlink import SemNormalization, SemWeights, TaskOutcome, sem_terms
from .baselines import FixedModeActor, run_actor
from .config import ScenarioConfig, parse_level

log = logging.getLogger(__name__)


class ExperimentKind(enum.Enum):
    MODE_LEVEL_BREAKDOWN = "mode_level_breakdown"
    DELAY_WEIGHT_SWEEP = "delay_weight_sweep"
    POWER_SWEEP = "power_sweep"


@dataclass(frozen=True)
class ExperimentSpec:
    kind: ExperimentKind
    values: tuple
    arms: tuple[str, ...]
    replications: int

    def __post_init__(self):
        if not self.values:
            raise BadConfig("sweep values must be nonempty")
        if self.replications < 1:
            raise BadConfig("replications must be >= 1")

    @classmethod
    def from_config(cls, cfg: ScenarioConfig, kind: ExperimentKind) -> "ExperimentSpec":
        ex = cfg.experiment
        if kind is ExperimentKind.MODE_LEVEL_BREAKDOWN:
            return cls(kind, ex.breakdown_levels, ("fixed_mode3",), ex.breakdown_episodes)
        if kind is ExperimentKind.DELAY_WEIGHT_SWEEP:
            return cls(kind, ex.delay_weights, DELAY_ARMS, ex.replications)
        return cls(kind, ex.powers, POWER_ARMS, ex.replications)


DELAY_ARMS = ("grpo_retrained", "grpo_fixed", "ppo_retrained")
POWER_ARMS = ("full", "hovering", "mode3_only", "ppo")
SWEEP_COLUMNS = ("arm", "x", "replication", "average_sem")
SUMMARY_COLUMNS = ("arm", "x", "mean", "std", "n")
BREAKDOWN_COLUMNS = ("level", "layer", "steps", "throughput_scale", "latency_term", "quality_term",
                     "compute_term", "sem", "mean_delay", "mean_quality", "mean_compute",
                     "tasks_compared", "episode_average_sem")


@dataclass
class ExperimentResult:
    name: str
    columns: tuple[str, ...]
    rows: list[tuple]
    summary_columns: tuple[str, ...] = ()
    summary_rows: list[tuple] = field(default_factory=list)
    traces: dict[str, list[tuple]] = field(default_factory=dict)
    seeds: dict[str, list[int]] = field(default_factory=dict)

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def values(self, arm: str, x) -> list[float]:
        """Per-replication values of one (arm, x) cell of a sweep."""
        return [r[3] for r in self.rows if r[0] == arm and r[1] == x]


@dataclass
class Episode:
    average_sem: float
    outcomes: list[TaskOutcome]
    trace: list[tuple]


# ------------------------------------------------------------------- seeds
def child_seed(master: int, label: str, index: int) -> int:
    """Counter-based child seed: depends only on (master, label, index)."""
    ss = np.random.SeedSequence(int(master), spawn_key=(zlib.crc32(label.encode()), int(index)))
    return int(ss.generate_state(1, np.uint32)[0])


def eval_seeds(cfg: ScenarioConfig, rep: int) -> list[int]:
    return [child_seed(cfg.experiment.master_seed, f"eval/{rep}", e) for e in range(cfg.experiment.eval_episodes)]


# ---------------------------------------------------------------- helpers
def outcomes_of(env: SemanticSatEnv) -> list[TaskOutcome]:
    return [t.outcome for t in env.tasks if t.outcome is not None]


def rescore(outcomes: Sequence[TaskOutcome], weights: SemWeights, norm: SemNormalization,
            n_tasks: int) -> float:
    """Average SEM of frozen outcomes under different weights."""
    total = 0.0
    for o in outcomes:
        if o.completed:
            t_d, t_r, t_c = sem_terms(o.delay, o.delay_max, o.quality, o.quality_min, o.compute, weights, norm)
            total += t_d + t_r - t_c
    return total / max(n_tasks, 1)


def linear_fit_r2(x: Sequence[float], y: Sequence[float]) -> float:
    res = stats.linregress(np.asarray(x, float), np.asarray(y, float))
    return float(res.rvalue ** 2)


def paired_not_worse(a: Sequence[float], b: Sequence[float], alpha: float = 0.05) -> tuple[bool, float]:
    """One-sided paired check of ``a >= b``.

    Fails only when a paired t-test finds ``a`` significantly below ``b``.
    Returns (holds, p-value of the alternative mean(a - b) < 0).
    """
    d = np.asarray(a, float) - np.asarray(b, float)
    if d.size < 2 or np.all(d == d[0]):
        holds = bool(d.size == 0 or d[0] >= 0.0)
        return holds, 1.0 if holds else 0.0
    p = float(stats.ttest_rel(a, b, alternative="less").pvalue)
    return p >= alpha, p


class PolicyCache:
    """Memoises trained policies on (scenario, trainer config, seed)."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self._store: dict = {}

    def get(self, env_cfg: EnvConfig, algorithm: str, seed: int) -> Policy:
        tcfg = self.cfg.trainer_config(algorithm=algorithm)
        key = (env_cfg, tcfg, seed)
        if key not in self._store:
            log.info("training %s (seed %d)", algorithm, seed)
            trainer = Trainer(env_cfg, tcfg, seed, self.cfg.to_ini())
            trainer.train()
            self._store[key] = trainer.policy
        return self._store[key]


def evaluate_policy(policy: Policy, env_cfg: EnvConfig, seeds: Sequence[int], sample_seed: int,
                    greedy: bool) -> list[Episode]:
    env = SemanticSatEnv(env_cfg)
    out = []
    for i, s in enumerate(seeds):
        rng = np.random.default_rng(np.random.SeedSequence(sample_seed, spawn_key=(i,)))
        tr = rollout(env, policy, s, rng, greedy)
        out.append(Episode(tr.total_return, outcomes_of(env), list(env.trace)))
    return out


def _summarise(rows: list[tuple]) -> list[tuple]:
    cells: dict = {}
    for arm, x, _, v in rows:
        cells.setdefault((arm, x), []).append(v)
    out = []
    for (arm, x), vs in cells.items():
        std = float(np.std(vs, ddof=1)) if len(vs) > 1 else 0.0
        out.append((arm, x, float(np.mean(vs)), std, len(vs)))
    return out


def _trace_name(arm: str, x, rep: int, ep: int) -> str:
    return f"{arm}_x{x!r}_rep{rep}_ep{ep}.csv"


# ------------------------------------------------------------ experiments
def run_mode_level_breakdown(cfg: ScenarioConfig, spec: ExperimentSpec | None = None) -> ExperimentResult:
    """Fixed Mode-3 choices at each level, replayed on identical episodes.

    A level is (layer, denoising steps, compute-throughput scale); the scale
    multiplies both transmitter and receiver throughput. Terms are averaged
    over tasks delivered under every level, so all levels are compared on the
    same task set.
    """
    spec = spec or ExperimentSpec.from_config(cfg, ExperimentKind.MODE_LEVEL_BREAKDOWN)
    sc = cfg.scenario
    seeds = [child_seed(cfg.experiment.master_seed, "breakdown", i) for i in range(spec.replications)]
    per_level = []
    traces = {}
    for li, level in enumerate(spec.values):
        layer, steps, scale = parse_level(level)
        env_cfg = cfg.env_config(tx_throughput=sc.tx_throughput * scale,
                                 rx_throughput=sc.rx_throughput * scale,
                                 step_options=tuple(sorted(set(sc.step_options) | {steps})))
        if layer > env_cfg.profile.n_layers:
            raise BadConfig(f"level {level!r}: layer {layer} exceeds {env_cfg.profile.n_layers} layers")
        actor = FixedModeActor(env_cfg, f"text_image{layer}", steps)
        env = SemanticSatEnv(env_cfg)
        delivered, avg = {}, []
        for ei, s in enumerate(seeds):
            avg.append(run_actor(env, actor, s))
            for o in outcomes_of(env):
                if not math.isnan(o.quality):
                    delivered[(ei, o.task_id)] = o
            traces[f"level{li + 1}_ep{ei}.csv"] = list(env.trace)
        per_level.append((level, layer, steps, scale, env_cfg, delivered, float(np.mean(avg))))

    common = set.intersection(*(set(p[5]) for p in per_level)) if per_level else set()
    rows = []
    for li, (level, layer, steps, scale, env_cfg, delivered, avg) in enumerate(per_level):
        terms = np.array([sem_terms(o.delay, o.delay_max, o.quality, o.quality_min, o.compute,
                                    env_cfg.weights, env_cfg.norm)
                          for k, o in sorted(delivered.items()) if k in common]).reshape(-1, 3)
        sel = [o for k, o in sorted(delivered.items()) if k in common]
        t_d, t_r, t_c = terms.mean(axis=0) if len(sel) else (math.nan,) * 3
        rows.append((li + 1, layer, steps, scale, float(t_d), float(t_r), float(t_c),
                     float(t_d + t_r - t_c),
                     float(np.mean([o.delay for o in sel])) if sel else math.nan,
                     float(np.mean([o.quality for o in sel])) if sel else math.nan,
                     float(np.mean([o.compute for o in sel])) if sel else math.nan,
                     len(sel), avg))
    return ExperimentResult(ExperimentKind.MODE_LEVEL_BREAKDOWN.value, BREAKDOWN_COLUMNS, rows,
                            traces=traces, seeds={"episodes": seeds})


def run_delay_weight_sweep(cfg: ScenarioConfig, spec: ExperimentSpec | None = None,
                           cache: PolicyCache | None = None) -> ExperimentResult:
    """Average SEM per delay weight for retrained GRPO, the fixed model and PPO.

    The fixed model is trained once at ``fixed_model_weight`` and evaluated
    under every weight; the other arms retrain per weight. The remaining two
    weights are always equal.
    """
    spec = spec or ExperimentSpec.from_config(cfg, ExperimentKind.DELAY_WEIGHT_SWEEP)
    ex = cfg.experiment
    cache = cache or PolicyCache(cfg)
    rows, traces = [], {}
    seeds = {"train": [], "eval": [], "sample": []}
    for rep in range(spec.replications):
        train_seed = child_seed(ex.master_seed, "train", rep)
        sample_seed = child_seed(ex.master_seed, "sample", rep)
        ev = eval_seeds(cfg, rep)
        seeds["train"].append(train_seed)
        seeds["sample"].append(sample_seed)
        seeds["eval"].extend(ev)
        for theta in spec.values:
            w = SemWeights.delay_sweep(theta)
            env_cfg = cfg.env_config(weights=w)
            for arm in spec.arms:
                if arm == "grpo_fixed":
                    train_cfg = cfg.env_config(weights=SemWeights.delay_sweep(ex.fixed_model_weight))
                    policy = cache.get(train_cfg, "grpo", train_seed)
                elif arm == "grpo_retrained":
                    policy = cache.get(env_cfg, "grpo", train_seed)
                elif arm == "ppo_retrained":
                    policy = cache.get(env_cfg, "ppo", train_seed)
                else:
                    raise BadConfig(f"unknown delay-sweep arm {arm!r}")
                eps = evaluate_policy(policy, env_cfg, ev, sample_seed, ex.greedy_eval)
                rows.append((arm, theta, rep, float(np.mean([e.average_sem for e in eps]))))
                if ex.write_traces:
                    for i, e in enumerate(eps):
                        traces[_trace_name(arm, theta, rep, i)] = e.trace
    return ExperimentResult(ExperimentKind.DELAY_WEIGHT_SWEEP.value, SWEEP_COLUMNS, rows,
                            SUMMARY_COLUMNS, _summarise(rows), traces, seeds)


def power_arm_config(cfg: ScenarioConfig, arm: str) -> tuple[EnvConfig, str]:
    """(training scenario, algorithm) of a power-sweep arm."""
    if arm == "full":
        return cfg.env_config(), "grpo"
    if arm == "hovering":
        return cfg.env_config(hover_only=True), "grpo"
    if arm == "mode3_only":
        return cfg.env_config(allowed_modes=("text_image",)), "grpo"
    if arm == "ppo":
        return cfg.env_config(), "ppo"
    raise BadConfig(f"unknown power-sweep arm {arm!r}")


def run_power_sweep(cfg: ScenarioConfig, spec: ExperimentSpec | None = None,
                    cache: PolicyCache | None = None) -> ExperimentResult:
    """Average SEM per LEO transmit power for the full framework and its ablations.

    Each arm is trained once per replication at the configured LEO power and
    evaluated at every sweep power on the same episodes.
    """
    spec = spec or ExperimentSpec.from_config(cfg, ExperimentKind.POWER_SWEEP)
    ex = cfg.experiment
    cache = cache or PolicyCache(cfg)
    rows, traces = [], {}
    seeds = {"train": [], "eval": [], "sample": []}
    for rep in range(spec.replications):
        train_seed = child_seed(ex.master_seed, "train", rep)
        sample_seed = child_seed(ex.master_seed, "sample", rep)
        ev = eval_seeds(cfg, rep)
        seeds["train"].append(train_seed)
        seeds["sample"].append(sample_seed)
        seeds["eval"].extend(ev)
        for arm in spec.arms:
            train_cfg, algo = power_arm_config(cfg, arm)
            policy = cache.get(train_cfg, algo, train_seed)
            for p in spec.values:
                if p <= 0:
                    raise BadConfig("powers must be positive")
                env_cfg = dataclasses.replace(train_cfg, leo_power=p)
                eps = evaluate_policy(policy, env_cfg, ev, sample_seed, ex.greedy_eval)
                rows.append((arm, p, rep, float(np.mean([e.average_sem for e in eps]))))
                if ex.write_traces:
                    for i, e in enumerate(eps):
                        traces[_trace_name(arm, p, rep, i)] = e.trace
    return ExperimentResult(ExperimentKind.POWER_SWEEP.value, SWEEP_COLUMNS, rows,
                            SUMMARY_COLUMNS, _summarise(rows), traces, seeds)


def delay_weight_linearity(outcomes: Sequence[TaskOutcome], env_cfg: EnvConfig,
                           thetas: Sequence[float]) -> tuple[list[float], float]:
    """Re-score frozen outcomes at each delay weight; returns (averages, R^2)."""
    ys = [rescore(outcomes, SemWeights.delay_sweep(t), env_cfg.norm, env_cfg.n_tasks) for t in thetas]
    return ys, linear_fit_r2(thetas, ys)

