"""Rollouts, the training loop, checkpoints and the training log."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..env import EnvConfig, SemanticSatEnv
from ..masking import SlotMasker
from .algorithms import Trajectory, TrainerConfig, UpdateStats, grpo_update, ppo_update
from .policy import MLP, Adam, Policy, sample_action

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
LOG_COLUMNS = ("update", "mean_group_return", "loss", "clip_fraction")


def rollout(env: SemanticSatEnv, policy: Policy, env_seed: int, rng: np.random.Generator,
            greedy: bool = False, group_id: int = 0, keep_trace: bool = False) -> Trajectory:
    state = env.reset(env_seed)
    states, actions, logps, rewards, masks = [], [], [], [], []
    while True:
        idx, lp, mk = sample_action(policy, state.vector, SlotMasker(state.context), rng, greedy)
        res = env.step(idx)
        states.append(state.vector)
        actions.append(idx)
        logps.append(lp)
        rewards.append(res.reward)
        masks.append(mk)
        state = res.next_state
        if res.done:
            break
    return Trajectory(np.array(states), np.array(actions, dtype=np.intp), np.array(logps),
                      np.array(rewards), np.array(masks), group_id, env_seed,
                      list(env.trace) if keep_trace else [])


def evaluate(policy: Policy, env_cfg: EnvConfig, env_seeds: Sequence[int], sample_seed: int = 0,
             greedy: bool = False, keep_trace: bool = False) -> list[Trajectory]:
    """One rollout per environment seed; sampling streams are paired by index."""
    env = SemanticSatEnv(env_cfg)
    out = []
    for i, s in enumerate(env_seeds):
        rng = np.random.default_rng(np.random.SeedSequence(sample_seed, spawn_key=(i,)))
        out.append(rollout(env, policy, int(s), rng, greedy, keep_trace=keep_trace))
    return out


def _state_to_json(state) -> dict:
    return json.loads(json.dumps(state))


class Trainer:
    """Owns the policy (and, for PPO only, a value network) plus optimiser state."""

    def __init__(self, env_cfg: EnvConfig, cfg: TrainerConfig, seed: int, config_text: str = ""):
        self.env_cfg = env_cfg
        self.cfg = cfg
        self.seed = int(seed)
        self.config_text = config_text
        self.env = SemanticSatEnv(env_cfg)
        init_ss, run_ss = np.random.SeedSequence(self.seed).spawn(2)
        init_rng = np.random.default_rng(init_ss)
        layout = env_cfg.layout
        self.policy = Policy(env_cfg.observation_size, layout.offsets, cfg.hidden, init_rng)
        self.optimizer = Adam(cfg.learning_rate)
        self.value_net: MLP | None = None
        self.value_optimizer: Adam | None = None
        if cfg.algorithm == "ppo":
            self.value_net = MLP((env_cfg.observation_size, *cfg.hidden, 1), init_rng, out_scale=1.0)
            self.value_optimizer = Adam(cfg.value_learning_rate)
        self.ref_policy = self.policy.copy() if cfg.kl_coef > 0 else None
        self.rng = np.random.default_rng(run_ss)
        self.update_index = 0
        self.history: list[tuple[int, float, float, float]] = []

    def parameters(self) -> dict[str, np.ndarray]:
        out = {f"policy.{k}": v for k, v in self.policy.net.params.items()}
        if self.value_net is not None:
            out.update({f"value.{k}": v for k, v in self.value_net.params.items()})
        return out

    def collect(self) -> list[list[Trajectory]]:
        groups = []
        for g in range(self.cfg.groups_per_update):
            env_seed = int(self.rng.integers(2 ** 31))
            groups.append([rollout(self.env, self.policy, env_seed, self.rng, group_id=g)
                           for _ in range(self.cfg.group_size)])
        return groups

    def step(self) -> UpdateStats:
        groups = self.collect()
        if self.cfg.algorithm == "grpo":
            stats = grpo_update(self.policy, groups, self.cfg, self.optimizer, self.ref_policy)
        else:
            flat = [tr for grp in groups for tr in grp]
            stats = ppo_update(self.policy, self.value_net, flat, self.cfg, self.optimizer,
                               self.value_optimizer)
        self.update_index += 1
        self.history.append((self.update_index, stats.mean_return, stats.loss, stats.clip_fraction))
        log.debug("update %d return %.5f loss %.5f clip %.3f", self.update_index,
                  stats.mean_return, stats.loss, stats.clip_fraction)
        return stats

    def train(self, n_updates: int | None = None,
              callback: Callable[[int, UpdateStats], None] | None = None) -> list[tuple]:
        n = self.cfg.updates if n_updates is None else n_updates
        for _ in range(n):
            stats = self.step()
            if callback is not None:
                callback(self.update_index, stats)
        return self.history

    def write_log(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(LOG_COLUMNS)
            for u, ret, loss, frac in self.history:
                w.writerow((u, repr(float(ret)), repr(float(loss)), repr(float(frac))))

    # -------------------------------------------------------------- checkpoints
    def save(self, path) -> None:
        arrays = {}
        nets = [("policy", self.policy.net, self.optimizer)]
        if self.value_net is not None:
            nets.append(("value", self.value_net, self.value_optimizer))
        if self.ref_policy is not None:
            nets.append(("ref", self.ref_policy.net, None))
        for name, net, opt in nets:
            for k, v in net.params.items():
                arrays[f"{name}/{k}"] = v
            if opt is not None:
                for k in opt.m:
                    arrays[f"{name}/adam_m/{k}"] = opt.m[k]
                    arrays[f"{name}/adam_v/{k}"] = opt.v[k]
        meta = {
            "format_version": CHECKPOINT_VERSION,
            "trainer_config": asdict(self.cfg),
            "config_text": self.config_text,
            "seed": self.seed,
            "update_index": self.update_index,
            "rng_state": _state_to_json(self.rng.bit_generator.state),
            "adam_t": {"policy": self.optimizer.t,
                       "value": None if self.value_optimizer is None else self.value_optimizer.t},
            "policy_sizes": list(self.policy.net.sizes),
            "head_offsets": [int(x) for x in self.policy.offsets],
            "history": [list(h) for h in self.history],
        }
        arrays["meta"] = np.array(json.dumps(meta, sort_keys=True))
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path, env_cfg: EnvConfig) -> "Trainer":
        meta, arrays = read_checkpoint(path)
        tc = dict(meta["trainer_config"])
        tc["hidden"] = tuple(tc["hidden"])
        trainer = cls(env_cfg, TrainerConfig(**tc), meta["seed"], meta["config_text"])
        if [int(x) for x in trainer.policy.offsets] != meta["head_offsets"]:
            raise ValueError("checkpoint head layout does not match the scenario")
        nets = [("policy", trainer.policy.net, trainer.optimizer)]
        if trainer.value_net is not None:
            nets.append(("value", trainer.value_net, trainer.value_optimizer))
        if trainer.ref_policy is not None:
            nets.append(("ref", trainer.ref_policy.net, None))
        for name, net, opt in nets:
            for k in list(net.params):
                net.params[k] = arrays[f"{name}/{k}"].copy()
            if opt is not None:
                for k in net.params:
                    if f"{name}/adam_m/{k}" in arrays:
                        opt.m[k] = arrays[f"{name}/adam_m/{k}"].copy()
                        opt.v[k] = arrays[f"{name}/adam_v/{k}"].copy()
        trainer.optimizer.t = meta["adam_t"]["policy"]
        if trainer.value_optimizer is not None:
            trainer.value_optimizer.t = meta["adam_t"]["value"]
        trainer.rng.bit_generator.state = meta["rng_state"]
        trainer.update_index = meta["update_index"]
        trainer.history = [tuple(h) for h in meta["history"]]
        return trainer


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    with np.load(Path(path), allow_pickle=False) as z:
        arrays = {k: z[k] for k in z.files}
    meta = json.loads(str(arrays.pop("meta")))
    if meta.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta.get('format_version')}")
    return meta, arrays
