"""Group-relative and value-baseline clipped policy-gradient updates."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import BadConfig, GroupTooSmall, StaleTrajectories
from .policy import MLP, Adam, Policy, batch_log_probs, dlogp_dlogits

STALE_TOL = 1e-6


@dataclass(frozen=True)
class TrainerConfig:
    algorithm: str = "grpo"
    group_size: int = 8
    groups_per_update: int = 1
    clip: float = 0.2
    learning_rate: float = 1e-3
    epochs: int = 4
    discount: float = 1.0
    hidden: tuple[int, ...] = (128, 128)
    updates: int = 40
    kl_coef: float = 0.0
    value_learning_rate: float = 1e-3
    value_epochs: int = 8

    def __post_init__(self):
        if self.algorithm not in ("grpo", "ppo"):
            raise BadConfig(f"unknown algorithm {self.algorithm!r}")
        if self.group_size < 2 and self.algorithm == "grpo":
            raise BadConfig("group_size must be >= 2 for grpo")
        if self.group_size < 1 or self.groups_per_update < 1:
            raise BadConfig("group_size and groups_per_update must be positive")
        if not 0.0 < self.clip < 1.0:
            raise BadConfig("clip must lie in (0, 1)")
        if not 0.0 < self.discount <= 1.0:
            raise BadConfig("discount must lie in (0, 1]")
        if self.learning_rate <= 0 or self.value_learning_rate <= 0:
            raise BadConfig("learning rates must be positive")
        if self.epochs < 1 or self.value_epochs < 1 or self.updates < 0:
            raise BadConfig("epochs must be >= 1 and updates >= 0")
        if self.kl_coef < 0 or not self.hidden or min(self.hidden) < 1:
            raise BadConfig("kl_coef must be >= 0 and hidden widths positive")


@dataclass
class Trajectory:
    """One rollout. Row ``t`` of every array belongs to slot ``t``."""

    states: np.ndarray                  # (T, obs)
    actions: np.ndarray                 # (T, heads) int
    logp: np.ndarray                    # (T,) behaviour log-probabilities
    rewards: np.ndarray                 # (T,)
    masks: np.ndarray                   # (T, total options) bool
    group_id: int = 0
    env_seed: int = 0
    trace: list = field(default_factory=list, repr=False)

    def __len__(self) -> int:
        return len(self.rewards)

    @property
    def total_return(self) -> float:
        return float(self.rewards.sum())

    def discounted_return(self, gamma: float) -> float:
        if gamma == 1.0:
            return self.total_return
        return float(np.sum(self.rewards * gamma ** np.arange(len(self.rewards))))

    def returns_to_go(self, gamma: float) -> np.ndarray:
        out = np.zeros(len(self.rewards))
        acc = 0.0
        for t in range(len(self.rewards) - 1, -1, -1):
            acc = self.rewards[t] + gamma * acc
            out[t] = acc
        return out


def group_advantage(returns: Sequence[float]) -> np.ndarray:
    r = np.asarray(returns, dtype=float)
    if r.size < 2:
        raise GroupTooSmall(f"group of {r.size} returns; need at least 2")
    centred = r - r.mean()
    std = r.std(ddof=1)
    if std < 1e-8:
        return np.zeros_like(r)
    adv = centred / std
    return adv - adv.mean()


def clipped_surrogate(ratio, advantage, clip: float):
    """min(r A, clip(r, 1 - psi, 1 + psi) A); vectorises."""
    return np.minimum(ratio * advantage, np.clip(ratio, 1.0 - clip, 1.0 + clip) * advantage)


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    masks: np.ndarray
    old_logp: np.ndarray
    advantages: np.ndarray
    weights: np.ndarray                  # per-row loss weight, sums to 1

    @classmethod
    def stack(cls, trajs: Sequence[Trajectory], advantages: Sequence[np.ndarray],
              weights: Sequence[np.ndarray]) -> "Batch":
        return cls(np.concatenate([t.states for t in trajs]),
                   np.concatenate([t.actions for t in trajs]),
                   np.concatenate([t.masks for t in trajs]),
                   np.concatenate([t.logp for t in trajs]),
                   np.concatenate(advantages), np.concatenate(weights))


def surrogate_loss(policy: Policy, batch: Batch, clip: float, kl_coef: float = 0.0,
                   ref_logp: np.ndarray | None = None):
    """Negative clipped surrogate (plus optional k3 KL) and its parameter gradient.

    Returns (loss, grads, clip_fraction).
    """
    logits, cache = policy.logits(batch.states)
    logp, lp_all = batch_log_probs(policy, logits, batch.actions, batch.masks)
    ratio = np.exp(logp - batch.old_logp)
    adv = batch.advantages
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip) * adv
    obj = np.minimum(unclipped, clipped)
    loss = -float(np.sum(batch.weights * obj))
    # d obj / d logp: through the ratio only when the unclipped branch is active
    active = unclipped <= clipped
    dlogp = -batch.weights * np.where(active, unclipped, 0.0)
    if kl_coef > 0.0 and ref_logp is not None:
        diff = ref_logp - logp
        loss += kl_coef * float(np.sum(batch.weights * (np.exp(diff) - diff - 1.0)))
        dlogp += kl_coef * batch.weights * (1.0 - np.exp(diff))
    dlogits = dlogp_dlogits(policy, lp_all, batch.actions) * dlogp[:, None]
    grads = policy.net.backward(cache, dlogits)
    clip_frac = float(np.mean(np.abs(ratio - 1.0) > clip)) if len(ratio) else 0.0
    return loss, grads, clip_frac


def check_fresh(policy: Policy, trajs: Sequence[Trajectory]) -> None:
    """Behaviour log-probs must match the current (old) policy."""
    for tr in trajs:
        if not len(tr):
            continue
        logits, _ = policy.logits(tr.states)
        logp, _ = batch_log_probs(policy, logits, tr.actions, tr.masks)
        err = float(np.max(np.abs(logp - tr.logp)))
        if err > STALE_TOL:
            raise StaleTrajectories(f"behaviour log-probs differ by {err:.3g} from the old policy")


@dataclass
class UpdateStats:
    loss: float
    clip_fraction: float
    mean_return: float
    value_loss: float = float("nan")


def grpo_update(policy: Policy, groups: Sequence[Sequence[Trajectory]], cfg: TrainerConfig,
                optimizer: Adam, ref_policy: Policy | None = None) -> UpdateStats:
    """In-place GRPO step over one or more groups of same-instance rollouts.

    Every step of rollout ``i`` carries the group-relative advantage of its
    return; each rollout's steps are averaged, then rollouts are averaged.
    """
    trajs, advs, weights = [], [], []
    returns = []
    for group in groups:
        rets = [tr.discounted_return(cfg.discount) for tr in group]
        returns += rets
        a = group_advantage(rets)
        for tr, ai in zip(group, a):
            if len(tr):
                trajs.append(tr)
                advs.append(np.full(len(tr), ai))
                weights.append(np.full(len(tr), 1.0 / len(tr)))
    n = len(trajs)
    if n == 0:
        return UpdateStats(0.0, 0.0, float(np.mean(returns)) if returns else 0.0)
    check_fresh(policy, trajs)
    batch = Batch.stack(trajs, advs, [w / n for w in weights])
    ref_logp = None
    if cfg.kl_coef > 0.0 and ref_policy is not None:
        logits, _ = ref_policy.logits(batch.states)
        ref_logp, _ = batch_log_probs(ref_policy, logits, batch.actions, batch.masks)
    loss, frac = 0.0, 0.0
    for _ in range(cfg.epochs):
        loss, grads, frac = surrogate_loss(policy, batch, cfg.clip, cfg.kl_coef, ref_logp)
        if np.any(batch.advantages) or ref_logp is not None:
            optimizer.step(policy.net.params, grads)
    return UpdateStats(loss, frac, float(np.mean(returns)))


def value_loss(value_net: MLP, states: np.ndarray, targets: np.ndarray):
    pred, cache = value_net.forward(states)
    err = pred[:, 0] - targets
    loss = 0.5 * float(np.mean(err ** 2))
    grads = value_net.backward(cache, (err / len(err))[:, None])
    return loss, grads


def ppo_update(policy: Policy, value_net: MLP, trajectories: Sequence[Trajectory], cfg: TrainerConfig,
               optimizer: Adam, value_optimizer: Adam) -> UpdateStats:
    """In-place clipped PPO step with a learned state-value baseline.

    Advantages are Monte-Carlo returns-to-go minus the value prediction,
    standardised over the batch.
    """
    trajs = [tr for tr in trajectories if len(tr)]
    mean_ret = float(np.mean([tr.discounted_return(cfg.discount) for tr in trajectories])) if trajectories else 0.0
    if not trajs:
        return UpdateStats(0.0, 0.0, mean_ret)
    check_fresh(policy, trajs)
    states = np.concatenate([t.states for t in trajs])
    targets = np.concatenate([t.returns_to_go(cfg.discount) for t in trajs])
    values = value_net.forward(states)[0][:, 0]
    adv = targets - values
    std = adv.std()
    adv = (adv - adv.mean()) / std if std > 1e-8 else np.zeros_like(adv)
    n = len(targets)
    batch = Batch.stack(trajs, [adv], [np.full(n, 1.0 / n)])
    loss, frac = 0.0, 0.0
    for _ in range(cfg.epochs):
        loss, grads, frac = surrogate_loss(policy, batch, cfg.clip)
        if np.any(adv):
            optimizer.step(policy.net.params, grads)
    vloss = 0.0
    for _ in range(cfg.value_epochs):
        vloss, vgrads = value_loss(value_net, states, targets)
        value_optimizer.step(value_net.params, vgrads)
    return UpdateStats(loss, frac, mean_ret, vloss)
