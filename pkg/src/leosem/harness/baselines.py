"""Scripted actors that do not learn."""
from __future__ import annotations

import numpy as np

from ..env import EnvConfig, SemanticSatEnv
from ..masking import SlotMasker


class FixedModeActor:
    """Starts every feasible task in one fixed mode, on the first legal route.

    Falls back to the first legal option whenever the preferred one is
    masked; UAVs hover.
    """

    def __init__(self, env_cfg: EnvConfig, option: str, steps: int | None = None):
        options = env_cfg.mode_options
        if option not in options:
            raise ValueError(f"unknown mode option {option!r}; expected one of {options}")
        self.mode_index = options.index(option)
        if steps is None:
            self.steps_index = 0
        elif steps in env_cfg.step_options:
            self.steps_index = env_cfg.step_options.index(steps)
        else:
            raise ValueError(f"{steps} denoising steps not among {env_cfg.step_options}")

    def __call__(self, masker: SlotMasker) -> tuple[int, ...]:
        while not masker.done:
            head = masker.current_head()
            mk = masker.mask()
            want = {"mode": self.mode_index, "steps": self.steps_index}.get(head.kind, 0)
            idx = want if mk[want] else int(np.flatnonzero(mk)[0])
            masker.choose(idx, check=False)
        return tuple(masker.choices)


def run_actor(env: SemanticSatEnv, actor, env_seed: int) -> float:
    """Play one episode with a scripted actor; returns the episode return."""
    state = env.reset(env_seed)
    total = 0.0
    while True:
        res = env.step(actor(SlotMasker(state.context)))
        total += res.reward
        state = res.next_state
        if res.done:
            return total
