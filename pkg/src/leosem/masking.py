"""Factored action heads and sequential legality masks.

A slot's action is a fixed sequence of categorical heads. For every LEO
``m`` (in index order) there are four heads::

    mode[m]   defer | bit | text | text_image1 .. text_imageL
    steps[m]  index into the configured denoising-step options
    uav[m]    none | U0 .. U(N-1)
    isl[m]    none | every other LEO in index order

followed by one ``move[n]`` head per UAV (hover + 8 compass moves at full
speed). Heads that do not apply (e.g. ``steps`` for bit mode) are forced to
index 0, so they contribute nothing to the joint log-probability.

Masks are conditional: the mask of a head depends on the choices already made
earlier in the same slot. An option is legal iff some completion of the
partial action satisfies the per-slot assignment constraints:

* every LEO takes part in at most one transmission per slot, as source or as
  the ISL relay that delivers the last satellite hop;
* every UAV relays at most one task and every user receives at most one task;
* resources held by in-flight tasks stay occupied;
* a satellite hop is only possible to a node inside the LEO's coverage, and an
  ISL is only allowed when the source LEO cannot reach the final satellite-hop
  target itself;
* relay-dependent users are reachable only through a UAV within its coverage
  radius, and other users are never served through a UAV;
* UAV moves must keep the UAV inside the service disc.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import IllegalAction
from .semlink import Mode, ModeChoice, ModeProfile

HEAD_KINDS = ("mode", "steps", "uav", "isl")

# Hover, then E, NE, N, NW, W, SW, S, SE.
MOVE_DIRECTIONS = ((0.0, 0.0),) + tuple(
    (math.cos(k * math.pi / 4.0), math.sin(k * math.pi / 4.0)) for k in range(8))


def mode_options(profile: ModeProfile) -> tuple[str, ...]:
    return ("defer", "bit", "text") + tuple(f"text_image{i + 1}" for i in range(profile.n_layers))


def mode_family(option: str) -> str:
    return "text_image" if option.startswith("text_image") else option


def option_choice(option: str, steps: int) -> ModeChoice | None:
    if option == "defer":
        return None
    if option == "bit":
        return ModeChoice(Mode.BIT)
    if option == "text":
        return ModeChoice(Mode.TEXT, 1, steps)
    return ModeChoice(Mode.TEXT_IMAGE, int(option[len("text_image"):]), steps)


@dataclass(frozen=True)
class Head:
    kind: str
    owner: int
    size: int


class ActionLayout:
    """Head order, sizes and flat offsets for one scenario size."""

    def __init__(self, n_leo: int, n_uav: int, n_step_options: int, n_mode_options: int):
        self.n_leo = n_leo
        self.n_uav = n_uav
        self.n_step_options = n_step_options
        self.n_mode_options = n_mode_options
        heads = []
        for m in range(n_leo):
            heads += [Head("mode", m, n_mode_options), Head("steps", m, n_step_options),
                      Head("uav", m, n_uav + 1), Head("isl", m, n_leo)]
        heads += [Head("move", n, len(MOVE_DIRECTIONS)) for n in range(n_uav)]
        self.heads = tuple(heads)
        self.offsets = np.concatenate([[0], np.cumsum([h.size for h in heads])]).astype(np.intp)

    @property
    def n_heads(self) -> int:
        return len(self.heads)

    @property
    def total(self) -> int:
        return int(self.offsets[-1])

    def head_index(self, kind: str, owner: int) -> int:
        if kind == "move":
            return 4 * self.n_leo + owner
        return 4 * owner + HEAD_KINDS.index(kind)

    @staticmethod
    def isl_target(m: int, index: int) -> int | None:
        """LEO index addressed by option ``index`` of ``isl[m]``."""
        if index == 0:
            return None
        other = index - 1
        return other if other < m else other + 1

    @staticmethod
    def isl_index(m: int, target: int | None) -> int:
        if target is None:
            return 0
        return target + 1 if target < m else target


@lru_cache(maxsize=32)
def cached_layout(n_leo: int, n_uav: int, n_step_options: int, n_mode_options: int) -> ActionLayout:
    return ActionLayout(n_leo, n_uav, n_step_options, n_mode_options)


@dataclass(frozen=True)
class MaskContext:
    """Everything the masks depend on, frozen at the start of a slot."""

    n_leo: int
    n_uav: int
    n_user: int
    hol: tuple[tuple[int, int] | None, ...]      # per LEO: (task_id, dest user) or None
    busy_leo: frozenset[int]
    busy_uav: frozenset[int]
    busy_user: frozenset[int]
    coverage: tuple[frozenset[str], ...]          # per LEO: covered "G<l>" / "U<n>" ids
    relay_users: frozenset[int]
    uav_reach: frozenset[tuple[int, int]]         # (uav, user) pairs within UAV coverage
    uav_offsets: tuple[tuple[float, float], ...]
    service_radius: float
    move_step: float
    allowed_modes: tuple[int, ...]                # legal non-defer mode option indices
    hover_only: bool
    n_step_options: int
    n_mode_options: int

    @property
    def layout(self) -> ActionLayout:
        return cached_layout(self.n_leo, self.n_uav, self.n_step_options, self.n_mode_options)


class SlotMasker:
    """Walks the heads of one slot in order, yielding conditional masks."""

    def __init__(self, ctx: MaskContext):
        self.ctx = ctx
        self.layout = ctx.layout
        self.pos = 0
        self.choices: list[int] = []
        self._claimed_leo: set[int] = set()
        self._claimed_uav: set[int] = set()
        self._claimed_user: set[int] = set()
        self._mode = 0
        self._uav: int | None = None

    # -- feasibility helpers -------------------------------------------------
    def _leo_free(self, m: int) -> bool:
        return m not in self.ctx.busy_leo and m not in self._claimed_leo

    def _uav_free(self, n: int) -> bool:
        return n not in self.ctx.busy_uav and n not in self._claimed_uav

    def _isl_targets(self, m: int, target: str) -> list[int | None]:
        """Legal ISL choices (None = direct) for delivering to ``target``."""
        if target in self.ctx.coverage[m]:
            return [None]
        return [m2 for m2 in range(self.ctx.n_leo)
                if m2 != m and self._leo_free(m2) and target in self.ctx.coverage[m2]]

    def _routes(self, m: int) -> list[tuple[int | None, int | None]]:
        """All feasible (uav, isl-target) pairs for LEO m's head-of-line task."""
        hol = self.ctx.hol[m]
        if hol is None or not self._leo_free(m):
            return []
        _, user = hol
        if user in self.ctx.busy_user or user in self._claimed_user:
            return []
        if user not in self.ctx.relay_users:
            return [(None, t) for t in self._isl_targets(m, f"G{user}")]
        out = []
        for n in range(self.ctx.n_uav):
            if self._uav_free(n) and (n, user) in self.ctx.uav_reach:
                out += [(n, t) for t in self._isl_targets(m, f"U{n}")]
        return out

    def _move_legal(self, n: int, k: int) -> bool:
        if k == 0:
            return True
        if self.ctx.hover_only:
            return False
        e, nn = self.ctx.uav_offsets[n]
        de, dn = MOVE_DIRECTIONS[k]
        step = self.ctx.move_step
        return math.hypot(e + de * step, nn + dn * step) <= self.ctx.service_radius

    # -- sequential interface -----------------------------------------------
    @property
    def done(self) -> bool:
        return self.pos >= self.layout.n_heads

    def current_head(self) -> Head:
        return self.layout.heads[self.pos]

    def mask(self) -> np.ndarray:
        head = self.current_head()
        mk = np.zeros(head.size, dtype=bool)
        m = head.owner
        if head.kind == "mode":
            mk[0] = True
            if self._routes(m):
                mk[list(self.ctx.allowed_modes)] = True
        elif head.kind == "steps":
            if self._mode in (0, 1):
                mk[0] = True
            else:
                mk[:] = True
        elif head.kind == "uav":
            if self._mode == 0:
                mk[0] = True
            else:
                for n, _ in self._routes(m):
                    mk[0 if n is None else n + 1] = True
        elif head.kind == "isl":
            if self._mode == 0:
                mk[0] = True
            else:
                for n, t in self._routes(m):
                    if n == self._uav:
                        mk[ActionLayout.isl_index(m, t)] = True
        else:
            for k in range(head.size):
                mk[k] = self._move_legal(m, k)
        return mk

    def choose(self, index: int, check: bool = True) -> None:
        head = self.current_head()
        if check:
            mk = self.mask()
            if not (0 <= index < head.size and mk[index]):
                raise IllegalAction(f"option {index} of {head.kind}[{head.owner}] is masked")
        m = head.owner
        if head.kind == "mode":
            self._mode = index
            self._uav = None
        elif head.kind == "uav":
            self._uav = None if index == 0 else index - 1
        elif head.kind == "isl" and self._mode != 0:
            _, user = self.ctx.hol[m]
            self._claimed_leo.add(m)
            target = ActionLayout.isl_target(m, index)
            if target is not None:
                self._claimed_leo.add(target)
            if self._uav is not None:
                self._claimed_uav.add(self._uav)
            self._claimed_user.add(user)
        self.choices.append(int(index))
        self.pos += 1


def validate(ctx: MaskContext, indices: Sequence[int]) -> list[np.ndarray]:
    """Check a full action; returns the per-head masks, raises IllegalAction."""
    masker = SlotMasker(ctx)
    if len(indices) != masker.layout.n_heads:
        raise IllegalAction(f"expected {masker.layout.n_heads} head indices, got {len(indices)}")
    masks = []
    for idx in indices:
        mk = masker.mask()
        masks.append(mk)
        masker.choose(int(idx), check=False)
        if not (0 <= idx < mk.size and mk[idx]):
            head = masker.layout.heads[masker.pos - 1]
            raise IllegalAction(f"option {idx} of {head.kind}[{head.owner}] is masked")
    return masks


def legal_actions(ctx: MaskContext, collapse_modes: bool = False,
                  include_moves: bool = True) -> Iterable[tuple[int, ...]]:
    """Enumerate every legal full action by walking the conditional masks.

    With ``collapse_modes`` only one representative non-defer mode and step
    option is expanded per LEO (the constraints do not depend on which).
    Without ``include_moves`` only the per-LEO heads are enumerated.
    """
    stop = ctx.layout.n_heads if include_moves else 4 * ctx.n_leo

    def rec(masker_state: SlotMasker):
        if masker_state.pos >= stop:
            yield tuple(masker_state.choices)
            return
        mk = masker_state.mask()
        options = np.flatnonzero(mk)
        head = masker_state.current_head()
        if collapse_modes and head.kind == "mode":
            options = options[:2]
        elif collapse_modes and head.kind == "steps":
            options = options[:1]
        for idx in options:
            child = _clone(masker_state)
            child.choose(int(idx), check=False)
            yield from rec(child)

    yield from rec(SlotMasker(ctx))


def _clone(masker: SlotMasker) -> SlotMasker:
    c = SlotMasker.__new__(SlotMasker)
    c.ctx = masker.ctx
    c.layout = masker.layout
    c.pos = masker.pos
    c.choices = list(masker.choices)
    c._claimed_leo = set(masker._claimed_leo)
    c._claimed_uav = set(masker._claimed_uav)
    c._claimed_user = set(masker._claimed_user)
    c._mode = masker._mode
    c._uav = masker._uav
    return c
