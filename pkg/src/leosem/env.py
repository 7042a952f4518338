"""Time-slotted constrained MDP for hybrid semantic LEO-UAV-ground delivery.

Each slot the agent decides, for every idle LEO with a waiting task, whether to
start it and how (transmission mode, denoising steps, UAV relay, ISL relay),
and moves each UAV by one of nine discrete displacements. Link rates are
realised with the exact channel; the observation carries only outdated CSI.

Observation layout (``EnvState.vector``), with M LEOs, N UAVs, L users and K
tasks, in this order:

=====================  ==========  =============================================
block                  length      content
=====================  ==========  =============================================
clock                  1           slot / horizon
sat_snr                M*(L+N)     log10(1 + outdated SNR) / 10, 0 if uncovered
sat_cov                M*(L+N)     coverage flags (users first, then UAVs)
uav_snr                N*L         log10(1 + outdated SNR) / 20, 0 if out of reach
uav_rel                N*L*2       (user - UAV) offset / UAV coverage radius, clipped
uav_reach              N*L         UAV coverage flags
uav_pos                N*2         UAV offset / service radius
relay                  L           relay-dependent user flags
user_busy              L           user receiving an in-flight task
uav_busy               N           UAV relaying an in-flight task
leo_hol                M*(5+L)     has task, LEO busy, elapsed/D_max, D_max/10,
                                    quality_min/40, destination one-hot
tasks                  K*3         D_k(t)/D_max, quality_k(t)/40, completion flag
=====================  ==========  =============================================
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import geometry as geo
from .channel import (SPEED_OF_LIGHT, FadingParams, IslParams, capacity, complex_normal,
                      db_to_linear)
from .errors import BadConfig, IllegalAction
from .kernels import j0_array
from .masking import (MOVE_DIRECTIONS, ActionLayout, MaskContext, SlotMasker, cached_layout,
                      mode_family, mode_options, option_choice, validate)
from .semlink import (Mode, ModeChoice, ModeProfile, SemNormalization, SemWeights, TaskOutcome,
                      compute_cost, quality, sem_terms)

TRACE_COLUMNS = ("slot", "task_id", "event", "D_k", "quality_k", "F_k", "SEM_k",
                 "mode", "layer", "steps", "route")


@dataclass(frozen=True)
class EnvConfig:
    world: geo.WorldConfig = field(default_factory=geo.WorldConfig)
    fading: FadingParams = field(default_factory=FadingParams)
    isl: IslParams = field(default_factory=IslParams)
    profile: ModeProfile = field(default_factory=ModeProfile)
    weights: SemWeights = field(default_factory=SemWeights)
    n_leo: int = 5
    n_uav: int = 2
    n_user: int = 5
    n_tasks: int = 100
    arrival_rate: float = 2.0
    horizon: int = 600
    leo_power: float = 1.0
    uav_power: float = 0.35
    leo_antenna_gain: float = db_to_linear(42.0)
    ground_carrier_freq: float = 20e9
    service_radius: float = 50e3
    uav_coverage_radius: float = 300.0
    uav_spawn_distance: tuple[float, float] = (150.0, 450.0)
    relay_users: tuple[int, int] = (1, 2)
    leo_spacing: tuple[float, float] = (200e3, 600e3)
    leo_first_offset_max: float = 800e3
    delay_max_range: tuple[float, float] = (3.0, 10.0)
    quality_min_range: tuple[float, float] = (12.0, 22.0)
    step_options: tuple[int, ...] = (4, 8, 16)
    allowed_modes: tuple[str, ...] = ("bit", "text", "text_image")
    hover_only: bool = False
    tx_throughput: float = 10_000.0
    rx_throughput: float = 5_000.0

    def __post_init__(self):
        if min(self.n_leo, self.n_uav, self.n_user) < 1 or self.n_tasks < 0:
            raise BadConfig("scenario needs at least one LEO, UAV and user")
        if self.arrival_rate < 0 or self.horizon < 1:
            raise BadConfig("arrival_rate must be >= 0 and horizon >= 1")
        if self.leo_power < 0 or self.uav_power < 0:
            raise BadConfig("transmit powers must be >= 0")
        if not self.step_options or min(self.step_options) < 1:
            raise BadConfig("step_options must be positive integers")
        if not set(self.allowed_modes) <= {"bit", "text", "text_image"} or not self.allowed_modes:
            raise BadConfig(f"unknown modes in {self.allowed_modes}")
        lo, hi = self.relay_users
        if not 0 <= lo <= hi:
            raise BadConfig("relay_users must be an ordered (min, max) pair")

    @property
    def norm(self) -> SemNormalization:
        return SemNormalization.for_profile(self.profile, max(self.step_options))

    @property
    def mode_options(self) -> tuple[str, ...]:
        return mode_options(self.profile)

    @property
    def layout(self) -> ActionLayout:
        return cached_layout(self.n_leo, self.n_uav, len(self.step_options), len(self.mode_options))

    @property
    def observation_size(self) -> int:
        m, n, l, k = self.n_leo, self.n_uav, self.n_user, self.n_tasks
        return 1 + 2 * m * (l + n) + n * l * 4 + n * 2 + 2 * l + n + m * (5 + l) + 3 * k


class TaskStatus(enum.Enum):
    PENDING = "PENDING"
    IN_FLIGHT = "IN_FLIGHT"
    DONE = "DONE"
    FAILED = "FAILED"


@dataclass
class Route:
    source: int
    user: int
    uav: int | None = None
    isl: int | None = None

    @property
    def label(self) -> str:
        parts = [f"S{self.source}"]
        if self.isl is not None:
            parts.append(f"S{self.isl}")
        if self.uav is not None:
            parts.append(f"U{self.uav}")
        parts.append(f"G{self.user}")
        return ">".join(parts)


@dataclass
class _Stage:
    kind: str                    # "compute", "wait" (seconds) or "tx" (bits)
    remaining: float
    link: tuple[str, str] | None = None


@dataclass
class Task:
    task_id: int
    source: int
    dest: int
    arrival_slot: int
    arrival_time: float
    data_bits: float
    delay_max: float
    quality_min: float
    status: TaskStatus = TaskStatus.PENDING
    choice: ModeChoice | None = None
    route: Route | None = None
    stages: list[_Stage] = field(default_factory=list)
    stage_idx: int = 0
    rx_time: float = 0.0
    outcome: TaskOutcome | None = None

    @property
    def resolved(self) -> bool:
        return self.status in (TaskStatus.DONE, TaskStatus.FAILED)


@dataclass(frozen=True)
class EnvAction:
    """Head indices in :class:`~leosem.masking.ActionLayout` order."""

    indices: tuple[int, ...]

    @classmethod
    def idle(cls, layout: ActionLayout) -> "EnvAction":
        return cls((0,) * layout.n_heads)

    @classmethod
    def build(cls, layout: ActionLayout, per_leo: dict[int, tuple[int, int, int, int]] | None = None,
              moves: Sequence[int] | None = None) -> "EnvAction":
        """Assemble from per-LEO (mode, steps, uav, isl) option indices and UAV moves."""
        idx = [0] * layout.n_heads
        for m, quad in (per_leo or {}).items():
            for j, v in enumerate(quad):
                idx[4 * m + j] = v
        for n, k in enumerate(moves or ()):
            idx[4 * layout.n_leo + n] = k
        return cls(tuple(idx))


@dataclass(frozen=True, eq=False)
class EnvState:
    slot: int
    vector: np.ndarray
    context: MaskContext
    outdated: dict[tuple[str, str], complex]


@dataclass
class StepResult:
    next_state: EnvState
    reward: float
    done: bool
    info: list[TaskOutcome]


def legal_action_mask(state: EnvState) -> SlotMasker:
    """Sequential masker for ``state``; see :mod:`leosem.masking`."""
    return SlotMasker(state.context)


class SemanticSatEnv:
    """Stateful environment; ``reset`` then repeated ``step``."""

    def __init__(self, cfg: EnvConfig):
        self.cfg = cfg
        self.layout = cfg.layout
        self.options = cfg.mode_options
        self.allowed_mode_idx = tuple(i for i, o in enumerate(self.options)
                                      if o != "defer" and mode_family(o) in cfg.allowed_modes)
        self.trace: list[tuple] = []
        self.snapshot: geo.NetworkSnapshot | None = None
        self.last_slot_routes: list[Route] = []
        self._keys = None

    # ------------------------------------------------------------------ reset
    def reset(self, seed: int) -> EnvState:
        cfg = self.cfg
        ss = np.random.SeedSequence(seed)
        geo_ss, task_ss, fade_ss, misc_ss = ss.spawn(4)
        self.rng_geo = np.random.default_rng(geo_ss)
        self.rng_task = np.random.default_rng(task_ss)
        self.rng_fade = np.random.default_rng(fade_ss)
        rng_misc = np.random.default_rng(misc_ss)

        leos = geo.random_leos(cfg.world, cfg.n_leo, self.rng_geo, cfg.leo_spacing,
                               cfg.leo_first_offset_max)
        users = []
        for _ in range(cfg.n_user):
            rho = cfg.service_radius * math.sqrt(self.rng_geo.uniform())
            az = self.rng_geo.uniform(0.0, 2.0 * math.pi)
            users.append((rho * math.cos(az), rho * math.sin(az)))
        lo, hi = cfg.relay_users
        n_relay = min(cfg.n_user, int(rng_misc.integers(lo, hi + 1)))
        self.relay_users = frozenset(int(u) for u in rng_misc.choice(cfg.n_user, n_relay, replace=False))
        anchors = sorted(self.relay_users) or [int(rng_misc.integers(cfg.n_user))]
        uavs = []
        for n in range(cfg.n_uav):
            ue, un = users[anchors[n % len(anchors)]]
            dist = self.rng_geo.uniform(*cfg.uav_spawn_distance)
            az = self.rng_geo.uniform(0.0, 2.0 * math.pi)
            e, nn = ue + dist * math.cos(az), un + dist * math.sin(az)
            rho = math.hypot(e, nn)
            if rho > cfg.service_radius:
                e, nn = e * cfg.service_radius / rho, nn * cfg.service_radius / rho
            uavs.append((e, nn))
        self.leo_phase = rng_misc.uniform(0.0, 2.0 * math.pi, cfg.n_leo)
        self.snapshot = geo.make_snapshot(cfg.world, leos, uavs, users)
        self.user_offsets = tuple(users)
        self.uav_offsets = tuple(uavs)

        self.slot = 0
        self.tasks: list[Task] = []
        self.queues: list[list[int]] = [[] for _ in range(cfg.n_leo)]
        self.trace = []
        self._spawned = 0
        self._spawn(0)
        self._sample_links()
        return self._state()

    # ---------------------------------------------------------------- tasks
    def spawn_tasks(self, slot: int) -> list[Task]:
        """Poisson arrivals for ``slot`` (capped at the episode's K tasks)."""
        cfg = self.cfg
        lam = cfg.arrival_rate * cfg.world.slot_duration
        count = int(self.rng_task.poisson(lam)) if lam > 0 else 0
        count = min(count, cfg.n_tasks - self._spawned)
        out = []
        for _ in range(count):
            task = Task(
                task_id=self._spawned,
                source=int(self.rng_task.integers(cfg.n_leo)),
                dest=int(self.rng_task.integers(cfg.n_user)),
                arrival_slot=slot,
                arrival_time=slot * cfg.world.slot_duration,
                data_bits=cfg.profile.original_bits,
                delay_max=float(self.rng_task.uniform(*cfg.delay_max_range)),
                quality_min=float(self.rng_task.uniform(*cfg.quality_min_range)),
            )
            self._spawned += 1
            out.append(task)
        return out

    def _spawn(self, slot: int) -> None:
        for task in self.spawn_tasks(slot):
            self.tasks.append(task)
            self.queues[task.source].append(task.task_id)
            self._log(task, "ARRIVE")

    # --------------------------------------------------------------- links
    def _sample_links(self) -> None:
        """Exact and outdated coefficients plus realised rates for this slot.

        A fixed number of random draws is consumed per slot, independent of
        the actions taken, so paired runs see identical channels.
        """
        cfg = self.cfg
        snap = self.snapshot
        leos = snap.of_kind(geo.NodeKind.LEO)
        uavs = snap.of_kind(geo.NodeKind.UAV)
        users = snap.of_kind(geo.NodeKind.USER)
        ground = users + uavs
        c = SPEED_OF_LIGHT
        lam = c / cfg.ground_carrier_freq
        noise = cfg.fading.noise_power
        bw = cfg.fading.bandwidth

        leo_pos = np.array([m.position for m in leos])
        gnd_pos = np.array([g.position for g in ground])
        d_sat = np.linalg.norm(leo_pos[:, None, :] - gnd_pos[None, :, :], axis=2)
        mag = math.sqrt(cfg.leo_antenna_gain) * lam / (4.0 * math.pi * d_sat)
        h_sat = mag * np.exp(1j * self.leo_phase)[:, None]
        doppler = cfg.world.leo_speed / c * cfg.ground_carrier_freq
        xi_sat = j0_array(2.0 * math.pi * doppler * d_sat / c)
        h_hat = complex_normal(self.rng_fade, d_sat.shape) * np.abs(h_sat)
        hbar_sat = xi_sat * h_sat + np.sqrt(1.0 - xi_sat ** 2) * h_hat

        uav_pos = np.array([u.position for u in uavs])
        usr_pos = np.array([g.position for g in users])
        d_uav = np.linalg.norm(uav_pos[:, None, :] - usr_pos[None, :, :], axis=2)
        nlos = complex_normal(self.rng_fade, d_uav.shape)
        fp = cfg.fading
        k = fp.rician_kappa
        w_los, w_nlos = (1.0, 0.0) if math.isinf(k) else (math.sqrt(k / (k + 1)), math.sqrt(1 / (k + 1)))
        h_uav = (w_los * np.exp(1j * fp.los_phase) * d_uav ** (-fp.alpha_los / 2)
                 + w_nlos * nlos * d_uav ** (-fp.alpha_nlos / 2))
        doppler_u = cfg.world.uav_speed_max / c * cfg.ground_carrier_freq
        xi_uav = j0_array(2.0 * math.pi * doppler_u * d_uav / c)
        hbar_uav = xi_uav * h_uav + np.sqrt(1.0 - xi_uav ** 2) * (
            complex_normal(self.rng_fade, d_uav.shape) * np.abs(h_uav))

        cov = snap.coverage
        covered = np.array([[g.node_id in cov[m.node_id] for g in ground] for m in leos])
        self.uav_reach = frozenset(
            (n, l) for n in range(cfg.n_uav) for l in range(cfg.n_user)
            if math.hypot(self.uav_offsets[n][0] - self.user_offsets[l][0],
                          self.uav_offsets[n][1] - self.user_offsets[l][1]) <= cfg.uav_coverage_radius)
        reach = np.array([[(n, l) in self.uav_reach for l in range(cfg.n_user)] for n in range(cfg.n_uav)])

        rate_sat = np.where(covered, capacity(h_sat, cfg.leo_power, bw, noise), 0.0)
        rate_uav = np.where(reach, capacity(h_uav, cfg.uav_power, bw, noise), 0.0)
        self.snr_sat_outdated = np.where(covered, cfg.leo_power * np.abs(hbar_sat) ** 2 / noise, 0.0)
        self.snr_uav_outdated = np.where(reach, cfg.uav_power * np.abs(hbar_uav) ** 2 / noise, 0.0)
        self.covered = covered
        self.reach = reach

        if self._keys is None:
            sat_keys = [(m.node_id, g.node_id) for m in leos for g in ground]
            isl_pairs = [(i, j) for i in range(len(leos)) for j in range(len(leos)) if i != j]
            isl_keys = [(leos[i].node_id, leos[j].node_id) for i, j in isl_pairs]
            uav_keys = [(u.node_id, g.node_id) for u in uavs for g in users]
            self._keys = (sat_keys, isl_pairs, isl_keys, uav_keys)
        sat_keys, isl_pairs, isl_keys, uav_keys = self._keys
        d_isl = np.linalg.norm(leo_pos[:, None, :] - leo_pos[None, :, :], axis=2)
        ii = tuple(np.array(isl_pairs, dtype=np.intp).T)
        isl = cfg.isl
        path = (4.0 * math.pi * d_isl[ii] * isl.carrier_freq / isl.light_speed) ** 2
        snr_isl = cfg.leo_power * isl.peak_gain ** 2 / (isl.boltzmann * isl.thermal_noise * isl.bandwidth * path)
        rate_isl = isl.bandwidth * np.log2(1.0 + snr_isl)

        rates = dict(zip(sat_keys, rate_sat.ravel().tolist()))
        rates.update(zip(isl_keys, rate_isl.tolist()))
        rates.update(zip(uav_keys, rate_uav.ravel().tolist()))
        delays = dict(zip(sat_keys, (d_sat / c).ravel().tolist()))
        delays.update(zip(isl_keys, (d_isl[ii] / c).tolist()))
        delays.update(zip(uav_keys, (d_uav / c).ravel().tolist()))
        exact = dict(zip(sat_keys, h_sat.ravel().tolist()))
        exact.update(zip(uav_keys, h_uav.ravel().tolist()))
        outdated = dict(zip(sat_keys, hbar_sat.ravel().tolist()))
        outdated.update(zip(uav_keys, hbar_uav.ravel().tolist()))
        self.rates = rates
        self.prop_delays = delays
        self.exact = exact
        self.outdated = outdated

    # --------------------------------------------------------------- state
    def _busy(self) -> tuple[set[int], set[int], set[int]]:
        leos, uavs, users = set(), set(), set()
        for t in self.tasks:
            if t.status is TaskStatus.IN_FLIGHT:
                leos.add(t.route.source)
                if t.route.isl is not None:
                    leos.add(t.route.isl)
                if t.route.uav is not None:
                    uavs.add(t.route.uav)
                users.add(t.route.user)
        return leos, uavs, users

    def _hol(self, busy_leo: set[int]) -> list[Task | None]:
        out = []
        for m in range(self.cfg.n_leo):
            q = self.queues[m]
            if m in busy_leo or not q:
                out.append(None)
            else:
                out.append(self.tasks[q[0]])
        return out

    def _state(self) -> EnvState:
        cfg = self.cfg
        busy_leo, busy_uav, busy_user = self._busy()
        hol = self._hol(busy_leo)
        cov = self.snapshot.coverage
        ctx = MaskContext(
            n_leo=cfg.n_leo, n_uav=cfg.n_uav, n_user=cfg.n_user,
            hol=tuple(None if t is None else (t.task_id, t.dest) for t in hol),
            busy_leo=frozenset(busy_leo), busy_uav=frozenset(busy_uav), busy_user=frozenset(busy_user),
            coverage=tuple(cov[f"S{m}"] for m in range(cfg.n_leo)),
            relay_users=self.relay_users,
            uav_reach=self.uav_reach,
            uav_offsets=self.uav_offsets,
            service_radius=cfg.service_radius,
            move_step=cfg.world.uav_speed_max * cfg.world.slot_duration,
            allowed_modes=self.allowed_mode_idx,
            hover_only=cfg.hover_only,
            n_step_options=len(cfg.step_options),
            n_mode_options=len(self.options),
        )
        self._ctx = ctx
        return EnvState(self.slot, self._vector(hol, busy_leo, busy_uav, busy_user), ctx,
                        dict(self.outdated))

    def _vector(self, hol, busy_leo, busy_uav, busy_user) -> np.ndarray:
        cfg = self.cfg
        now = self.slot * cfg.world.slot_duration
        parts = [np.array([self.slot / cfg.horizon])]
        parts.append((np.log10(1.0 + self.snr_sat_outdated) / 10.0).ravel())
        parts.append(self.covered.astype(float).ravel())
        parts.append((np.log10(1.0 + self.snr_uav_outdated) / 20.0).ravel())
        rel = np.array([[(self.user_offsets[l][0] - self.uav_offsets[n][0],
                          self.user_offsets[l][1] - self.uav_offsets[n][1])
                         for l in range(cfg.n_user)] for n in range(cfg.n_uav)])
        parts.append(np.clip(rel / cfg.uav_coverage_radius, -3.0, 3.0).ravel())
        parts.append(self.reach.astype(float).ravel())
        parts.append((np.array(self.uav_offsets) / cfg.service_radius).ravel())
        parts.append(np.array([l in self.relay_users for l in range(cfg.n_user)], float))
        parts.append(np.array([l in busy_user for l in range(cfg.n_user)], float))
        parts.append(np.array([n in busy_uav for n in range(cfg.n_uav)], float))
        leo_block = np.zeros((cfg.n_leo, 5 + cfg.n_user))
        for m, t in enumerate(hol):
            leo_block[m, 1] = m in busy_leo
            if t is not None:
                leo_block[m, 0] = 1.0
                leo_block[m, 2] = (now - t.arrival_time) / t.delay_max
                leo_block[m, 3] = t.delay_max / 10.0
                leo_block[m, 4] = t.quality_min / 40.0
                leo_block[m, 5 + t.dest] = 1.0
        parts.append(leo_block.ravel())
        task_block = np.zeros((cfg.n_tasks, 3))
        for t in self.tasks:
            row = task_block[t.task_id]
            if t.outcome is not None and t.status is TaskStatus.DONE:
                row[0] = t.outcome.delay / t.delay_max
                row[1] = t.outcome.quality / 40.0
                row[2] = 1.0
            else:
                row[0] = min(1.0, (now - t.arrival_time) / t.delay_max) if t.status is not TaskStatus.FAILED else 1.0
                if t.choice is not None:
                    row[1] = quality(t.choice, cfg.profile) / 40.0
        parts.append(task_block.ravel())
        return np.concatenate(parts)

    # ---------------------------------------------------------------- step
    def step(self, action: EnvAction | Sequence[int]) -> StepResult:
        cfg = self.cfg
        indices = action.indices if isinstance(action, EnvAction) else tuple(int(i) for i in action)
        ctx = self._ctx
        validate(ctx, indices)

        t0 = self.slot * cfg.world.slot_duration
        self._start_tasks(indices, ctx)
        self.last_slot_routes = self.active_transmissions()
        completions = self._progress(t0, t0 + cfg.world.slot_duration)
        self._expire(t0 + cfg.world.slot_duration)

        reward = sum(o.sem for o in completions if o.completed) / max(cfg.n_tasks, 1)

        moves = []
        step = cfg.world.uav_speed_max * cfg.world.slot_duration
        for n in range(cfg.n_uav):
            k = indices[4 * cfg.n_leo + n]
            de, dn = MOVE_DIRECTIONS[k]
            moves.append((de * step, dn * step, 0.0))
        self.snapshot = geo.advance(self.snapshot, moves, cfg.world)
        self.uav_offsets = tuple((e + m[0], n + m[1]) for (e, n), m in zip(self.uav_offsets, moves))
        self.slot += 1
        self._spawn(self.slot)
        self._sample_links()
        state = self._state()
        done = self.finished or self.slot >= cfg.horizon
        return StepResult(state, reward, done, completions)

    def state(self) -> EnvState:
        return self._state()

    @property
    def finished(self) -> bool:
        return self._spawned >= self.cfg.n_tasks and all(t.resolved for t in self.tasks)

    def _start_tasks(self, indices: Sequence[int], ctx: MaskContext) -> None:
        cfg = self.cfg
        for m in range(cfg.n_leo):
            mode_i, steps_i, uav_i, isl_i = indices[4 * m: 4 * m + 4]
            if mode_i == 0:
                continue
            task_id, user = ctx.hol[m]
            task = self.tasks[task_id]
            choice = option_choice(self.options[mode_i], cfg.step_options[steps_i]).validate(cfg.profile)
            route = Route(m, user, None if uav_i == 0 else uav_i - 1, ActionLayout.isl_target(m, isl_i))
            self._plan(task, choice, route)
            self.queues[m].pop(0)
            task.status = TaskStatus.IN_FLIGHT
            self._log(task, "START")

    def _plan(self, task: Task, choice: ModeChoice, route: Route) -> None:
        cfg = self.cfg
        prof = cfg.profile
        tx, rx = compute_cost(choice, prof)
        payload = prof.payload_bits(choice.mode, choice.layer)
        hops = [f"S{route.source}"]
        if route.isl is not None:
            hops.append(f"S{route.isl}")
        hops.append(f"U{route.uav}" if route.uav is not None else f"G{route.user}")
        stages = []
        if tx > 0:
            stages.append(_Stage("compute", tx / cfg.tx_throughput))
        for a, b in zip(hops, hops[1:]):
            stages.append(_Stage("tx", payload, (a, b)))
            stages.append(_Stage("wait", self.prop_delays[(a, b)]))
        if route.uav is not None:
            if rx > 0:
                stages.append(_Stage("compute", rx / cfg.rx_throughput))
            link = (f"U{route.uav}", f"G{route.user}")
            stages.append(_Stage("tx", prof.bit_bits, link))
            stages.append(_Stage("wait", self.prop_delays[link]))
            task.rx_time = 0.0
        else:
            task.rx_time = rx / cfg.rx_throughput
        task.choice = choice
        task.route = route
        task.stages = stages
        task.stage_idx = 0

    def _progress(self, t_start: float, t_end: float) -> list[TaskOutcome]:
        out = []
        for task in self.tasks:
            if task.status is not TaskStatus.IN_FLIGHT:
                continue
            now = t_start
            while task.stage_idx < len(task.stages) and now < t_end:
                st = task.stages[task.stage_idx]
                if st.kind == "tx":
                    rate = self.rates[st.link]
                    if rate <= 0.0:
                        break
                    need = st.remaining / rate
                    if need <= t_end - now:
                        now += need
                        st.remaining = 0.0
                        task.stage_idx += 1
                    else:
                        st.remaining -= (t_end - now) * rate
                        now = t_end
                else:
                    if st.remaining <= t_end - now:
                        now += st.remaining
                        st.remaining = 0.0
                        task.stage_idx += 1
                    else:
                        st.remaining -= t_end - now
                        now = t_end
            if task.stage_idx >= len(task.stages):
                out.append(self._deliver(task, now))
        return out

    def _deliver(self, task: Task, delivered_at: float) -> TaskOutcome:
        cfg = self.cfg
        delay = delivered_at - task.arrival_time + task.rx_time
        q = quality(task.choice, cfg.profile)
        tx, rx = compute_cost(task.choice, cfg.profile)
        ok = delay <= task.delay_max and q >= task.quality_min
        outcome = TaskOutcome(task.task_id, delay, task.delay_max, q, task.quality_min, tx + rx, ok)
        if ok:
            terms = sem_terms(delay, task.delay_max, q, task.quality_min, tx + rx, cfg.weights, cfg.norm)
            outcome.sem = terms[0] + terms[1] - terms[2]
            task.status = TaskStatus.DONE
        else:
            task.status = TaskStatus.FAILED
        task.outcome = outcome
        self._log(task, "DONE" if ok else "FAILED")
        return outcome

    def _expire(self, now: float) -> None:
        for task in self.tasks:
            if task.resolved or now - task.arrival_time <= task.delay_max:
                continue
            if task.status is TaskStatus.PENDING:
                self.queues[task.source].remove(task.task_id)
            task.status = TaskStatus.FAILED
            task.outcome = TaskOutcome(task.task_id, now - task.arrival_time, task.delay_max,
                                       float("nan"), task.quality_min, 0.0, False)
            self._log(task, "FAILED")

    # --------------------------------------------------------------- trace
    def _log(self, task: Task, event: str) -> None:
        o = task.outcome
        c = task.choice
        self.trace.append((
            self.slot, task.task_id, event,
            "" if o is None else repr(float(o.delay)),
            "" if o is None or math.isnan(o.quality) else repr(float(o.quality)),
            "" if o is None else repr(float(o.compute)),
            "" if o is None or not o.completed else repr(float(o.sem)),
            "" if c is None else c.mode.name,
            "" if c is None else c.layer,
            "" if c is None else c.denoise_steps,
            "" if task.route is None else task.route.label,
        ))

    def write_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            w.writerows(self.trace)

    # ----------------------------------------------------------- accounting
    def status_counts(self) -> dict[TaskStatus, int]:
        counts = {s: 0 for s in TaskStatus}
        for t in self.tasks:
            counts[t.status] += 1
        return counts

    def active_transmissions(self) -> list[Route]:
        return [t.route for t in self.tasks if t.status is TaskStatus.IN_FLIGHT]
