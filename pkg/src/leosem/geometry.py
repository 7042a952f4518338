"""Time-slotted kinematics for LEOs, UAVs and ground users.

Positions live in an Earth-centred frame whose x axis passes through the
centre of the service area (latitude 0, longitude 0). Ground nodes sit on
the sphere, UAVs at a constant height above it, and LEOs on great circles
at constant altitude and speed.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .errors import AltitudeViolation, BadConfig, DisplacementTooFast

# Local tangent basis at the service centre.
UP = np.array([1.0, 0.0, 0.0])
EAST = np.array([0.0, 1.0, 0.0])
NORTH = np.array([0.0, 0.0, 1.0])

_HEIGHT_TOL = 1e-6


class NodeKind(enum.Enum):
    LEO = "LEO"
    UAV = "UAV"
    USER = "USER"


@dataclass(frozen=True)
class WorldConfig:
    earth_radius: float = 6_371_000.0
    leo_altitude: float = 750_000.0
    uav_altitude: float = 100.0
    leo_speed: float = 7_800.0
    uav_speed_max: float = 12.0
    min_elevation: float = 40.0
    slot_duration: float = 0.1

    def __post_init__(self):
        for name in ("earth_radius", "leo_altitude", "uav_altitude", "leo_speed",
                     "uav_speed_max", "slot_duration"):
            if not getattr(self, name) > 0:
                raise BadConfig(f"{name} must be strictly positive")
        if not 0.0 < self.min_elevation < 90.0:
            raise BadConfig("min_elevation must lie in (0, 90) degrees")


@dataclass(frozen=True, eq=False)
class NodeKinematics:
    node_id: str
    kind: NodeKind
    position: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass(frozen=True, eq=False)
class NetworkSnapshot:
    slot_index: int
    nodes: tuple[NodeKinematics, ...]
    coverage: Mapping[str, frozenset[str]]

    def node(self, node_id: str) -> NodeKinematics:
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise KeyError(node_id)

    def of_kind(self, kind: NodeKind) -> list[NodeKinematics]:
        return [n for n in self.nodes if n.kind is kind]


def distance(a: NodeKinematics, b: NodeKinematics) -> float:
    d = a.position - b.position
    return math.sqrt(float(d @ d))


def elevation_angle(leo: NodeKinematics, ground: NodeKinematics, cfg: WorldConfig | None = None) -> float:
    """Elevation (degrees) of ``leo`` above the local horizon of ``ground``."""
    up = ground.position / np.linalg.norm(ground.position)
    los = leo.position - ground.position
    sin_el = float(los @ up) / math.sqrt(float(los @ los))
    return math.degrees(math.asin(max(-1.0, min(1.0, sin_el))))


def central_angle_elevation(central_angle: float, altitude: float, earth_radius: float) -> float:
    """Closed-form spherical-Earth elevation (degrees) for a ground node on the surface."""
    ratio = earth_radius / (earth_radius + altitude)
    cos_g = math.cos(central_angle)
    sin_el = (cos_g - ratio) / math.sqrt(1.0 + ratio * ratio - 2.0 * ratio * cos_g)
    return math.degrees(math.asin(sin_el))


def compute_coverage(nodes: Sequence[NodeKinematics], cfg: WorldConfig) -> dict[str, frozenset[str]]:
    """Ground nodes seen by each LEO at or above the minimum elevation."""
    leos = [n for n in nodes if n.kind is NodeKind.LEO]
    ground = [n for n in nodes if n.kind is not NodeKind.LEO]
    if not leos or not ground:
        return {m.node_id: frozenset() for m in leos}
    lp = np.array([m.position for m in leos])
    gp = np.array([g.position for g in ground])
    up = gp / np.linalg.norm(gp, axis=1)[:, None]
    los = lp[:, None, :] - gp[None, :, :]
    sin_el = np.einsum("mgk,gk->mg", los, up) / np.linalg.norm(los, axis=2)
    elev = np.degrees(np.arcsin(np.clip(sin_el, -1.0, 1.0)))
    seen = elev >= cfg.min_elevation
    return {m.node_id: frozenset(g.node_id for j, g in enumerate(ground) if seen[i, j])
            for i, m in enumerate(leos)}


def _slide(position: np.ndarray, direction: np.ndarray, arc: float) -> tuple[np.ndarray, np.ndarray]:
    """Move along the great circle through ``position`` heading ``direction``.

    Returns the new position and the new unit heading; the radius is kept.
    """
    r = math.sqrt(float(position @ position))
    up = position / r
    ang = arc / r
    c, s = math.cos(ang), math.sin(ang)
    new_pos = r * (c * up + s * direction)
    new_dir = -s * up + c * direction
    return new_pos, new_dir


def surface_point(east: float, north: float, radius: float, earth_radius: float = 6_371_000.0) -> np.ndarray:
    """Map local (east, north) offsets from the service centre onto a sphere.

    Azimuthal-equidistant on the Earth's surface: the ground arc from the centre
    equals hypot(east, north); nodes above ground share the same angular position.
    """
    rho = math.hypot(east, north)
    if rho == 0.0:
        return radius * UP.copy()
    heading = (east * EAST + north * NORTH) / rho
    pos, _ = _slide(radius * UP, heading, rho / earth_radius * radius)
    return pos


def local_offsets(position: np.ndarray, earth_radius: float = 6_371_000.0) -> tuple[float, float]:
    """Inverse of :func:`surface_point`."""
    up = position / np.linalg.norm(position)
    norm = math.hypot(up[1], up[2])
    ang = math.atan2(norm, up[0])
    if norm == 0.0:
        return 0.0, 0.0
    return ang * earth_radius * up[1] / norm, ang * earth_radius * up[2] / norm


def local_frame(position: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(east, north, up) unit vectors at ``position``."""
    up = position / math.sqrt(float(position @ position))
    # NORTH x up and up x east, written out (np.cross is slow on 3-vectors)
    east = np.array([NORTH[1] * up[2] - NORTH[2] * up[1],
                     NORTH[2] * up[0] - NORTH[0] * up[2],
                     NORTH[0] * up[1] - NORTH[1] * up[0]])
    east /= math.sqrt(float(east @ east))
    north = np.array([up[1] * east[2] - up[2] * east[1],
                      up[2] * east[0] - up[0] * east[2],
                      up[0] * east[1] - up[1] * east[0]])
    return east, north, up


def _move_uav(node: NodeKinematics, displacement: Sequence[float], cfg: WorldConfig) -> NodeKinematics:
    disp = np.asarray(displacement, dtype=float)
    if disp.shape != (3,):
        raise ValueError("UAV displacement must be a 3-vector (east, north, up)")
    if abs(disp[2]) > _HEIGHT_TOL:
        raise AltitudeViolation(f"{node.node_id}: waypoint changes height by {disp[2]} m")
    step = math.hypot(disp[0], disp[1])
    speed = step / cfg.slot_duration
    if speed > cfg.uav_speed_max * (1.0 + 1e-12):
        raise DisplacementTooFast(
            f"{node.node_id}: {speed:.3f} m/s exceeds v_max={cfg.uav_speed_max} m/s")
    if step == 0.0:
        return replace(node, velocity=np.zeros(3))
    east, north, _ = local_frame(node.position)
    heading = (disp[0] * east + disp[1] * north) / step
    new_pos, new_dir = _slide(node.position, heading, step)
    return replace(node, position=new_pos, velocity=new_dir * speed)


def _move_leo(node: NodeKinematics, cfg: WorldConfig) -> NodeKinematics:
    speed = math.sqrt(float(node.velocity @ node.velocity))
    if speed == 0.0:
        return node
    heading = node.velocity / speed
    new_pos, new_dir = _slide(node.position, heading, speed * cfg.slot_duration)
    return replace(node, position=new_pos, velocity=new_dir * speed)


def advance(snapshot: NetworkSnapshot, uav_waypoints: Mapping[str, Sequence[float]] | Sequence[Sequence[float]],
            cfg: WorldConfig) -> NetworkSnapshot:
    """Advance every node by one slot.

    ``uav_waypoints`` holds one (east, north, up) displacement per UAV, either
    keyed by node id or in UAV order. Missing UAVs hover.
    """
    uavs = [n.node_id for n in snapshot.nodes if n.kind is NodeKind.UAV]
    if isinstance(uav_waypoints, Mapping):
        moves = dict(uav_waypoints)
    else:
        moves = dict(zip(uavs, uav_waypoints))
    nodes = []
    for n in snapshot.nodes:
        if n.kind is NodeKind.LEO:
            nodes.append(_move_leo(n, cfg))
        elif n.kind is NodeKind.UAV:
            nodes.append(_move_uav(n, moves.get(n.node_id, (0.0, 0.0, 0.0)), cfg))
        else:
            nodes.append(n)
    nodes = tuple(nodes)
    return NetworkSnapshot(snapshot.slot_index + 1, nodes, compute_coverage(nodes, cfg))


def make_snapshot(cfg: WorldConfig, leos: Sequence[tuple[np.ndarray, np.ndarray]],
                  uav_offsets: Sequence[tuple[float, float]],
                  user_offsets: Sequence[tuple[float, float]]) -> NetworkSnapshot:
    """Build slot 0 from LEO (position, velocity) pairs and local ground offsets."""
    nodes = []
    for i, (pos, vel) in enumerate(leos):
        nodes.append(NodeKinematics(f"S{i}", NodeKind.LEO, np.asarray(pos, float), np.asarray(vel, float)))
    for i, (e, n) in enumerate(uav_offsets):
        nodes.append(NodeKinematics(f"U{i}", NodeKind.UAV,
                                    surface_point(e, n, cfg.earth_radius + cfg.uav_altitude, cfg.earth_radius)))
    for i, (e, n) in enumerate(user_offsets):
        nodes.append(NodeKinematics(f"G{i}", NodeKind.USER, surface_point(e, n, cfg.earth_radius, cfg.earth_radius)))
    nodes = tuple(nodes)
    return NetworkSnapshot(0, nodes, compute_coverage(nodes, cfg))


def random_leos(cfg: WorldConfig, count: int, rng: np.random.Generator,
                spacing: tuple[float, float] = (200e3, 600e3),
                first_offset_max: float = 400e3) -> list[tuple[np.ndarray, np.ndarray]]:
    """Place LEOs on independent straight ground tracks.

    The first LEO's sub-satellite point lies within ``first_offset_max`` of the
    service centre; each further LEO is ``U(spacing)`` metres (straight-line,
    at orbit altitude) from its predecessor in a random direction.
    """
    r = cfg.earth_radius + cfg.leo_altitude
    rho = first_offset_max * math.sqrt(rng.uniform())
    az = rng.uniform(0.0, 2.0 * math.pi)
    pos = surface_point(rho * math.cos(az), rho * math.sin(az), r, cfg.earth_radius)
    out = []
    for i in range(count):
        if i > 0:
            chord = rng.uniform(*spacing)
            arc = 2.0 * r * math.asin(chord / (2.0 * r))
            east, north, _ = local_frame(out[-1][0])
            b = rng.uniform(0.0, 2.0 * math.pi)
            pos, _ = _slide(out[-1][0], math.cos(b) * east + math.sin(b) * north, arc)
        east, north, _ = local_frame(pos)
        heading_ang = rng.uniform(0.0, 2.0 * math.pi)
        heading = math.cos(heading_ang) * east + math.sin(heading_ang) * north
        out.append((pos, heading * cfg.leo_speed))
    return out
