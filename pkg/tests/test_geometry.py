import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from leosem import geometry as geo
from leosem.errors import AltitudeViolation, BadConfig, DisplacementTooFast

CFG = geo.WorldConfig()
R = CFG.earth_radius
H = CFG.leo_altitude

# Frozen from a 30-digit mpmath evaluation of the planar formula
# tan(el) = (cos g - R/(R+h)) / sin g, independent of the library's sin form.
ELEV_750KM_5DEG = 49.35280135335102
# |LEO at the centre's zenith - user 30 km east on the surface|, same oracle.
DIST_ZENITH_30KM = 750670.3317514860


def _node(pos, kind=geo.NodeKind.USER, nid="G0", vel=None):
    return geo.NodeKinematics(nid, kind, np.asarray(pos, float),
                              np.zeros(3) if vel is None else np.asarray(vel, float))


def _leo_at(central_angle, altitude=H):
    r = R + altitude
    return _node([r * math.cos(central_angle), r * math.sin(central_angle), 0.0], geo.NodeKind.LEO, "S0")


GROUND = _node([R, 0.0, 0.0])


def test_world_config_validation():
    with pytest.raises(BadConfig):
        geo.WorldConfig(min_elevation=90.0)
    with pytest.raises(BadConfig):
        geo.WorldConfig(leo_speed=0.0)


def test_zenith_is_ninety_degrees():
    assert geo.elevation_angle(_leo_at(0.0), GROUND, CFG) == pytest.approx(90.0, abs=1e-12)


def test_horizon_is_zero_degrees():
    gamma = math.acos(R / (R + H))
    assert geo.elevation_angle(_leo_at(gamma), GROUND, CFG) == pytest.approx(0.0, abs=1e-7)


def test_elevation_matches_spherical_oracle():
    el = geo.elevation_angle(_leo_at(math.radians(5.0)), GROUND, CFG)
    assert el == pytest.approx(ELEV_750KM_5DEG, rel=1e-12)
    assert geo.central_angle_elevation(math.radians(5.0), H, R) == pytest.approx(ELEV_750KM_5DEG, rel=1e-12)


def test_elevation_monotone_in_central_angle():
    grid = np.linspace(0.0, 0.3, 200)
    els = [geo.elevation_angle(_leo_at(g), GROUND, CFG) for g in grid]
    assert np.all(np.diff(els) < 0)


def test_distance_examples():
    a = _node([0.0, 0.0, 0.0])
    assert geo.distance(a, a) == 0.0
    assert geo.distance(a, _node([3.0, 4.0, 0.0])) == 5.0
    user = _node(geo.surface_point(30e3, 0.0, R, R))
    assert geo.distance(_leo_at(0.0), user) == pytest.approx(DIST_ZENITH_30KM, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e7, 1e7), min_size=9, max_size=9))
def test_distance_triangle_inequality(xs):
    a, b, c = (_node(xs[i:i + 3]) for i in (0, 3, 6))
    assert geo.distance(a, c) <= geo.distance(a, b) + geo.distance(b, c) + 1e-6
    assert geo.distance(a, b) == geo.distance(b, a)


@settings(max_examples=40, deadline=None)
@given(st.floats(-40e3, 40e3), st.floats(-40e3, 40e3))
def test_surface_point_round_trip(e, n):
    p = geo.surface_point(e, n, R, R)
    assert np.linalg.norm(p) == pytest.approx(R, rel=1e-14)
    e2, n2 = geo.local_offsets(p, R)
    assert e2 == pytest.approx(e, abs=1e-6) and n2 == pytest.approx(n, abs=1e-6)


def _snapshot(leo_speed=CFG.leo_speed, seed=0):
    cfg = geo.WorldConfig(leo_speed=leo_speed)
    rng = np.random.default_rng(seed)
    leos = geo.random_leos(cfg, 3, rng)
    return cfg, geo.make_snapshot(cfg, leos, [(100.0, 0.0)], [(0.0, 0.0), (2e3, -1e3)])


def test_advance_identity_with_zero_speed():
    cfg, snap = _snapshot(leo_speed=1e-300)
    nxt = geo.advance(snap, [(0.0, 0.0, 0.0)], cfg)
    assert nxt.slot_index == snap.slot_index + 1
    for a, b in zip(snap.nodes, nxt.nodes):
        np.testing.assert_array_equal(a.position, b.position)


def test_leo_moves_780m_per_slot():
    cfg, snap = _snapshot()
    nxt = geo.advance(snap, [(0.0, 0.0, 0.0)], cfg)
    for a, b in zip(snap.of_kind(geo.NodeKind.LEO), nxt.of_kind(geo.NodeKind.LEO)):
        arc = np.linalg.norm(a.position) * math.acos(
            np.clip(a.position @ b.position / (np.linalg.norm(a.position) * np.linalg.norm(b.position)), -1, 1))
        assert arc == pytest.approx(780.0, rel=1e-6)
        assert np.linalg.norm(b.position) == pytest.approx(R + H, rel=1e-13)
        assert np.linalg.norm(b.velocity) == pytest.approx(7800.0, rel=1e-12)


def test_uav_speed_and_altitude_limits():
    cfg, snap = _snapshot()
    with pytest.raises(DisplacementTooFast):
        geo.advance(snap, [(1.3, 0.0, 0.0)], cfg)
    with pytest.raises(AltitudeViolation):
        geo.advance(snap, [(0.0, 0.0, 0.5)], cfg)
    nxt = geo.advance(snap, [(1.2, 0.0, 0.0)], cfg)
    uav0, uav1 = snap.node("U0"), nxt.node("U0")
    assert np.linalg.norm(uav1.position) == pytest.approx(R + cfg.uav_altitude, rel=1e-14)
    assert geo.distance(uav0, uav1) == pytest.approx(1.2, rel=1e-6)


def test_advance_preserves_kinds_and_users():
    cfg, snap = _snapshot()
    nxt = geo.advance(snap, {"U0": (0.5, 0.5, 0.0)}, cfg)
    assert [n.kind for n in nxt.nodes] == [n.kind for n in snap.nodes]
    for a, b in zip(snap.of_kind(geo.NodeKind.USER), nxt.of_kind(geo.NodeKind.USER)):
        np.testing.assert_array_equal(a.position, b.position)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_coverage_equals_elevation_rule(seed):
    cfg = CFG
    rng = np.random.default_rng(seed)
    leos = geo.random_leos(cfg, 4, rng, first_offset_max=1500e3)
    ground = [tuple(rng.uniform(-50e3, 50e3, 2)) for _ in range(4)]
    snap = geo.make_snapshot(cfg, leos, ground[:2], ground[2:])
    for m in snap.of_kind(geo.NodeKind.LEO):
        want = {g.node_id for g in snap.nodes if g.kind is not geo.NodeKind.LEO
                and geo.elevation_angle(m, g, cfg) >= cfg.min_elevation}
        assert snap.coverage[m.node_id] == want


def test_random_leo_spacing():
    rng = np.random.default_rng(7)
    leos = geo.random_leos(CFG, 5, rng)
    for (a, _), (b, _) in zip(leos, leos[1:]):
        assert 200e3 - 1e-3 <= np.linalg.norm(a - b) <= 600e3 + 1e-3
