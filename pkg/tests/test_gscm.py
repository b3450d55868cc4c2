import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.constants import c as C0

from mnvchan import gscm
from mnvchan.errors import ValidationError
from mnvchan.params import DEFAULT_CLUSTERS, PROFILE_PRESETS
from mnvchan.scenario import Foliage, VehiclePose, fixture_path, load_scenario, parse_scenario

LOS = DEFAULT_CLUSTERS["LOS"]
MD = DEFAULT_CLUSTERS["MD"]


def pose(center=(0, 0), heading=(1, 0), length=14.0, width=2.55):
    return VehiclePose(np.array([center], float), np.array([heading], float), length, width)


def two_nodes(extra=None, geometry=None):
    doc = {
        "schema": 1,
        "geometry": geometry or {},
        "vehicles": [
            {"id": "a", "node": 1, "length": 4, "width": 2, "waypoints": [[0, 0, 0], [10, 10, 0]]},
            {"id": "b", "node": 2, "length": 4, "width": 2, "waypoints": [[0, 40, 0], [10, 50, 0]]},
        ]
        + (extra or []),
    }
    return parse_scenario(doc)


# --- amplitude law -----------------------------------------------------------


def test_los_power_at_10m():
    assert gscm.path_power_db(LOS, 10.0) == pytest.approx(-56.0)
    assert 20 * np.log10(abs(gscm.path_gain(LOS, 10.0))) == pytest.approx(-56.0)


def test_power_at_reference_distance_and_clamp():
    for kind in ("LOS", "SD", "MD", "DI"):
        p = DEFAULT_CLUSTERS[kind]
        assert gscm.path_power_db(p, 1.0) == p.G0
        assert gscm.path_power_db(p, 0.2) == p.G0


def test_phase_and_initial_phase():
    d = 12.3
    g = gscm.path_gain(LOS, d)
    assert np.angle(g * np.exp(2j * np.pi * d * gscm.F_C_DEFAULT / C0)) == pytest.approx(0.0, abs=1e-6)
    di = DEFAULT_CLUSTERS["DI"]
    ratio = gscm.path_gain(di, d, kind="DI", initial_phase=1.0) / gscm.path_gain(di, d, kind="DI")
    assert np.angle(ratio) == pytest.approx(1.0)


@given(st.floats(0.1, 2000), st.floats(0.1, 2000), st.sampled_from(["LOS", "SD", "MD", "DI"]))
def test_gain_monotone_in_distance(d1, d2, kind):
    lo, hi = sorted((d1, d2))
    p = DEFAULT_CLUSTERS[kind]
    assert abs(gscm.path_gain(p, hi)) <= abs(gscm.path_gain(p, lo)) * (1 + 1e-12)


def test_fading_autocorrelation_at_coherence_distance():
    d_c = 5.0
    travel = np.tile(np.linspace(0, 10 * d_c, 101), (10_000, 1))
    s = gscm.fading_process(travel, 3.0, d_c, np.random.default_rng(7))
    lag = 10  # 10 steps of 0.5 m = d_c
    a, b = s[:, 40], s[:, 40 + lag]
    r = np.mean(a * b) / np.sqrt(np.mean(a * a) * np.mean(b * b))
    assert abs(r - np.exp(-1)) <= 0.15
    assert s.std() == pytest.approx(3.0, rel=0.05)


def test_fading_off_when_sigma_zero():
    assert np.all(gscm.fading_process(np.arange(5.0)[None], 0.0, 1.0, np.random.default_rng(0)) == 0)


# --- reflection point ----------------------------------------------------------


def test_front_case():
    x, olos = gscm.select_reflection_point([20, 5], [30, -5], pose())
    assert x == 7.0 and not olos


def test_back_case():
    x, olos = gscm.select_reflection_point([-20, 5], [-30, -5], pose())
    assert x == -7.0 and not olos


def test_crossing_case():
    x, olos = gscm.select_reflection_point([20, 0.3], [-20, -0.2], pose())
    assert x == 0.0 and olos


def test_state_angles_and_alpha():
    st_ = gscm.large_vehicle_state([60, 0.1], [-40, -0.1], pose())
    assert st_.case == "otherwise" and st_.olos
    assert abs(st_.theta_tx_front) <= np.pi / 2 and abs(st_.theta_rx_back) >= np.pi / 2
    assert st_.alpha_bus == pytest.approx(0.008 * np.hypot(100, 0.2))


def test_degenerate_pose():
    with pytest.raises(ValidationError):
        gscm.select_reflection_point([1, 1], [2, 2], ((0, 0), (0, 0), 14, 2.5))


@given(st.floats(-60, 60), st.floats(-20, 20), st.floats(-60, 60), st.floats(-20, 20), st.floats(0, 2 * np.pi))
def test_cases_exclusive_and_angle_consistent(x1, y1, x2, y2, ang):
    p = pose(heading=(np.cos(ang), np.sin(ang)))
    tx, rx = np.array([[x1, y1]]), np.array([[x2, y2]])
    x_md, case, _ = gscm.reflection_cases(tx, rx, p)
    h = p.heading
    front = [abs(gscm._angle(q - p.front_mid, h)[0]) <= np.pi / 2 for q in (tx, rx)]
    back = [abs(gscm._angle(q - p.back_mid, h)[0]) >= np.pi / 2 for q in (tx, rx)]
    fired = [all(front), all(back)]
    assert sum(fired) <= 1
    expected = 1 if fired[0] else (-1 if fired[1] else 0)
    # angles at exactly pi/2 are ill-conditioned in floating point
    local = p.to_local(np.vstack([tx, rx]))[:, 0]
    if np.min(np.abs(np.abs(local) - 7.0)) > 1e-9:
        assert case[0] == expected and x_md[0] == expected * 7.0


# --- large-vehicle reflection gains ------------------------------------------------


@pytest.mark.parametrize(
    "tx,rx,offset",
    [(([-30, 5]), ([-40, -5]), 12.0), (([30, 5]), ([40, -5]), 7.0), (([0, 10]), ([3, -10]), None)],
)
def test_bus_reflection_offsets(tx, rx, offset):
    p = pose()
    paths = gscm.large_vehicle_paths(tx, rx, (p, 7.0, 12.0), MD)
    if offset is None:  # blocked
        assert paths == []
        return
    (path,) = paths
    x_md = 7.0 if offset == 7.0 else -7.0
    point = np.array([x_md, 0])
    d = np.hypot(*(point - tx)) + np.hypot(*(point - rx))
    assert path.delay == pytest.approx(d / C0)
    assert 20 * np.log10(abs(path.gain)) == pytest.approx(gscm.path_power_db(MD, d) + offset)


def test_van_back_offset():
    p = pose(length=5, width=2)
    (path,) = gscm.large_vehicle_paths([-10, 3], [-20, -3], (p, 0.0, 4.0), MD)
    d = np.hypot(-7.5, 3) + np.hypot(-17.5, -3)
    assert 20 * np.log10(abs(path.gain)) == pytest.approx(gscm.path_power_db(MD, d) + 4.0)


def test_no_reflection_offset_in_otherwise_case():
    p = pose()
    (path,) = gscm.large_vehicle_paths([0, 10], [3, 20], (p, 7.0, 12.0), MD)
    d = np.hypot(0, 10) + np.hypot(3, 20)
    assert 20 * np.log10(abs(path.gain)) == pytest.approx(gscm.path_power_db(MD, d))


# --- obstruction ---------------------------------------------------------------------


def test_alpha_for_long_crossing():
    p = pose()
    loss, alpha, hit = gscm.obstruction_loss_db(np.array([[50.0, 0.2]]), np.array([[-50.0, -0.2]]), p,
                                                PROFILE_PRESETS["bus_default"])
    assert hit[0]
    assert alpha[0] == pytest.approx(0.008 * np.hypot(100, 0.4))
    # crossing exactly along 100 m gives 0.8
    _, alpha, _ = gscm.obstruction_loss_db(np.array([[50.0, 0.0]]), np.array([[-50.0, 0.0]]), p,
                                           PROFILE_PRESETS["bus_default"])
    assert alpha[0] == pytest.approx(0.8)


def test_side_crossing_has_no_alpha_and_front_loss():
    p = pose()
    # perpendicular crossing right at the front face, u = 0
    loss, alpha, hit = gscm.obstruction_loss_db(np.array([[7.0 - 1e-9, -10.0]]), np.array([[7.0 - 1e-9, 10.0]]), p,
                                                PROFILE_PRESETS["bus_default"])
    assert hit[0] and alpha[0] == 0.0
    assert loss[0] == pytest.approx(8.6, abs=1e-6)
    loss, _, _ = gscm.obstruction_loss_db(np.array([[0.0, -10.0]]), np.array([[0.0, 10.0]]), p,
                                          PROFILE_PRESETS["bus_default"])
    assert loss[0] == pytest.approx(18.6)


def test_obstruct_los_unchanged_without_intersection():
    los = gscm.Path("LOS", 1e-7, 0.01 + 0.02j, "los")
    out = gscm.obstruct_los(los, [0, 10], [30, 10], pose(), PROFILE_PRESETS["bus_default"])
    assert out is los


def test_obstruct_los_applies_profile_and_alpha():
    los = gscm.Path("LOS", 1e-7, 0.01 + 0.0j, "los")
    tx, rx = [20.0, 0.0], [-20.0, 0.0]
    out = gscm.obstruct_los(los, tx, rx, pose(), PROFILE_PRESETS["bus_default"])
    assert out.olos
    extra = -20 * np.log10(abs(out.gain) / 0.01)
    # line along the axis: chord midpoint at the centre, u = 0.5
    assert extra == pytest.approx(18.6 + 10 * 0.008 * 40 * np.log10(40))
    assert extra >= 0


def test_vegetation_loss():
    f = Foliage(np.array([[0, -5], [10, -5], [10, 5], [0, 5]], float), 1.0)
    loss = gscm.vegetation_loss_db([[-5, 0], [-5, 20]], [[15, 0], [15, 20]], [f])
    np.testing.assert_allclose(loss, [10.0, 0.0])


# --- path enumeration ------------------------------------------------------------------


def test_empty_geometry_single_los():
    s = two_nodes()
    ps = gscm.enumerate_paths(s, (1, 2), 1.0, seed=0)
    assert len(ps) == 1
    (p,) = ps.paths
    assert p.kind == "LOS" and p.delay == pytest.approx(40.0 / C0)


def test_sd_site_delay():
    s = two_nodes(geometry={"sd_sites": [[21, 30]]})
    ps = gscm.enumerate_paths(s, (1, 2), 1.0, seed=0)
    (sd,) = ps.of_kind("SD")
    r = np.hypot(20, 30)
    assert sd.delay == pytest.approx(2 * r / C0)
    assert sd.delay >= ps.of_kind("LOS")[0].delay


def test_reciprocity():
    s = load_scenario(fixture_path("overtaking"))
    t = np.linspace(2, 3, 7)
    a = gscm.trace_link(s, (1, 3), t, seed=5)
    b = gscm.trace_link(s, (3, 1), t, seed=5)
    np.testing.assert_allclose(a.delays, b.delays)
    np.testing.assert_allclose(np.abs(a.gains), np.abs(b.gains))


def test_out_of_span():
    s = two_nodes()
    with pytest.raises(ValidationError):
        gscm.enumerate_paths(s, (1, 2), 11.0, seed=0)
    with pytest.raises(ValidationError):
        gscm.enumerate_paths(s, (1, 9), 1.0, seed=0)


def test_overtaking_olos_with_back_reflection():
    s = load_scenario(fixture_path("overtaking"))
    t = 7.5
    ps = gscm.enumerate_paths(s, (1, 3), t, seed=1)
    (los,) = ps.of_kind("LOS")
    assert los.olos
    track = gscm.trace_link(s, (1, 3), [t], seed=1)
    assert track.los_extra_db[0] >= 8.6
    # the blocking bus contributes no reflection; the van ahead reflects off its back
    md = {p.source_id: p for p in ps.of_kind("MD")}
    assert "bus" not in md
    assert track.md_case["van"][0] == -1 and "van" in md
    # geometric oracle: both antennas behind the van's back face
    van = s.vehicle("van").pose(t)
    for node in (1, 3):
        local = van.to_local(s.nodes[node].antenna_position(t))
        assert local[0, 0] <= -van.length / 2


def test_blocked_md_path_is_inactive_but_present():
    s = load_scenario(fixture_path("overtaking"))
    track = gscm.trace_link(s, (1, 3), [7.5], seed=1)
    j = track.sources.index("bus")
    assert track.gains[0, j] == 0
    assert track.delays[0, j] == pytest.approx(track.delays[0, 0])
