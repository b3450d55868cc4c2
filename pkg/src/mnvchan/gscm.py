"""Path enumeration and path gains for the geometry-based channel model.

Per link, the model produces a LOS path (optionally attenuated by foliage and
by obstructing vehicles), one first-order reflection per static discrete site,
one reflection per other vehicle and one path per selected diffuse scatterer.

Gains follow a dB-domain law around a power-law mean,

    P_dB = G0 - 10 * n_p * log10(d / d_ref) + s(x),

with ``d`` the total travelled distance of the path, ``d_ref = 1 m`` and
``s(x)`` a zero-mean Gaussian process over travelled distance with
exponential autocorrelation. The carrier phase is ``-2 pi d / lambda``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import shapely
from scipy.constants import c as C0

from . import kernels, rng
from .errors import ValidationError
from .params import KINDS, ObstructionProfile, ScattererTypeParams
from .scenario import DiffuseScatterers, Scenario, Vehicle, VehiclePose, place_diffuse_scatterers, select_relevant_diffuse

D_REF = 1.0
ALPHA_PER_M = 0.008
F_C_DEFAULT = 5.9e9


@dataclass(frozen=True)
class Path:
    kind: str
    delay: float
    gain: complex
    source_id: str
    olos: bool = False


@dataclass(frozen=True)
class PathSet:
    t: float
    link: tuple
    paths: tuple

    def __len__(self):
        return len(self.paths)

    def of_kind(self, kind):
        return [p for p in self.paths if p.kind == kind]


@dataclass(frozen=True)
class LargeVehicleState:
    x_md: float
    case: str
    olos: bool
    theta_tx_front: float
    theta_rx_front: float
    theta_tx_back: float
    theta_rx_back: float
    d_los: float
    alpha_bus: float


# ---------------------------------------------------------------------------
# Gains and fading
# ---------------------------------------------------------------------------


def path_power_db(params: ScattererTypeParams, d, fading_db=0.0, exponent_increment=0.0):
    d = np.maximum(np.asarray(d, dtype=float), D_REF)
    return params.G0 - 10.0 * (params.n_p + exponent_increment) * np.log10(d / D_REF) + fading_db


def path_gain(params: ScattererTypeParams, d, fading_db=0.0, kind="LOS", initial_phase=0.0,
              f_c=F_C_DEFAULT, extra_db=0.0, exponent_increment=0.0):
    """Complex amplitude of a path of total length ``d`` metres.

    ``extra_db`` is added to the dB power (gain offsets positive, losses
    negative). Diffuse paths add ``initial_phase``; other kinds ignore it.
    """
    p_db = path_power_db(params, d, fading_db, exponent_increment) + extra_db
    phase = -2.0 * np.pi * np.asarray(d, dtype=float) * f_c / C0
    if kind == "DI":
        phase = phase + initial_phase
    return 10.0 ** (p_db / 20.0) * np.exp(1j * phase)


def fading_process(travel, sigma_db: float, d_c: float, rng_or_innov):
    """Exponentially correlated Gaussian shadowing along cumulative travel.

    Parameters
    ----------
    travel : array (n_proc, n_steps)
        Cumulative travelled distance in metres, non-decreasing along axis 1.
    sigma_db : float
        Stationary standard deviation in dB.
    d_c : float
        Coherence distance; correlation between two samples is exp(-dx/d_c).
    rng_or_innov : numpy Generator or array of standard normals
    """
    travel = np.atleast_2d(np.asarray(travel, dtype=float))
    if sigma_db == 0.0:
        return np.zeros_like(travel)
    if isinstance(rng_or_innov, np.random.Generator):
        innov = rng_or_innov.standard_normal(travel.shape)
    else:
        innov = np.asarray(rng_or_innov, dtype=float).reshape(travel.shape)
    step = np.diff(travel, axis=1, prepend=travel[:, :1])
    rho = np.exp(-np.abs(step) / d_c)
    return sigma_db * kernels.ar1_filter(innov, rho)


# ---------------------------------------------------------------------------
# Large-vehicle geometry
# ---------------------------------------------------------------------------


def _check_pose(pose: VehiclePose):
    n = np.hypot(pose.heading[:, 0], pose.heading[:, 1])
    if np.any(~np.isfinite(n)) or np.any(n < 1e-12):
        raise ValidationError("degenerate vehicle pose: zero-length heading")


def _as_pose(vehicle_pose, t=None) -> VehiclePose:
    if isinstance(vehicle_pose, VehiclePose):
        return vehicle_pose
    if isinstance(vehicle_pose, Vehicle):
        return vehicle_pose.pose(t)
    center, heading, length, width = vehicle_pose
    h = np.atleast_2d(np.asarray(heading, dtype=float))
    norm = np.hypot(h[:, 0], h[:, 1])
    if np.any(norm < 1e-12):
        raise ValidationError("degenerate vehicle pose: zero-length heading")
    return VehiclePose(np.atleast_2d(np.asarray(center, dtype=float)), h / norm[:, None], float(length), float(width))


def reflection_cases(tx, rx, pose: VehiclePose):
    """Vectorised reflection-point case selection.

    Returns ``(x_md, case, olos)`` arrays where ``case`` is 1 (front),
    -1 (back) or 0 (otherwise).
    """
    _check_pose(pose)
    tl = pose.to_local(tx)
    rl = pose.to_local(rx)
    half = 0.5 * pose.length
    # |theta_front| <= pi/2  <=>  point is not behind the front face plane
    front = (tl[:, 0] - half >= 0) & (rl[:, 0] - half >= 0)
    back = (tl[:, 0] + half <= 0) & (rl[:, 0] + half <= 0)
    case = np.where(front, 1, np.where(back, -1, 0))
    x_md = case * half
    olos = segment_box_hits(tl, rl, pose.length, pose.width)["hit"]
    return x_md.astype(float), case, olos


def segment_box_hits(a, b, length, width):
    """Intersections of segments a->b (vehicle frame) with the footprint box.

    Returns a dict with ``hit`` (chord of positive length), ``s0``/``s1``
    (chord parameters), ``front``/``back`` (face crossed) and ``x_axis``
    (axial coordinate where the segment's line meets the mid-axis, clamped
    to the vehicle; chord midpoint when parallel to the axis).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = b - a
    hl, hw = 0.5 * length, 0.5 * width
    s0 = np.zeros(len(a))
    s1 = np.ones(len(a))
    for k, half in ((0, hl), (1, hw)):
        dk = d[:, k]
        ak = a[:, k]
        with np.errstate(divide="ignore", invalid="ignore"):
            lo = (-half - ak) / dk
            hi = (half - ak) / dk
        par = dk == 0
        lo_, hi_ = np.minimum(lo, hi), np.maximum(lo, hi)
        inside = np.abs(ak) < half
        lo_ = np.where(par, np.where(inside, -np.inf, np.inf), lo_)
        hi_ = np.where(par, np.where(inside, np.inf, -np.inf), hi_)
        s0 = np.maximum(s0, lo_)
        s1 = np.minimum(s1, hi_)
    hit = s1 - s0 > 1e-12

    def crosses(face_x):
        ra = a[:, 0] - face_x
        rb = b[:, 0] - face_x
        straddle = ra * rb < 0
        with np.errstate(divide="ignore", invalid="ignore"):
            s = ra / (ra - rb)
            y = a[:, 1] + s * d[:, 1]
        return straddle & (np.abs(y) <= hw)

    front = crosses(hl)
    back = crosses(-hl)
    with np.errstate(divide="ignore", invalid="ignore"):
        s_ax = a[:, 1] / (a[:, 1] - b[:, 1])
        x_line = a[:, 0] + s_ax * d[:, 0]
        x_mid = a[:, 0] + 0.5 * (s0 + s1) * d[:, 0]
    x_axis = np.where(np.isfinite(x_line), x_line, x_mid)
    x_axis = np.clip(x_axis, -hl, hl)
    return {"hit": hit, "s0": s0, "s1": s1, "front": front, "back": back, "x_axis": x_axis}


def _angle(vec, heading):
    cross = heading[:, 0] * vec[:, 1] - heading[:, 1] * vec[:, 0]
    dot = np.sum(heading * vec, axis=1)
    return np.arctan2(cross, dot)


def large_vehicle_state(tx, rx, vehicle_pose, t=None) -> LargeVehicleState:
    pose = _as_pose(vehicle_pose, t)
    tx = np.atleast_2d(np.asarray(tx, dtype=float))
    rx = np.atleast_2d(np.asarray(rx, dtype=float))
    if np.allclose(tx, rx):
        raise ValidationError("tx and rx coincide")
    x_md, case, olos = reflection_cases(tx, rx, pose)
    hits = segment_box_hits(pose.to_local(tx), pose.to_local(rx), pose.length, pose.width)
    d_los = float(np.hypot(*(rx - tx)[0]))
    both = bool(hits["hit"][0] and hits["front"][0] and hits["back"][0])
    h = pose.heading
    return LargeVehicleState(
        x_md=float(x_md[0]),
        case={1: "front", -1: "back", 0: "otherwise"}[int(case[0])],
        olos=bool(olos[0]),
        theta_tx_front=float(_angle(tx - pose.front_mid, h)[0]),
        theta_rx_front=float(_angle(rx - pose.front_mid, h)[0]),
        theta_tx_back=float(_angle(tx - pose.back_mid, h)[0]),
        theta_rx_back=float(_angle(rx - pose.back_mid, h)[0]),
        d_los=d_los,
        alpha_bus=ALPHA_PER_M * d_los if both else 0.0,
    )


def select_reflection_point(tx, rx, vehicle_pose, t=None):
    """Reflection point on the vehicle mid-axis, and whether the LOS is blocked.

    Returns ``(x_md, olos)`` with ``x_md`` one of ``+l/2``, ``-l/2``, ``0``.
    """
    st = large_vehicle_state(tx, rx, vehicle_pose, t)
    return st.x_md, st.olos


def _md_geometry(tx, rx, pose: VehiclePose, front_gain_db, back_gain_db):
    x_md, case, olos = reflection_cases(tx, rx, pose)
    point = pose.center + x_md[:, None] * pose.heading
    d = np.hypot(*(point - tx).T) + np.hypot(*(rx - point).T)
    offset = np.where(case == 1, front_gain_db, np.where(case == -1, back_gain_db, 0.0))
    return d, offset, case, olos


def large_vehicle_paths(tx, rx, vehicle, params_md: ScattererTypeParams, t=None, fading_db=0.0,
                        f_c=F_C_DEFAULT, source_id=None):
    """Reflection path off a vehicle's mid-axis (empty list when the LOS is blocked)."""
    if isinstance(vehicle, Vehicle):
        pose = vehicle.pose(t)
        front, back, sid = vehicle.front_gain_db, vehicle.back_gain_db, vehicle.id
    else:
        pose, front, back = vehicle
        pose = _as_pose(pose)
        sid = "MD"
    tx = np.atleast_2d(np.asarray(tx, dtype=float))
    rx = np.atleast_2d(np.asarray(rx, dtype=float))
    d, offset, case, olos = _md_geometry(tx, rx, pose, front, back)
    if olos[0]:
        return []
    g = path_gain(params_md, d[0], fading_db, "MD", f_c=f_c, extra_db=offset[0])
    return [Path("MD", float(d[0] / C0), complex(g), source_id or sid)]


def obstruction_loss_db(tx, rx, pose: VehiclePose, profile: ObstructionProfile | None):
    """Extra LOS loss (dB) and path-loss exponent increment from one vehicle.

    Vectorised over the rows of ``tx``/``rx``/``pose``.
    """
    tl = pose.to_local(tx)
    rl = pose.to_local(rx)
    hits = segment_box_hits(tl, rl, pose.length, pose.width)
    hit = hits["hit"]
    loss = np.zeros(len(tl))
    alpha = np.zeros(len(tl))
    if profile is None:
        return loss, alpha, hit
    u = (0.5 * pose.length - hits["x_axis"]) / pose.length
    loss = np.where(hit, profile(u), 0.0)
    d_los = np.hypot(*(rx - tx).T)
    both = hit & hits["front"] & hits["back"]
    alpha = np.where(both, ALPHA_PER_M * d_los, 0.0)
    return loss, alpha, hit


def obstruct_los(los_path: Path, tx, rx, vehicle, profile: ObstructionProfile | None = None,
                 t=None, params_los: ScattererTypeParams | None = None) -> Path:
    """Apply a vehicle's obstruction profile and exponent increment to a LOS path."""
    if isinstance(vehicle, Vehicle):
        pose = vehicle.pose(t)
        profile = profile if profile is not None else vehicle.obstruction_profile
    else:
        pose = _as_pose(vehicle)
    tx = np.atleast_2d(np.asarray(tx, dtype=float))
    rx = np.atleast_2d(np.asarray(rx, dtype=float))
    loss, alpha, hit = obstruction_loss_db(tx, rx, pose, profile)
    if not hit[0]:
        return los_path
    d = max(float(np.hypot(*(rx - tx)[0])), D_REF)
    extra = loss[0] + 10.0 * alpha[0] * np.log10(d / D_REF)
    return Path(los_path.kind, los_path.delay, los_path.gain * 10.0 ** (-extra / 20.0), los_path.source_id, True)


def vegetation_loss_db(tx, rx, foliage) -> np.ndarray:
    """Loss along each tx->rx segment: crossing length x loss per metre."""
    tx = np.atleast_2d(np.asarray(tx, dtype=float))
    rx = np.atleast_2d(np.asarray(rx, dtype=float))
    total = np.zeros(len(tx))
    if not foliage:
        return total
    lines = shapely.linestrings(np.stack([tx, rx], axis=1))
    for f in foliage:
        poly = shapely.Polygon(f.polygon)
        if not poly.is_valid:
            poly = poly.buffer(0)
        shapely.prepare(poly)
        hit = shapely.intersects(lines, poly)
        if not np.any(hit):
            continue
        length = shapely.length(shapely.intersection(lines[hit], poly))
        total[hit] += length * f.loss_db_per_m
    return total


# ---------------------------------------------------------------------------
# Per-link path tracks over time
# ---------------------------------------------------------------------------


@dataclass
class LinkTrack:
    """Delays and complex gains of every path of one link over time.

    ``delays`` and ``gains`` have shape (n_times, n_paths). Inactive paths
    (a reflection off a vehicle that currently blocks the LOS) have zero gain.
    """

    link: tuple
    times: np.ndarray
    kinds: list
    sources: list
    delays: np.ndarray
    gains: np.ndarray
    los_olos: np.ndarray
    los_extra_db: np.ndarray
    md_case: dict = field(default_factory=dict)

    def path_set(self, i: int) -> PathSet:
        paths = []
        for j, (k, s) in enumerate(zip(self.kinds, self.sources)):
            g = self.gains[i, j]
            if k == "MD" and g == 0:
                continue
            paths.append(Path(k, float(self.delays[i, j]), complex(g), s, bool(k == "LOS" and self.los_olos[i])))
        return PathSet(float(self.times[i]), self.link, tuple(paths))


def _travel(*positions):
    total = 0.0
    for p in positions:
        step = np.hypot(*np.diff(p, axis=0).T)
        total = total + np.concatenate([[0.0], np.cumsum(step)])
    return total


def diffuse_population(scenario: Scenario, seed) -> DiffuseScatterers:
    di = scenario.scatterer_params["DI"]
    return place_diffuse_scatterers(scenario.geometry, di.chi, di.w, scenario.seed, phase_seed=seed)


def trace_link(scenario: Scenario, link, times, seed, f_c=F_C_DEFAULT, population=None) -> LinkTrack:
    """Track all paths of ``link = (a, b)`` at the instants ``times``.

    Fading streams are keyed by the unordered node pair, so ``(a, b)`` and
    ``(b, a)`` produce the same delays and gain magnitudes.
    """
    a, b = link
    nodes = scenario.nodes
    if a == b:
        raise ValidationError("link endpoints must differ")
    if a not in nodes or b not in nodes:
        raise ValidationError(f"link {link} references unknown nodes")
    times = np.atleast_1d(np.asarray(times, dtype=float))
    lo, hi = scenario.span
    if times.size and (times.min() < lo - 1e-9 or times.max() > hi + 1e-9):
        raise ValidationError(f"times outside scenario span [{lo}, {hi}]")
    P = scenario.scatterer_params
    key = (min(a, b), max(a, b))
    pa = nodes[a].antenna_position(times)
    pb = nodes[b].antenna_position(times)
    n_t = len(times)
    node_travel = _travel(pa, pb) if n_t > 1 else np.zeros(1)

    kinds, sources, delays, gains = [], [], [], []

    def fading(kind, sid, travel):
        prm = P[kind]
        if prm.mu_sigma == 0:
            return np.zeros(n_t)
        g = rng.stream(seed, "fading", key[0], key[1], kind, sid)
        return fading_process(travel[None, :], prm.mu_sigma, prm.coherence_distance, g)[0]

    # LOS with foliage and vehicle obstruction
    d_los = np.hypot(*(pb - pa).T)
    extra = vegetation_loss_db(pa, pb, scenario.geometry.foliage)
    alpha = np.zeros(n_t)
    olos = np.zeros(n_t, dtype=bool)
    others = [v for v in scenario.vehicles if not (v.role == "node" and v.node in (a, b))]
    poses = {v.id: v.pose(times) for v in others}
    for v in others:
        loss, inc, hit = obstruction_loss_db(pa, pb, poses[v.id], v.obstruction_profile)
        extra = extra + loss
        alpha = alpha + inc
        olos |= hit
    s_los = fading("LOS", "los", node_travel)
    kinds.append("LOS")
    sources.append("los")
    delays.append(d_los / C0)
    gains.append(path_gain(P["LOS"], d_los, s_los, "LOS", f_c=f_c, extra_db=-extra, exponent_increment=alpha))

    # static discrete sites
    for i, site in enumerate(scenario.geometry.sd_sites):
        d = np.hypot(*(pa - site).T) + np.hypot(*(pb - site).T)
        kinds.append("SD")
        sources.append(f"sd{i}")
        delays.append(d / C0)
        gains.append(path_gain(P["SD"], d, fading("SD", f"sd{i}", node_travel), "SD", f_c=f_c))

    # vehicles as mobile discrete scatterers
    md_case = {}
    for v in others:
        pose = poses[v.id]
        d, offset, case, blocked = _md_geometry(pa, pb, pose, v.front_gain_db, v.back_gain_db)
        travel = node_travel + (_travel(pose.center) if n_t > 1 else 0.0)
        g = path_gain(P["MD"], d, fading("MD", v.id, travel), "MD", f_c=f_c, extra_db=offset)
        g = np.where(blocked, 0.0, g)
        kinds.append("MD")
        sources.append(v.id)
        delays.append(np.where(blocked, d_los, d) / C0)
        gains.append(g)
        md_case[v.id] = case

    # diffuse scatterers
    pop = population if population is not None else diffuse_population(scenario, seed)
    sel = select_relevant_diffuse(pop, pa, pb, scenario.di_budget, scenario.tau_max)
    for pos, phase, idx in zip(sel.positions, sel.phases, sel.index):
        d = np.hypot(*(pa - pos).T) + np.hypot(*(pb - pos).T)
        kinds.append("DI")
        sources.append(f"di{idx}")
        delays.append(d / C0)
        gains.append(path_gain(P["DI"], d, 0.0, "DI", initial_phase=phase, f_c=f_c))

    return LinkTrack(
        link=(a, b),
        times=times,
        kinds=kinds,
        sources=sources,
        delays=np.stack(delays, axis=1),
        gains=np.stack([np.broadcast_to(g, (n_t,)) for g in gains], axis=1).astype(np.complex128),
        los_olos=olos,
        los_extra_db=extra,
        md_case=md_case,
    )


def enumerate_paths(scenario: Scenario, link, t: float, seed, f_c=F_C_DEFAULT) -> PathSet:
    """Paths of ``link`` at a single instant ``t``.

    Fading values are single draws from the stationary law; use
    :func:`trace_link` for time-continuous processes.
    """
    return trace_link(scenario, link, [t], seed, f_c=f_c).path_set(0)


__all__ = [
    "KINDS",
    "LargeVehicleState",
    "LinkTrack",
    "Path",
    "PathSet",
    "enumerate_paths",
    "fading_process",
    "large_vehicle_paths",
    "large_vehicle_state",
    "obstruct_los",
    "obstruction_loss_db",
    "path_gain",
    "path_power_db",
    "reflection_cases",
    "segment_box_hits",
    "select_reflection_point",
    "trace_link",
    "vegetation_loss_db",
]
