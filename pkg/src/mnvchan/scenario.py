"""Simulation world: static geometry, vehicles with trajectories, scatterers.

Scenario files are YAML documents with a ``schema: 1`` field. Coordinates are
metres in a local planar frame unless ``frame: geodetic`` is given, in which
case every ``[x, y]`` pair is read as ``[lon, lat]`` and projected about
``origin``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from scipy.constants import c as C0
from scipy.interpolate import CubicSpline

from . import rng
from .errors import FormatError, ValidationError
from .params import ObstructionProfile, ScattererTypeParams, params_from_mapping, resolve_profile

SCHEMA_VERSION = 1
EARTH_RADIUS = 6371008.8
_SPAN_EPS = 1e-9


def geodetic_to_local(lat, lon, origin):
    """Equirectangular projection about ``origin = (lat0, lon0)`` in degrees."""
    lat0, lon0 = origin
    x = EARTH_RADIUS * np.cos(np.radians(lat0)) * np.radians(np.asarray(lon, float) - lon0)
    y = EARTH_RADIUS * np.radians(np.asarray(lat, float) - lat0)
    return x, y


@dataclass(frozen=True)
class Foliage:
    polygon: np.ndarray
    loss_db_per_m: float = 1.0
    density: str = "medium"


@dataclass(frozen=True)
class Geometry:
    walls: tuple = ()
    foliage: tuple = ()
    sd_sites: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    origin: tuple | None = None

    def __post_init__(self):
        walls = tuple(np.asarray(w, dtype=float).reshape(-1, 2) for w in self.walls)
        for i, w in enumerate(walls):
            if len(w) < 2:
                raise ValidationError(f"wall {i} needs at least 2 vertices")
            if not np.all(np.isfinite(w)):
                raise ValidationError(f"wall {i} has non-finite coordinates")
        foliage = tuple(
            f if isinstance(f, Foliage) else Foliage(np.asarray(f, dtype=float)) for f in self.foliage
        )
        for i, f in enumerate(foliage):
            poly = np.asarray(f.polygon, dtype=float).reshape(-1, 2)
            if len(poly) < 3 or not np.all(np.isfinite(poly)):
                raise ValidationError(f"foliage polygon {i} needs >= 3 finite vertices")
            if f.loss_db_per_m < 0:
                raise ValidationError(f"foliage polygon {i} has negative loss")
        sd = np.asarray(self.sd_sites, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(sd)):
            raise ValidationError("sd_sites must be finite")
        object.__setattr__(self, "walls", walls)
        object.__setattr__(self, "foliage", foliage)
        object.__setattr__(self, "sd_sites", sd)

    @property
    def wall_lengths(self) -> np.ndarray:
        return np.array([np.sum(np.hypot(*np.diff(w, axis=0).T)) for w in self.walls])


@dataclass(frozen=True)
class Trajectory:
    """Waypoints ``(t, x, y)`` of a vehicle centre, natural cubic spline in between."""

    times: np.ndarray
    xy: np.ndarray
    antenna_height: float = 1.5
    antenna_offset: tuple = (0.0, 0.0)
    _spline: CubicSpline = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).ravel()
        xy = np.asarray(self.xy, dtype=float).reshape(-1, 2)
        if t.size < 2 or t.size != len(xy):
            raise ValidationError("trajectory needs >= 2 samples of (t, x, y)")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(xy))):
            raise ValidationError("trajectory samples must be finite")
        if np.any(np.diff(t) <= 0):
            raise ValidationError("non-increasing time in trajectory samples")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "xy", xy)
        object.__setattr__(self, "antenna_offset", tuple(float(v) for v in self.antenna_offset))
        object.__setattr__(self, "_spline", CubicSpline(t, xy, axis=0, bc_type="natural"))

    @property
    def span(self) -> tuple:
        return float(self.times[0]), float(self.times[-1])

    def evaluate(self, t):
        """Positions and velocities at ``t`` (array), shapes (n, 2) each."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        lo, hi = self.span
        if np.any(t < lo - _SPAN_EPS) or np.any(t > hi + _SPAN_EPS):
            raise ValidationError(f"time outside trajectory span [{lo}, {hi}]")
        t = np.clip(t, lo, hi)
        return self._spline(t), self._spline(t, 1)


def interpolate_position(traj: Trajectory, t: float):
    """Return ``(x, y, vx, vy)`` of the spline at time ``t``."""
    pos, vel = traj.evaluate(t)
    return float(pos[0, 0]), float(pos[0, 1]), float(vel[0, 0]), float(vel[0, 1])


@dataclass(frozen=True)
class VehiclePose:
    """Rectangle footprints at one or more instants.

    ``center`` and ``heading`` have shape (n, 2); ``heading`` is a unit vector.
    """

    center: np.ndarray
    heading: np.ndarray
    length: float
    width: float

    @property
    def left(self) -> np.ndarray:
        return np.stack([-self.heading[:, 1], self.heading[:, 0]], axis=1)

    @property
    def front_mid(self) -> np.ndarray:
        return self.center + 0.5 * self.length * self.heading

    @property
    def back_mid(self) -> np.ndarray:
        return self.center - 0.5 * self.length * self.heading

    def to_local(self, pts) -> np.ndarray:
        """Express points (n, 2) in vehicle coordinates (axial, lateral)."""
        d = np.asarray(pts, dtype=float) - self.center
        return np.stack([np.sum(d * self.heading, axis=1), np.sum(d * self.left, axis=1)], axis=1)


@dataclass(frozen=True)
class Vehicle:
    id: str
    trajectory: Trajectory
    length: float
    width: float
    role: str = "node"
    node: int | None = None
    back_gain_db: float = 0.0
    front_gain_db: float = 0.0
    obstruction_profile: ObstructionProfile | None = None
    heading_deg: float | None = None

    def __post_init__(self):
        if not self.length > 0 or not self.width > 0:
            raise ValidationError(f"vehicle {self.id}: length and width must be > 0")
        if self.role not in ("node", "mobile_scatterer"):
            raise ValidationError(f"vehicle {self.id}: unknown role {self.role!r}")
        if self.role == "node" and self.node is None:
            raise ValidationError(f"vehicle {self.id}: node vehicles need a node number")

    def pose(self, t) -> VehiclePose:
        pos, vel = self.trajectory.evaluate(t)
        speed = np.hypot(vel[:, 0], vel[:, 1])
        heading = np.zeros_like(vel)
        moving = speed > 1e-6
        heading[moving] = vel[moving] / speed[moving, None]
        if not np.all(moving):
            if self.heading_deg is None:
                raise ValidationError(f"vehicle {self.id}: zero-length heading (stationary, no heading_deg)")
            h = np.radians(self.heading_deg)
            heading[~moving] = (np.cos(h), np.sin(h))
        return VehiclePose(pos, heading, self.length, self.width)

    def antenna_position(self, t) -> np.ndarray:
        dx, dy = self.trajectory.antenna_offset
        if dx == 0.0 and dy == 0.0:
            return self.trajectory.evaluate(t)[0]
        pose = self.pose(t)
        return pose.center + dx * pose.heading + dy * pose.left


@dataclass(frozen=True)
class Scenario:
    geometry: Geometry
    vehicles: tuple
    scatterer_params: dict
    di_budget: int = 100
    tau_max: float = 4e-6
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "vehicles", tuple(self.vehicles))
        ids = [v.id for v in self.vehicles]
        if len(set(ids)) != len(ids):
            raise ValidationError("vehicle ids must be unique")
        nodes = [v.node for v in self.vehicles if v.role == "node"]
        if len(set(nodes)) != len(nodes):
            raise ValidationError("node numbers must be unique")
        if self.di_budget < 0:
            raise ValidationError("di_budget must be >= 0")
        if not self.tau_max > 0:
            raise ValidationError("tau_max must be > 0")
        missing = {"LOS", "SD", "MD", "DI"} - set(self.scatterer_params)
        if missing:
            raise ValidationError(f"scatterer_params missing {sorted(missing)}")

    @property
    def nodes(self) -> dict:
        return {v.node: v for v in self.vehicles if v.role == "node"}

    @property
    def span(self) -> tuple:
        lo = max(v.trajectory.span[0] for v in self.vehicles)
        hi = min(v.trajectory.span[1] for v in self.vehicles)
        return lo, hi

    def vehicle(self, vid: str) -> Vehicle:
        for v in self.vehicles:
            if v.id == vid:
                return v
        raise KeyError(vid)


# ---------------------------------------------------------------------------
# Diffuse scatterers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiffuseScatterers:
    positions: np.ndarray
    phases: np.ndarray
    index: np.ndarray

    def __len__(self):
        return len(self.positions)

    def subset(self, idx) -> "DiffuseScatterers":
        idx = np.asarray(idx, dtype=np.int64)
        return DiffuseScatterers(self.positions[idx], self.phases[idx], self.index[idx])


def place_diffuse_scatterers(geometry: Geometry, chi: float, w: float, seed, phase_seed=None) -> DiffuseScatterers:
    """Scatter ``round(chi * len)`` points along each wall.

    Points are uniform in arc length and pushed off the wall along its
    left-hand normal by a uniform draw in ``[0, w]``. Initial phases are
    uniform in ``[0, 2 pi)`` and come from ``phase_seed`` when given, so an
    ensemble can vary phases while keeping positions.
    """
    if chi < 0 or w < 0:
        raise ValidationError("chi and w must be >= 0")
    pos_rng = rng.stream(seed, "di-positions")
    pts = []
    for wall in geometry.walls:
        seg = np.diff(wall, axis=0)
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        total = seg_len.sum()
        n = int(round(chi * total))
        if n == 0 or total == 0:
            continue
        s = pos_rng.uniform(0.0, total, size=n)
        off = pos_rng.uniform(0.0, w, size=n)
        cum = np.concatenate([[0.0], np.cumsum(seg_len)])
        k = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
        frac = (s - cum[k]) / np.where(seg_len[k] > 0, seg_len[k], 1.0)
        base = wall[k] + frac[:, None] * seg[k]
        unit = seg[k] / np.where(seg_len[k] > 0, seg_len[k], 1.0)[:, None]
        normal = np.stack([-unit[:, 1], unit[:, 0]], axis=1)
        pts.append(base + off[:, None] * normal)
    positions = np.concatenate(pts) if pts else np.zeros((0, 2))
    ph_rng = rng.stream(seed if phase_seed is None else phase_seed, "di-phases")
    phases = ph_rng.uniform(0.0, 2 * np.pi, size=len(positions))
    return DiffuseScatterers(positions, phases, np.arange(len(positions)))


def select_relevant_diffuse(scatterers: DiffuseScatterers, tx, rx, budget: int, tau_max: float) -> DiffuseScatterers:
    """Keep at most ``budget`` scatterers inside the ``tau_max`` delay ellipse.

    ``tx`` and ``rx`` may be single points or matched arrays of positions
    over time; a scatterer is then ranked by its smallest two-hop distance
    over those positions. Ties are broken by original index.
    """
    if budget < 0:
        raise ValidationError("budget must be >= 0")
    tx = np.atleast_2d(np.asarray(tx, dtype=float))
    rx = np.atleast_2d(np.asarray(rx, dtype=float))
    if len(scatterers) == 0 or budget == 0:
        return scatterers.subset(np.zeros(0, dtype=np.int64))
    p = scatterers.positions
    d = np.full(len(p), np.inf)
    for a, b in zip(tx, rx):
        d = np.minimum(d, np.hypot(*(p - a).T) + np.hypot(*(p - b).T))
    keep = np.nonzero(d / C0 <= tau_max)[0]
    order = np.lexsort((scatterers.index[keep], d[keep]))
    return scatterers.subset(keep[order][:budget])


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


def _points(raw, what, frame, origin):
    arr = np.asarray(raw, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValidationError(f"{what}: expected a list of [x, y] pairs")
    if frame == "geodetic":
        x, y = geodetic_to_local(arr[:, 1], arr[:, 0], origin)
        arr = np.stack([x, y], axis=1)
    return arr


def parse_scenario(doc: dict, base_dir=None) -> Scenario:
    if not isinstance(doc, dict):
        raise FormatError("scenario document must be a mapping")
    if doc.get("schema") != SCHEMA_VERSION:
        raise ValidationError(f"unsupported scenario schema {doc.get('schema')!r} (expected {SCHEMA_VERSION})")
    frame = doc.get("frame", "local")
    if frame not in ("local", "geodetic"):
        raise ValidationError(f"unknown frame {frame!r}")
    origin = tuple(doc["origin"]) if doc.get("origin") is not None else None
    if frame == "geodetic" and origin is None:
        raise ValidationError("geodetic frame needs an origin")
    if "geometry" not in doc or doc["geometry"] is None:
        raise ValidationError("scenario has no geometry section")
    g = doc["geometry"]
    try:
        walls = [_points(w, f"wall {i}", frame, origin) for i, w in enumerate(g.get("walls") or [])]
        foliage = [
            Foliage(
                _points(f["polygon"], f"foliage {i}", frame, origin),
                float(f.get("loss_db_per_m", 1.0)),
                str(f.get("density", "medium")),
            )
            for i, f in enumerate(g.get("foliage") or [])
        ]
        sd = g.get("sd_sites") or []
        sd = _points(sd, "sd_sites", frame, origin) if len(sd) else np.zeros((0, 2))
    except (TypeError, KeyError) as exc:
        raise ValidationError(f"malformed geometry: {exc}") from exc
    geometry = Geometry(walls, foliage, sd, origin)

    vehicles = []
    for i, v in enumerate(doc.get("vehicles") or []):
        try:
            wp = np.asarray(v["waypoints"], dtype=float)
            if wp.ndim != 2 or wp.shape[1] != 3:
                raise ValidationError(f"vehicle {v.get('id', i)}: waypoints must be [t, x, y] triples")
            xy = _points(wp[:, 1:], f"vehicle {v.get('id', i)}", frame, origin)
            ant = v.get("antenna") or {}
            traj = Trajectory(
                wp[:, 0],
                xy,
                float(ant.get("height", 1.5)),
                tuple(ant.get("offset", (0.0, 0.0))),
            )
            vehicles.append(
                Vehicle(
                    id=str(v["id"]),
                    trajectory=traj,
                    length=float(v["length"]),
                    width=float(v["width"]),
                    role=v.get("role", "node"),
                    node=int(v["node"]) if v.get("node") is not None else None,
                    back_gain_db=float(v.get("back_gain_db", 0.0)),
                    front_gain_db=float(v.get("front_gain_db", 0.0)),
                    obstruction_profile=resolve_profile(v.get("obstruction_profile"), base_dir),
                    heading_deg=float(v["heading_deg"]) if v.get("heading_deg") is not None else None,
                )
            )
        except KeyError as exc:
            raise ValidationError(f"vehicle {i}: missing field {exc}") from exc
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"vehicle {i}: {exc}") from exc

    sp = dict(doc.get("scatterer_params") or {})
    budget = int(sp.pop("di_budget", 100))
    tau_max = float(sp.pop("tau_max", 4e-6))
    params = params_from_mapping(sp)
    return Scenario(geometry, tuple(vehicles), params, budget, tau_max, int(doc.get("seed", 0)), str(doc.get("name", "")))


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FormatError(f"cannot read scenario {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return parse_scenario(doc, base_dir=path.parent)


DATA_DIR = Path(__file__).parent / "data"


def fixture_path(name: str) -> Path:
    """Path of a bundled scenario (``overtaking`` or ``intersection``)."""
    return DATA_DIR / f"{name}.yaml"
