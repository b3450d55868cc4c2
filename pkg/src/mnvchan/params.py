"""Scatterer-type parameters and obstruction profiles with their presets."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError

KINDS = ("LOS", "SD", "MD", "DI")


@dataclass(frozen=True)
class ScattererTypeParams:
    """Path-loss and fading parameters of one propagation-path type.

    ``mu_sigma`` is used as the standard deviation (dB) of the large-scale
    fading process, ``mu_c``/``d_c_min`` set its coherence distance as
    ``max(mu_c, d_c_min)``. ``chi`` and ``w`` are the placement density and
    maximum displacement for stochastically placed scatterers.
    """

    G0: float
    n_p: float
    mu_sigma: float = 0.0
    mu_c: float = 1.0
    d_c_min: float = 1.0
    chi: float = 0.0
    w: float = 0.0

    def __post_init__(self):
        vals = [self.G0, self.n_p, self.mu_sigma, self.mu_c, self.d_c_min, self.chi, self.w]
        if not all(np.isfinite(vals)):
            raise ValidationError("scatterer parameters must be finite")
        if self.n_p < 0:
            raise ValidationError("path loss exponent must be >= 0")
        if self.mu_sigma < 0:
            raise ValidationError("mu_sigma must be >= 0")
        # Default LOS values have mu_c < d_c_min, so only positivity is enforced.
        if self.d_c_min <= 0 or self.mu_c <= 0:
            raise ValidationError("coherence distances must be > 0")
        if self.chi < 0 or self.w < 0:
            raise ValidationError("chi and w must be >= 0")

    @property
    def coherence_distance(self) -> float:
        return max(self.mu_c, self.d_c_min)


# Reference-distance parameters per path type. DI has no stochastic amplitude
# gain, its randomness is the per-scatterer initial phase.
DEFAULT_CLUSTERS = {
    "LOS": ScattererTypeParams(G0=-37.0, n_p=1.9, mu_sigma=1.0, mu_c=1.2, d_c_min=1.4),
    "SD": ScattererTypeParams(G0=-89.0, n_p=1.5, mu_sigma=3.1, mu_c=4.9, d_c_min=1.0, chi=0.3, w=0.3),
    "MD": ScattererTypeParams(G0=-97.0, n_p=3.6, mu_sigma=3.13, mu_c=5.4, d_c_min=1.1, chi=0.01, w=0.01),
    "DI": ScattererTypeParams(G0=-39.0, n_p=3.3, mu_sigma=0.0, chi=0.5, w=0.5),
}

PRESETS = {"paper_table5": DEFAULT_CLUSTERS}


def params_from_mapping(data: dict | None, preset: str = "paper_table5") -> dict:
    """Merge per-kind overrides onto a named preset."""
    data = dict(data or {})
    preset = data.pop("preset", preset)
    if preset not in PRESETS:
        raise ValidationError(f"unknown scatterer preset {preset!r}")
    out = dict(PRESETS[preset])
    for kind, over in data.items():
        if kind not in KINDS:
            continue
        if not isinstance(over, dict):
            raise ValidationError(f"scatterer_params.{kind} must be a mapping")
        unknown = set(over) - set(ScattererTypeParams.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown fields in scatterer_params.{kind}: {sorted(unknown)}")
        out[kind] = replace(out[kind], **{k: float(v) for k, v in over.items()})
    return out


@dataclass(frozen=True)
class ObstructionProfile:
    """Extra loss (dB) versus normalized axial position, 0 = front, 1 = back."""

    u: np.ndarray
    loss_db: np.ndarray
    name: str = ""

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        loss = np.asarray(self.loss_db, dtype=float)
        if u.ndim != 1 or u.shape != loss.shape or u.size < 2:
            raise ValidationError("obstruction profile needs >= 2 (u, loss) samples")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(loss))):
            raise ValidationError("obstruction profile values must be finite")
        if np.any(np.diff(u) <= 0):
            raise ValidationError("obstruction profile u must be strictly increasing")
        if u[0] > 0 or u[-1] < 1:
            raise ValidationError("obstruction profile must cover u in [0, 1]")
        if np.any(loss < 0):
            raise ValidationError("obstruction profile losses must be >= 0")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "loss_db", loss)

    def __call__(self, u):
        return np.interp(np.clip(u, 0.0, 1.0), self.u, self.loss_db)


# 8.6 dB as the glass front enters the link, rising by 20 dB toward the
# metallic rear; the van figure is the peak loss observed for the van.
PROFILE_PRESETS = {
    "bus_default": ObstructionProfile(np.array([0.0, 1.0]), np.array([8.6, 28.6]), "bus_default"),
    "van_default": ObstructionProfile(np.array([0.0, 1.0]), np.array([7.5, 7.5]), "van_default"),
}


def load_profile_csv(path) -> ObstructionProfile:
    """Read a ``u,loss_db`` CSV (header optional)."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    except OSError as exc:
        raise FormatError(f"cannot read obstruction profile {path}: {exc}") from exc
    if rows and rows[0][0].strip().lower() == "u":
        rows = rows[1:]
    try:
        arr = np.array([[float(a), float(b)] for a, b, *_ in rows])
    except ValueError as exc:
        raise FormatError(f"{path}: malformed profile row ({exc})") from exc
    if arr.size == 0:
        raise FormatError(f"{path}: empty obstruction profile")
    return ObstructionProfile(arr[:, 0], arr[:, 1], path.stem)


def resolve_profile(ref, base_dir=None) -> ObstructionProfile | None:
    if ref is None:
        return None
    if ref in PROFILE_PRESETS:
        return PROFILE_PRESETS[ref]
    path = Path(ref)
    if not path.is_absolute() and base_dir is not None:
        path = Path(base_dir) / path
    if not path.exists():
        raise ValidationError(f"unknown obstruction profile {ref!r}")
    return load_profile_csv(path)
