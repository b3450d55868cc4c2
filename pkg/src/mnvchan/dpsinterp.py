"""Resampling of channel tensors with a two-dimensional DPS subspace.

Sounding and emulation grids are both embedded in an intermediate grid whose
spacings ``T_i``/``F_i`` are the greatest common divisors of the sounding and
emulation spacings. On that grid the channel of one block is modelled as

    g[m, k] = sum_{l, j} psi[l, j] u_l[m] v_j[k],

with ``u`` the DPS sequences of length ``M_i`` concentrated on the Doppler
band ``[-nu_max, nu_max]`` and ``v`` those of length ``N_i`` concentrated on
the delay band ``[-theta_max, 0]`` (a delay ``tau`` turns into the normalized
frequency ``-F_i tau``). The coefficients are a least-squares fit to the
sounding samples and the block is re-evaluated on the emulation samples.

Because the sounding samples form a Cartesian sub-grid, the normal matrix
factorizes into a Kronecker product of a time and a frequency Gram matrix,
so the fit reduces to two small pseudo-inverses.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.constants import c as C0
from scipy.linalg import eigh
from scipy.signal.windows import dpss

from .errors import NumericalError, ValidationError

TIME_QUANTUM = 1e-9
FREQ_QUANTUM = 1.0


def _on_lattice(x: float, quantum: float, what: str) -> int:
    v = x / quantum
    r = round(v)
    if r <= 0 or abs(v - r) > 1e-6 * max(1.0, abs(v)):
        raise ValidationError(f"{what}={x} is not a positive multiple of the {quantum} quantum")
    return int(r)


@dataclass(frozen=True)
class GridPlan:
    T_s: float
    T_e: float
    T_i: float
    F_s: float
    F_e: float
    F_i: float
    r_t_s: int
    r_t_e: int
    r_f_s: int
    r_f_e: int
    M_s: int
    N_s: int
    M_i: int
    N_i: int
    M_e: int
    N_e: int
    delta: int

    @property
    def M_o(self) -> int:
        """Sounding samples per block, overlap included."""
        return self.M_s + 2 * self.delta

    def obs_time_index(self) -> np.ndarray:
        return np.arange(self.M_o) * self.r_t_s

    def obs_freq_index(self) -> np.ndarray:
        return np.arange(self.N_s) * self.r_f_s

    def emu_time_index(self, offset: int | None = None) -> np.ndarray:
        """Interior emulation samples of a block on the intermediate grid."""
        offset = self.delta * self.r_t_s if offset is None else offset
        return offset + np.arange(self.M_e) * self.r_t_e

    def emu_freq_index(self) -> np.ndarray:
        centre = (self.N_s // 2) * self.r_f_s
        return centre + (np.arange(self.N_e) - self.N_e // 2) * self.r_f_e

    def to_dict(self) -> dict:
        return asdict(self)


def plan_grids(T_s, T_e, F_s, F_e, M_s: int, N_s: int, delta: int = 4, N_e: int = 64,
               n_i: int | None = None) -> GridPlan:
    """Intermediate grid for sounding spacings (T_s, F_s) and emulation (T_e, F_e).

    ``n_i`` overrides the intermediate subcarrier count ``N_s r_f_s``. A
    smaller value truncates the band: ``N_s`` drops to the sounding
    subcarriers that still fall on the grid.
    """
    if M_s < 1 or N_s < 1 or delta < 0 or N_e < 1:
        raise ValidationError("block sizes must be positive and delta >= 0")
    ts = _on_lattice(T_s, TIME_QUANTUM, "T_s")
    te = _on_lattice(T_e, TIME_QUANTUM, "T_e")
    fs = _on_lattice(F_s, FREQ_QUANTUM, "F_s")
    fe = _on_lattice(F_e, FREQ_QUANTUM, "F_e")
    ti = math.gcd(ts, te)
    fi = math.gcd(fs, fe)
    r_t_s, r_t_e = ts // ti, te // ti
    r_f_s, r_f_e = fs // fi, fe // fi
    M_i = (M_s + 2 * delta) * r_t_s
    N_i = N_s * r_f_s if n_i is None else int(n_i)
    if N_i < 1:
        raise ValidationError("n_i must be positive")
    N_s = min(N_s, (N_i - 1) // r_f_s + 1)
    if (M_s * r_t_s) % r_t_e:
        raise ValidationError("emulation spacing does not tile a sounding block")
    M_e = M_s * r_t_s // r_t_e
    plan = GridPlan(T_s, T_e, ti * TIME_QUANTUM, F_s, F_e, fi * FREQ_QUANTUM, r_t_s, r_t_e, r_f_s, r_f_e,
                    M_s, N_s, M_i, N_i, M_e, N_e, delta)
    f_idx = plan.emu_freq_index()
    if f_idx.min() < 0 or f_idx.max() >= N_i:
        raise ValidationError("emulation band exceeds the sounding band")
    return plan


@dataclass(frozen=True)
class BandRegion:
    nu_max: float
    theta_max: float

    def __post_init__(self):
        if not 0 < self.nu_max < 0.5:
            raise ValidationError(f"nu_max={self.nu_max} outside (0, 0.5)")
        if not 0 < self.theta_max < 1:
            raise ValidationError(f"theta_max={self.theta_max} outside (0, 1)")

    @property
    def W_t(self):
        return (-self.nu_max, self.nu_max)

    @property
    def W_f(self):
        return (-self.theta_max, 0.0)


def band_region(plan: GridPlan, f_c: float = 5.9e9, v_max: float = 27.8, tau_max: float = 4e-6) -> BandRegion:
    return BandRegion(plan.T_i * f_c * v_max / C0, plan.F_i * tau_max)


# ---------------------------------------------------------------------------
# DPS sequences
# ---------------------------------------------------------------------------


def band_kernel(M: int, band) -> np.ndarray:
    """``K[m, n] = integral over band of exp(j 2 pi nu (m - n)) d nu``."""
    lo, hi = band
    d = np.subtract.outer(np.arange(M), np.arange(M)).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        K = (np.exp(2j * np.pi * hi * d) - np.exp(2j * np.pi * lo * d)) / (2j * np.pi * d)
    K[d == 0] = hi - lo
    return K


def _fix_phase(U, centre):
    """Make the demodulated sequences real with a deterministic sign."""
    M = U.shape[0]
    m = np.arange(M)
    demod = U * np.exp(-2j * np.pi * centre * m)[:, None]
    ref = demod.T @ (M - m).astype(float)
    ph = np.exp(-1j * np.angle(ref))
    demod = np.real(demod * ph[None, :])
    if centre == 0:
        return demod
    return demod * np.exp(2j * np.pi * centre * m)[:, None]


def make_basis(M: int, band, D: int, method: str = "auto"):
    """First ``D`` DPS sequences of length ``M`` concentrated on ``band = (lo, hi)``.

    Returns ``(U, lam)``: ``U`` has shape (M, D) with orthonormal columns
    (real for bands symmetric about 0, complex otherwise) and ``lam`` holds
    the concentration eigenvalues in non-increasing order.

    ``method="dense"`` diagonalizes the band kernel directly;
    ``"tridiagonal"`` uses the commuting tridiagonal matrix of the
    classical sequences and modulates them to the band centre. ``"auto"``
    picks the tridiagonal route.
    """
    lo, hi = float(band[0]), float(band[1])
    if not (-1.0 <= lo < hi <= 1.0 and hi - lo <= 1.0):
        raise ValidationError(f"band {band} is wider than one period")
    if not 1 <= D <= M:
        raise ValidationError(f"need 1 <= D <= M (D={D}, M={M})")
    centre = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    if method == "dense":
        # the band kernel is the real sinc kernel modulated to the band centre
        K = band_kernel(M, (-half, half)).real
        try:
            lam, V = eigh(K, subset_by_index=[M - D, M - 1])
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"eigen-solver failed: {exc}") from exc
        order = np.argsort(lam)[::-1]
        V = V[:, order]
        if centre != 0:
            V = V * np.exp(2j * np.pi * centre * np.arange(M))[:, None]
        return _fix_phase(V, centre), lam[order]
    if method not in ("auto", "tridiagonal"):
        raise ValidationError(f"unknown method {method!r}")
    NW = half * M
    if D == 1:
        w, r = dpss(M, NW, Kmax=1, return_ratios=True)
        w, r = w[None, :] if w.ndim == 1 else w, np.atleast_1d(r)
    else:
        w, r = dpss(M, NW, Kmax=D, return_ratios=True)
    U = w.T / np.linalg.norm(w, axis=1)[None, :]
    if not np.all(np.isfinite(U)):
        raise NumericalError("DPS computation produced non-finite values")
    if centre != 0:
        U = U * np.exp(2j * np.pi * centre * np.arange(M))[:, None]
    return _fix_phase(U, centre), np.asarray(r, dtype=float)


@dataclass(frozen=True)
class DpsBasis:
    U_t: np.ndarray
    lam_t: np.ndarray
    U_f: np.ndarray
    lam_f: np.ndarray
    band: BandRegion

    @property
    def D_t(self) -> int:
        return self.U_t.shape[1]

    @property
    def D_f(self) -> int:
        return self.U_f.shape[1]


def default_dims(plan: GridPlan, band: BandRegion, D_t=None, D_f=None, margin: int = 0):
    """Subspace sizes: ``ceil(theta_max N_i)`` and ``ceil(2 nu_max M_i) + 1`` plus ``margin``.

    Explicit ``D_t``/``D_f`` win. The frequency size is capped at the number
    of sounding subcarriers so the fit stays determined.
    """
    if D_f is None:
        D_f = min(int(math.ceil(band.theta_max * plan.N_i - 1e-9)) + margin, plan.N_s)
    if D_t is None:
        D_t = min(int(math.ceil(2 * band.nu_max * plan.M_i - 1e-9)) + 1 + margin, plan.M_o)
    return min(D_t, plan.M_i), min(D_f, plan.N_i)


def build_basis(plan: GridPlan, band: BandRegion, D_t=None, D_f=None, margin: int = 0) -> DpsBasis:
    D_t, D_f = default_dims(plan, band, D_t, D_f, margin)
    U_t, lam_t = make_basis(plan.M_i, band.W_t, D_t)
    U_f, lam_f = make_basis(plan.N_i, band.W_f, D_f)
    return DpsBasis(U_t, lam_t, U_f, lam_f, band)


# ---------------------------------------------------------------------------
# Least-squares fit and reconstruction
# ---------------------------------------------------------------------------


def _pinv_full_rank(A, what):
    s = np.linalg.svd(A, compute_uv=False)
    rank = int(np.sum(s > s[0] * max(A.shape) * np.finfo(float).eps)) if s.size else 0
    if rank < A.shape[1]:
        raise NumericalError(f"{what} observation matrix is rank deficient: rank {rank} < {A.shape[1]} basis functions")
    return np.linalg.pinv(A)


def estimate_coefficients(y, plan: GridPlan, basis: DpsBasis, t_idx=None, f_idx=None) -> np.ndarray:
    """Least-squares DPS coefficients ``psi`` (length ``D_t D_f``, time-major).

    ``y`` holds the observations on the Cartesian sub-grid ``t_idx x f_idx``
    of the intermediate grid (default: the sounding samples of one block).
    """
    t_idx = plan.obs_time_index() if t_idx is None else np.asarray(t_idx)
    f_idx = plan.obs_freq_index() if f_idx is None else np.asarray(f_idx)
    y = np.asarray(y)
    if y.shape != (len(t_idx), len(f_idx)):
        raise ValidationError(f"observations have shape {y.shape}, expected {(len(t_idx), len(f_idx))}")
    if len(t_idx) * len(f_idx) < basis.D_t * basis.D_f:
        raise NumericalError("fewer observations than basis coefficients")
    A_p = _pinv_full_rank(basis.U_t[t_idx], "time")
    B_p = _pinv_full_rank(basis.U_f[f_idx], "frequency")
    return (A_p @ y @ B_p.T).reshape(-1)


def reconstruct(psi, plan: GridPlan, basis: DpsBasis, t_idx=None, f_idx=None) -> np.ndarray:
    """Evaluate the subspace model on ``t_idx x f_idx`` (default: block interior on the emulation grid)."""
    t_idx = plan.emu_time_index() if t_idx is None else np.asarray(t_idx)
    f_idx = plan.emu_freq_index() if f_idx is None else np.asarray(f_idx)
    Psi = np.asarray(psi).reshape(basis.D_t, basis.D_f)
    return basis.U_t[t_idx] @ Psi @ basis.U_f[f_idx].T


@dataclass(frozen=True)
class Interpolator:
    """Fused linear maps ``Y_e = P_t Y_o P_f^T`` for one plan and basis."""

    plan: GridPlan
    basis: DpsBasis
    A_pinv: np.ndarray
    P_f: np.ndarray

    @classmethod
    def build(cls, plan: GridPlan, basis: DpsBasis):
        A_p = _pinv_full_rank(basis.U_t[plan.obs_time_index()], "time")
        B_p = _pinv_full_rank(basis.U_f[plan.obs_freq_index()], "frequency")
        P_f = basis.U_f[plan.emu_freq_index()] @ B_p
        return cls(plan, basis, A_p, P_f)

    def time_map(self, out_idx) -> np.ndarray:
        return self.basis.U_t[np.asarray(out_idx)] @ self.A_pinv

    def apply(self, Y_o, out_idx=None) -> np.ndarray:
        out_idx = self.plan.emu_time_index() if out_idx is None else out_idx
        return self.time_map(out_idx) @ Y_o @ self.P_f.T


def band_slice(Q: int, N_s: int) -> slice:
    """Centred ``N_s`` subcarriers of a ``Q``-subcarrier band."""
    if N_s > Q:
        raise ValidationError(f"plan needs {N_s} subcarriers, tensor has {Q}")
    start = Q // 2 - N_s // 2
    return slice(start, start + N_s)


def interpolate_link(g, plan: GridPlan, interp: Interpolator) -> np.ndarray:
    """Resample a full sounding-grid response ``g[m, q]`` block by block.

    Block ``b`` reproduces the sounding intervals ``[b M_s, (b + 1) M_s)``
    from the window starting ``delta`` samples earlier; windows are clamped
    at both ends of the record. The output covers the record up to its last
    sounding sample on the emulation grid.
    """
    T = g.shape[0]
    M_o = plan.M_o
    if T < M_o:
        raise ValidationError(f"need at least {M_o} sounding samples, got {T}")
    g = np.asarray(g)[:, band_slice(g.shape[1], plan.N_s)]
    J = (T - 1) * plan.r_t_s // plan.r_t_e + 1
    out = np.empty((J, plan.N_e), dtype=np.complex128)
    per_block = plan.M_e
    n_blocks = -(-J // per_block)
    interior = None
    for b in range(n_blocks):
        start = min(max(b * plan.M_s - plan.delta, 0), T - M_o)
        j0, j1 = b * per_block, min((b + 1) * per_block, J)
        idx = np.arange(j0, j1) * plan.r_t_e - start * plan.r_t_s
        Y = g[start:start + M_o]
        if start == b * plan.M_s - plan.delta and j1 - j0 == per_block:
            if interior is None:
                interior = interp.time_map(plan.emu_time_index())
            P_t = interior
        else:
            P_t = interp.time_map(idx)
        out[j0:j1] = P_t @ Y @ interp.P_f.T
    return out


def interpolate_tensor(tensor, plan: GridPlan, basis: DpsBasis | None = None, links=None, f_c=None,
                       v_max: float = 27.8, tau_max: float = 4e-6):
    """Resample every (or the selected) link of a sounding tensor onto the emulation grid."""
    from .synth import FREQ_CENTERED, ChannelTensor

    if abs(tensor.T_sys - plan.T_s) > 1e-12 * plan.T_s or abs(tensor.delta_f - plan.F_s) > 1e-6:
        raise ValidationError("tensor grid does not match the plan's sounding spacings")
    if tensor.freq_convention != FREQ_CENTERED:
        raise ValidationError("interpolation expects a centred frequency axis")
    if basis is None:
        basis = build_basis(plan, band_region(plan, f_c or tensor.f_c, v_max, tau_max))
    interp = Interpolator.build(plan, basis)
    links = list(tensor.links) if links is None else [tuple(lk) for lk in links]
    data = np.stack([interpolate_link(tensor.link(lk), plan, interp) for lk in links])
    meta = dict(getattr(tensor, "meta", {}))
    return ChannelTensor(links, data, plan.T_e, plan.F_e, tensor.f_c, tensor.L, FREQ_CENTERED, meta)


# Named grid presets. Sounding spacings are those of the sounder; emulation
# spacings those of the channel emulator (156.25 kHz subcarriers). The desk
# presets interpolate over a 3 us delay band with 8 extra basis functions per
# dimension: at 4 us the frequency axis is sampled exactly at its Shannon
# number and no margin fits.
GRID_PRESETS = {
    "paper_table6": dict(grid=dict(T_s=500e-6, T_e=50e-9, F_s=250e3, F_e=156.25e3, M_s=64, N_s=601, delta=4,
                                   N_e=128),
                         basis=dict(D_t=44, D_f=600), band=dict(v_max=27.8, tau_max=4e-6)),
    "desk": dict(grid=dict(T_s=500e-6, T_e=5e-6, F_s=250e3, F_e=156.25e3, M_s=16, N_s=61, delta=4, N_e=64),
                 basis=dict(margin=8), band=dict(v_max=27.8, tau_max=3e-6)),
    "per": dict(grid=dict(T_s=500e-6, T_e=100e-6, F_s=250e3, F_e=156.25e3, M_s=64, N_s=61, delta=4, N_e=64),
                basis=dict(margin=8), band=dict(v_max=27.8, tau_max=3e-6)),
}


def preset_plan(name: str) -> GridPlan:
    if name not in GRID_PRESETS:
        raise ValidationError(f"unknown grid preset {name!r}")
    return plan_grids(**GRID_PRESETS[name]["grid"])


def preset_basis(name: str, f_c: float = 5.9e9, plan: GridPlan | None = None) -> DpsBasis:
    """Basis for a named preset (the full-scale one takes minutes and GBs)."""
    plan = plan or preset_plan(name)
    cfg = GRID_PRESETS[name]
    return build_basis(plan, band_region(plan, f_c, **cfg["band"]), **cfg["basis"])
