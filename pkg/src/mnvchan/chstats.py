"""Time-variant channel statistics per stationarity region.

A region ``k`` covers snapshots ``[k M, (k + 1) M)`` and the full band. The
local scattering function (LSF) is a multitaper estimate over that block,

    C[k; n, p] = 1/(I J) sum_w |H_w[k; n, p]|^2,
    H_w[k; n, p] = sum_{m', q} g[k M + m', q] G_w[m', q] exp(-j 2 pi (p m'/M - n q/N)),

with separable DPS tapers ``G_w = u_i[m'] v_j[q]``. Delay bin ``n`` maps to
``n * tau_s`` and Doppler bin ``p`` (from ``-M/2`` to ``M/2 - 1``) to
``p * nu_s``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dpsinterp import make_basis
from .errors import FormatError, ValidationError

NW = 2.0


@dataclass(frozen=True)
class StatsConfig:
    """Region size, taper counts, bin widths and threshold settings.

    ``noise_margin_db`` / ``peak_dynamic_db`` set to ``None`` disable the
    respective threshold. ``noise_floor`` (linear power) overrides the
    estimate taken from the largest-delay PDP bins.

    The last ``negative_delay_fraction`` of the delay bins are read as
    negative delays, so taper leakage of paths near zero delay does not
    wrap to the far end of the axis.
    """

    M: int = 240
    N: int | None = None
    I: int = 3
    J: int = 3
    tau_s: float = 1.0 / 150.25e6
    nu_s: float = 1.0 / 0.12
    noise_margin_db: float | None = 5.0
    peak_dynamic_db: float | None = 40.0
    noise_floor: float | None = None
    noise_tail_fraction: float = 0.1
    negative_delay_fraction: float = 1.0 / 32

    def __post_init__(self):
        if self.M < 2 or self.M % 2:
            raise ValidationError("M must be even and >= 2")
        if not 0 <= self.negative_delay_fraction < 0.5:
            raise ValidationError("negative_delay_fraction must lie in [0, 0.5)")
        if self.I < 1 or self.J < 1:
            raise ValidationError("taper counts must be >= 1")
        for name in ("noise_margin_db", "peak_dynamic_db"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValidationError(f"{name} must be >= 0")

    @classmethod
    def for_tensor(cls, tensor, M: int | None = None, **kw):
        M = M if M is not None else int(round(0.12 / tensor.T_sys))
        return cls(M=M, N=tensor.Q, tau_s=1.0 / (tensor.Q * tensor.delta_f), nu_s=1.0 / (M * tensor.T_sys), **kw)


@dataclass
class StationarityStats:
    t_center: np.ndarray
    path_loss_db: np.ndarray
    sigma_tau: np.ndarray
    tau_mean: np.ndarray
    sigma_nu: np.ndarray
    nu_mean: np.ndarray
    pdp: np.ndarray
    dsd: np.ndarray
    noise_floor: np.ndarray
    lsf: np.ndarray | None = None

    @property
    def K(self) -> int:
        return len(self.t_center)

    def column(self, name: str) -> np.ndarray:
        return {
            "path_loss_db": self.path_loss_db,
            "rms_delay_ns": self.sigma_tau * 1e9,
            "rms_doppler_hz": self.sigma_nu,
            "mean_delay_ns": self.tau_mean * 1e9,
            "mean_doppler_hz": self.nu_mean,
        }[name]


CSV_COLUMNS = ("k", "t_center_s", "path_loss_db", "rms_delay_ns", "rms_doppler_hz", "mean_delay_ns", "mean_doppler_hz")


def dps_window_bank(M: int, N: int, I: int = 3, J: int = 3):
    """First ``I`` time and ``J`` frequency Slepian sequences.

    Returns ``(u, v)`` with shapes (I, M) and (J, N); the 2D taper ``w = i J + j``
    is ``outer(u[i], v[j])``.
    """
    if I > M or J > N:
        raise ValidationError("taper count exceeds block size")
    u, _ = make_basis(M, (-NW / M, NW / M), I)
    v, _ = make_basis(N, (-NW / N, NW / N), J)
    return np.real(u.T), np.real(v.T)


def lsf_block(block, u, v) -> np.ndarray:
    """Multitaper LSF of one M x N block, shape (N, M) with Doppler fft-shifted."""
    M, N = block.shape
    out = np.zeros((N, M))
    for vj in v:
        # sum_q x[q] exp(+j 2 pi n q / N)
        y = np.fft.ifft(block * vj[None, :], axis=1) * N
        for ui in u:
            h = np.fft.fft(y * ui[:, None], axis=0)
            out += np.abs(h.T) ** 2
    out /= len(u) * len(v)
    return np.fft.fftshift(out, axes=1)


def doppler_bins(M: int) -> np.ndarray:
    return np.arange(-M // 2, M // 2)


def n_regions(T: int, M: int) -> int:
    return T // M


def region_block(g, k: int, M: int) -> np.ndarray:
    K = n_regions(g.shape[0], M)
    if not 0 <= k < K:
        raise ValidationError(f"region {k} out of range [0, {K})")
    return g[k * M:(k + 1) * M]


def lsf(tensor, link, k: int, config: StatsConfig) -> np.ndarray:
    """LSF ``C[n, p]`` of region ``k``; Doppler index ``p`` runs from ``-M/2``."""
    g = tensor.link(link) if hasattr(tensor, "link") else np.asarray(tensor)
    block = region_block(g, k, config.M)
    u, v = dps_window_bank(config.M, block.shape[1], config.I, config.J)
    return lsf_block(block.astype(np.complex128), u, v)


def pdp_dsd(C):
    """Delay and Doppler marginals of an LSF of shape (..., N, M)."""
    C = np.asarray(C, dtype=float)
    N, M = C.shape[-2:]
    return C.sum(axis=-1) / M, C.sum(axis=-2) / N


def negative_delay_bins(N: int, fraction: float = 1.0 / 32) -> int:
    return int(fraction * N)


def delay_bins(N: int, fraction: float = 1.0 / 32) -> np.ndarray:
    """Signed delay index of each PDP bin."""
    n = np.arange(N)
    g = negative_delay_bins(N, fraction)
    return np.where(n >= N - g, n - N, n) if g else n


def estimate_noise_floor(P_tau, fraction: float = 0.1, negative_fraction: float = 1.0 / 32) -> float:
    """Median of the largest positive-delay bins."""
    P_tau = np.asarray(P_tau, dtype=float)
    N = len(P_tau)
    n = max(1, int(np.ceil(fraction * N)))
    end = N - negative_delay_bins(N, negative_fraction)
    return float(np.median(P_tau[max(end - n, 0):end]))


def _mask(P, noise_floor, config):
    keep = np.ones(P.shape, dtype=bool)
    if config.noise_margin_db is not None and noise_floor is not None:
        keep &= P >= noise_floor * 10.0 ** (config.noise_margin_db / 10.0)
    if config.peak_dynamic_db is not None:
        keep &= P >= P.max() * 10.0 ** (-config.peak_dynamic_db / 10.0)
    return keep


def central_moments(P, x, keep=None):
    """Mean and RMS spread of abscissa ``x`` weighted by ``P`` over ``keep``."""
    P = np.asarray(P, dtype=float)
    x = np.asarray(x, dtype=float)
    if keep is not None:
        P = np.where(keep, P, 0.0)
    total = P.sum()
    if not total > 0:
        return np.nan, np.nan
    mean = float(np.sum(P * x) / total)
    # two-pass form: exact for symmetric tap pairs
    var = float(np.sum(P * (x - mean) ** 2) / total)
    return mean, float(np.sqrt(var))


def rms_spreads(P_tau, P_nu, config: StatsConfig, noise_floor=None):
    """Thresholded RMS delay/Doppler spreads and means.

    Returns ``(sigma_tau, tau_mean, sigma_nu, nu_mean)``; NaN when every bin
    of a marginal falls below the thresholds.
    """
    P_tau = np.asarray(P_tau, dtype=float)
    P_nu = np.asarray(P_nu, dtype=float)
    if np.any(P_tau < 0) or np.any(P_nu < 0):
        raise ValidationError("marginals must be non-negative")
    if noise_floor is None:
        noise_floor = config.noise_floor
    if noise_floor is None and config.noise_margin_db is not None:
        noise_floor = estimate_noise_floor(P_tau, config.noise_tail_fraction, config.negative_delay_fraction)
    # moments in bin units, scaled once, so tap pairs on the grid come out exact
    n = delay_bins(len(P_tau), config.negative_delay_fraction)
    n_mean, n_sigma = central_moments(P_tau, n, _mask(P_tau, noise_floor, config))
    p_mean, p_sigma = central_moments(P_nu, doppler_bins(len(P_nu)), _mask(P_nu, noise_floor, config))
    return n_sigma * config.tau_s, n_mean * config.tau_s, p_sigma * config.nu_s, p_mean * config.nu_s


def path_loss(tensor, link, k: int, M: int = 240) -> float:
    """Region path loss in dB: ``-10 log10(mean |g|^2)`` over the block."""
    g = tensor.link(link) if hasattr(tensor, "link") else np.asarray(tensor)
    block = region_block(g, k, M)
    return float(-10.0 * np.log10(np.mean(np.abs(block) ** 2)))


def analyze(tensor, link, config: StatsConfig | None = None, keep_lsf: bool = False) -> StationarityStats:
    """All region statistics of one link."""
    config = config or StatsConfig.for_tensor(tensor)
    g = tensor.link(link)
    M = config.M
    K = n_regions(g.shape[0], M)
    if K == 0:
        raise ValidationError(f"tensor has {g.shape[0]} snapshots, fewer than one region of {M}")
    N = g.shape[1]
    u, v = dps_window_bank(M, N, config.I, config.J)
    pdp = np.empty((K, N))
    dsd = np.empty((K, M))
    lsfs = np.empty((K, N, M)) if keep_lsf else None
    pl = np.empty(K)
    out = np.full((4, K), np.nan)
    floors = np.empty(K)
    for k in range(K):
        block = g[k * M:(k + 1) * M].astype(np.complex128)
        C = lsf_block(block, u, v)
        if keep_lsf:
            lsfs[k] = C
        pdp[k], dsd[k] = pdp_dsd(C)
        pl[k] = -10.0 * np.log10(np.mean(np.abs(block) ** 2))
        floor = config.noise_floor if config.noise_floor is not None else estimate_noise_floor(
            pdp[k], config.noise_tail_fraction, config.negative_delay_fraction)
        floors[k] = floor
        out[:, k] = rms_spreads(pdp[k], dsd[k], config, floor)
    t0 = float(tensor.meta.get("t0", 0.0)) if hasattr(tensor, "meta") else 0.0
    t_center = t0 + (np.arange(K) * M + M / 2) * tensor.T_sys
    return StationarityStats(t_center, pl, out[0], out[1], out[2], out[3], pdp, dsd, floors, lsfs)


def write_stats_csv(path, stats: StationarityStats) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for k in range(stats.K):
            w.writerow([k, repr(float(stats.t_center[k]))] + [repr(float(stats.column(c)[k])) for c in CSV_COLUMNS[2:]])


def read_stats_csv(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(CSV_COLUMNS) - set(rows[0]):
        raise FormatError(f"{path}: expected columns {','.join(CSV_COLUMNS)}")
    try:
        return {c: np.array([float(r[c]) for r in rows]) for c in CSV_COLUMNS}
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed value ({exc})") from exc
