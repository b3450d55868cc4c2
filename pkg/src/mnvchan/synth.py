"""Multi-link channel tensors on the sounding grid.

A snapshot of all links takes ``T_sys``. With ``L`` nodes the snapshot is
split into ``L - 1`` phases of length ``T_s``; in phase ``p`` the node with
rank ``p`` transmits and all higher-ranked nodes receive, so link ``{a, b}``
is sampled at ``m * T_sys + rank(min(a, b)) * T_s``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.constants import c as C0

from . import gscm, kernels, rng
from .errors import ValidationError

FREQ_ZERO_BASED = 0
FREQ_CENTERED = 1


@dataclass(frozen=True)
class SounderConfig:
    """Sounding grid and schedule.

    ``noise_floor_db`` is the power of the complex Gaussian noise added to
    every tensor sample, relative to a unit channel gain; ``None`` disables it.
    """

    L: int = 3
    f_c: float = 5.9e9
    Q: int = 601
    delta_f: float = 250e3
    T_sys: float = 500e-6
    t_s: float = 12e-6
    v_max: float = 23.0
    T_stat: float = 0.12
    noise_floor_db: float | None = None
    freq_convention: int = FREQ_CENTERED

    def __post_init__(self):
        if self.L < 2:
            raise ValidationError("need at least 2 nodes")
        if self.Q < 1 or self.delta_f <= 0 or self.T_sys <= 0 or self.f_c <= 0:
            raise ValidationError("grid spacings and sizes must be positive")
        if self.freq_convention not in (FREQ_ZERO_BASED, FREQ_CENTERED):
            raise ValidationError("unknown frequency convention")
        if self.v_max > 0 and not self.T_sys < C0 / (2 * self.f_c * self.v_max):
            raise ValidationError(
                f"T_sys={self.T_sys} s cannot resolve v_max={self.v_max} m/s "
                f"(needs < {C0 / (2 * self.f_c * self.v_max):.3e} s)"
            )

    @property
    def wavelength(self) -> float:
        return C0 / self.f_c

    @property
    def B(self) -> float:
        return self.Q * self.delta_f

    @property
    def T_s(self) -> float:
        return self.T_sys / (self.L - 1)

    @property
    def delta_tau(self) -> float:
        return 1.0 / self.B

    @property
    def delta_nu(self) -> float:
        return 1.0 / self.T_stat

    @property
    def M(self) -> int:
        return int(round(self.T_stat / self.T_sys))

    @property
    def f0(self) -> float:
        return -(self.Q // 2) * self.delta_f if self.freq_convention == FREQ_CENTERED else 0.0

    def frequencies(self) -> np.ndarray:
        return self.f0 + self.delta_f * np.arange(self.Q)


PRESETS = {"paper_table2": SounderConfig()}


def max_doppler(L: int, T_s: float) -> float:
    """Largest Doppler shift resolvable by the switched multi-node schedule."""
    if L < 2 or T_s <= 0:
        raise ValidationError("need L >= 2 and T_s > 0")
    return 1.0 / (2.0 * (L - 1) * T_s)


@dataclass
class ChannelTensor:
    """Sampled frequency responses ``data[link, m, q]``."""

    links: list
    data: np.ndarray
    T_sys: float
    delta_f: float
    f_c: float
    L: int = 3
    freq_convention: int = FREQ_CENTERED
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.links = [(int(a), int(b)) for a, b in self.links]
        self.data = np.asarray(self.data)
        if self.data.ndim != 3 or self.data.shape[0] != len(self.links):
            raise ValidationError("tensor data must have shape (n_links, T, Q)")
        for a, b in self.links:
            if a == b:
                raise ValidationError(f"link ({a}, {b}) has identical endpoints")
        if not np.all(np.isfinite(self.data)):
            raise ValidationError("tensor contains non-finite entries")

    @property
    def T(self) -> int:
        return self.data.shape[1]

    @property
    def Q(self) -> int:
        return self.data.shape[2]

    def link(self, link) -> np.ndarray:
        link = tuple(int(v) for v in link)
        if link in self.links:
            return self.data[self.links.index(link)]
        rev = (link[1], link[0])
        if rev in self.links:
            return np.conj(self.data[self.links.index(rev)])
        raise KeyError(f"link {link} not in tensor")

    def frequencies(self) -> np.ndarray:
        f0 = -(self.Q // 2) * self.delta_f if self.freq_convention == FREQ_CENTERED else 0.0
        return f0 + self.delta_f * np.arange(self.Q)


def link_phase(scenario_nodes, link) -> int:
    order = sorted(scenario_nodes)
    return order.index(min(link))


def sample_times(t0: float, T: int, config: SounderConfig, phase: int) -> np.ndarray:
    return t0 + np.arange(T) * config.T_sys + phase * config.T_s


def synthesize(scenario, links, duration: float, config: SounderConfig = PRESETS["paper_table2"], seed=0,
               t0: float | None = None) -> ChannelTensor:
    """Sum all GSCM paths of each link into ``g[m, q]`` on the sounding grid.

    The reverse direction of a link is the complex conjugate of the forward
    one. Noise, when enabled, is drawn per link from a stream keyed by the
    link and ``seed``.
    """
    T = int(round(duration / config.T_sys))
    if T <= 0:
        raise ValidationError("duration yields an empty tensor")
    links = [tuple(int(v) for v in lk) for lk in links]
    if not links:
        raise ValidationError("no links requested")
    nodes = scenario.nodes
    lo, hi = scenario.span
    t0 = lo if t0 is None else float(t0)
    last = t0 + (T - 1) * config.T_sys + (config.L - 2) * config.T_s
    if t0 < lo - 1e-9 or last > hi + 1e-9:
        raise ValidationError(f"requested window [{t0}, {last}] s exceeds scenario span [{lo}, {hi}] s")
    population = gscm.diffuse_population(scenario, seed)
    cache = {}
    data = np.empty((len(links), T, config.Q), dtype=np.complex128)
    for i, (a, b) in enumerate(links):
        key = (min(a, b), max(a, b))
        if key not in cache:
            phase = link_phase(nodes, key)
            times = sample_times(t0, T, config, phase)
            track = gscm.trace_link(scenario, key, times, seed, f_c=config.f_c, population=population)
            # carrier phase already sits in the gains, so only baseband offsets remain
            g = kernels.cfr_sum(track.gains, track.delays, config.f0, config.delta_f, config.Q)
            if config.noise_floor_db is not None:
                g = g + complex_noise(g.shape, config.noise_floor_db, rng.stream(seed, "noise", *key))
            cache[key] = g
        g = cache[key]
        data[i] = g if (a, b) == key else np.conj(g)
    return ChannelTensor(links, data, config.T_sys, config.delta_f, config.f_c, config.L, config.freq_convention,
                         {"t0": t0, "seed": seed})


def complex_noise(shape, power_db: float, gen: np.random.Generator) -> np.ndarray:
    scale = np.sqrt(10.0 ** (power_db / 10.0) / 2.0)
    return scale * (gen.standard_normal(shape) + 1j * gen.standard_normal(shape))


# ---------------------------------------------------------------------------
# Sounding sequence and calibration
# ---------------------------------------------------------------------------


def crest_factor_db(x, oversample: int = 4) -> float:
    """Peak-to-RMS ratio (dB) of the time signal of multitone ``x[q]``."""
    x = np.asarray(x, dtype=complex)
    n = max(oversample * len(x), 1)
    s = np.fft.ifft(x, n)
    rms = np.sqrt(np.mean(np.abs(s) ** 2))
    return float(20.0 * np.log10(np.max(np.abs(s)) / rms))


def generate_sounding_signal(Q: int, seed=0, n_iter: int = 200, oversample: int = 4):
    """Unit-magnitude multitone with a low time-domain crest factor.

    Starts from Newman phases (with a small seeded dither) and alternates
    clipping of the oversampled time signal with re-projection onto
    unit-magnitude tones, keeping the best iterate.

    Returns
    -------
    x : ndarray, complex, shape (Q,)
    crest_db : float
    """
    if Q < 1:
        raise ValidationError("Q must be >= 1")
    q = np.arange(Q)
    dither = rng.stream(seed, "multitone").uniform(-np.pi / 32, np.pi / 32, Q)
    x = np.exp(1j * (np.pi * q * q / Q + dither))
    best, best_cf = x, crest_factor_db(x, oversample)
    n = oversample * Q
    for _ in range(n_iter if Q > 1 else 0):
        s = np.fft.ifft(x, n)
        rms = np.sqrt(np.mean(np.abs(s) ** 2))
        mag = np.abs(s)
        lim = 1.4 * rms
        s = np.where(mag > lim, s * lim / np.maximum(mag, 1e-300), s)
        X = np.fft.fft(s)[:Q]
        x = np.exp(1j * np.angle(X))
        cf = crest_factor_db(x, oversample)
        if cf < best_cf:
            best, best_cf = x, cf
    return best, best_cf


def calibrate(y, x, g_c):
    """Remove the sounding sequence and the back-to-back response: ``y / (x g_c)``."""
    y = np.asarray(y)
    div = np.asarray(x) * np.asarray(g_c)
    zero = np.nonzero(np.abs(div) == 0)[0]
    if zero.size:
        raise ValidationError(f"zero calibration divisor at subcarrier {int(zero[0])}")
    return y / div
