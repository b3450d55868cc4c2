"""OFDM PHY configuration, Gray mapping and max-log soft demapping."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import yaml

from ..errors import FormatError, ValidationError
from .coding import RATE, SERVICE_BITS, TAIL_BITS

BITS_PER_SYMBOL = {"QPSK": 2, "64QAM": 6}
SUPPORTED_MODES = {("QPSK", "1/2"), ("64QAM", "3/4")}

# Gray levels per axis, indexed by the integer formed by the axis bits (first bit MSB)
_AXIS = {
    1: np.array([-1.0, 1.0]),
    3: np.array([-7.0, -5.0, -1.0, -3.0, 7.0, 5.0, 1.0, 3.0]),
}
_NORM = {"QPSK": np.sqrt(2.0), "64QAM": np.sqrt(42.0)}

# 802.11 data subcarriers within the 64-point FFT (pilots at +-7, +-21, DC unused)
DATA_SUBCARRIERS = np.array([k for k in range(-26, 27) if k not in (0, -21, -7, 7, 21)])


@dataclass(frozen=True)
class PhyConfig:
    """Link parameters. ``coded=False`` bypasses the code (test mode).

    ``snr_db`` replaces the thermal noise model by a fixed per-subcarrier SNR
    relative to a unit channel gain.
    """

    modulation: str = "QPSK"
    rate: str = "1/2"
    coded: bool = True
    bandwidth: float = 10e6
    n_fft: int = 64
    n_data: int = 48
    n_pilot: int = 4
    guard_interval: float = 1.6e-6
    preamble: float = 40e-6
    packet_bytes: int = 100
    packet_rate: float = 1000.0
    tx_power_dbm: float = 0.0
    thermal_dbm_hz: float = -174.0
    noise_figure_db: float = 10.0
    snr_db: float | None = None
    window_s: float = 0.12
    scrambler_seed: int = 0x7F

    def __post_init__(self):
        if self.modulation not in BITS_PER_SYMBOL:
            raise ValidationError(f"unknown modulation {self.modulation!r}")
        if self.coded and (self.modulation, self.rate) not in SUPPORTED_MODES:
            raise ValidationError(f"unsupported mode {self.modulation} {self.rate}")
        if self.n_fft != 64 or self.n_data != 48 or self.n_pilot != 4:
            raise ValidationError("only the 64-point 802.11 numerology is supported")
        if self.packet_bytes < 1 or self.packet_rate <= 0 or self.window_s <= 0:
            raise ValidationError("packet size, rate and window must be positive")

    @property
    def n_bpsc(self) -> int:
        return BITS_PER_SYMBOL[self.modulation]

    @property
    def n_cbps(self) -> int:
        return self.n_data * self.n_bpsc

    @property
    def n_dbps(self) -> int:
        return int(self.n_cbps * RATE[self.rate]) if self.coded else self.n_cbps

    @property
    def symbol_duration(self) -> float:
        return self.n_fft / self.bandwidth + self.guard_interval

    @property
    def subcarrier_spacing(self) -> float:
        return self.bandwidth / self.n_fft

    @property
    def n_symbols(self) -> int:
        n_bits = 8 * self.packet_bytes + (SERVICE_BITS + TAIL_BITS if self.coded else 0)
        return -(-n_bits // self.n_dbps)

    @property
    def throughput_bps(self) -> float:
        return 8 * self.packet_bytes * self.packet_rate

    def noise_variance(self) -> float:
        """Noise variance per data subcarrier for unit-power symbols and unit channel gain."""
        if self.snr_db is not None:
            return 10.0 ** (-self.snr_db / 10.0)
        noise_dbm = self.thermal_dbm_hz + 10.0 * np.log10(self.bandwidth) + self.noise_figure_db
        n_used = self.n_data + self.n_pilot
        per_bin_noise = 10.0 ** (noise_dbm / 10.0) / self.n_fft
        per_bin_signal = 10.0 ** (self.tx_power_dbm / 10.0) / n_used
        return per_bin_noise / per_bin_signal


def load_phy_config(path) -> PhyConfig:
    """Read a PhyConfig from a YAML mapping of field overrides."""
    try:
        doc = yaml.safe_load(Path(path).read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise FormatError(f"cannot read PHY config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: expected a mapping")
    known = {f.name for f in fields(PhyConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ValidationError(f"unknown PHY fields {sorted(unknown)}")
    return PhyConfig(**doc)


def _axis_bits(modulation):
    return 1 if modulation == "QPSK" else 3


def map_bits(bits, modulation: str) -> np.ndarray:
    """Gray-map bit rows (..., n_bits) to unit-power symbols (..., n_bits / n_bpsc)."""
    nb = _axis_bits(modulation)
    bits = np.asarray(bits, dtype=np.int64)
    groups = bits.reshape(*bits.shape[:-1], -1, 2 * nb)
    w = 1 << np.arange(nb - 1, -1, -1)
    i_idx = groups[..., :nb] @ w
    q_idx = groups[..., nb:] @ w
    lv = _AXIS[nb]
    return (lv[i_idx] + 1j * lv[q_idx]) / _NORM[modulation]


def _axis_llr(z, weight, nb):
    lv = _AXIS[nb]
    labels = np.arange(len(lv))
    d2 = (z[..., None] - lv) ** 2
    out = []
    for b in range(nb):
        one = ((labels >> (nb - 1 - b)) & 1).astype(bool)
        out.append(weight * (d2[..., one].min(axis=-1) - d2[..., ~one].min(axis=-1)))
    return np.stack(out, axis=-1)


def demap_llr(y, h, noise_var: float, modulation: str) -> np.ndarray:
    """Max-log LLRs ``log P(0)/P(1)`` for ``y = h x + n`` with known ``h``.

    Returns an array (..., n_symbols * n_bpsc) in mapping bit order.
    """
    nb = _axis_bits(modulation)
    scale = _NORM[modulation]
    h = np.asarray(h)
    hh = np.abs(h) ** 2
    safe = np.where(hh > 0, h, 1.0)
    z = (y / safe) * scale
    weight = np.where(hh > 0, hh / (noise_var * scale * scale), 0.0)
    li = _axis_llr(z.real, weight, nb)
    lq = _axis_llr(z.imag, weight, nb)
    out = np.concatenate([li, lq], axis=-1)
    return out.reshape(*out.shape[:-2], -1)
