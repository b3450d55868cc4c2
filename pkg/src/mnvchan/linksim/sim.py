"""Packet error rates over time-variant channels."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .. import rng
from ..errors import ValidationError
from .coding import (
    SERVICE_BITS,
    TAIL_BITS,
    conv_encode,
    deinterleave,
    depuncture,
    interleave,
    puncture,
    scrambler_sequence,
    viterbi,
)
from .phy import DATA_SUBCARRIERS, PhyConfig, demap_llr, map_bits

BATCH = 500


@dataclass
class PerSeries:
    """PER per window; ensembles also carry pointwise min/mean/max over runs."""

    t_center: np.ndarray
    per: np.ndarray
    n_packets: np.ndarray
    per_min: np.ndarray | None = None
    per_mean: np.ndarray | None = None
    per_max: np.ndarray | None = None

    @property
    def K(self) -> int:
        return len(self.per)


def _packet_channel(channel, link, phy: PhyConfig, n_packets=None):
    """Per-packet, per-symbol data-subcarrier gains and window layout."""
    air = phy.preamble + phy.n_symbols * phy.symbol_duration
    per_window = int(round(phy.window_s * phy.packet_rate))
    if channel is None:
        if n_packets is None:
            raise ValidationError("flat-channel runs need n_packets")
        t0 = 0.0
        sym_idx = None
        g = None
    else:
        if channel.Q != phy.n_fft or abs(channel.delta_f - phy.subcarrier_spacing) > 1e-6 * phy.subcarrier_spacing:
            raise ValidationError(
                f"channel grid ({channel.Q} x {channel.delta_f} Hz) does not match the PHY "
                f"({phy.n_fft} x {phy.subcarrier_spacing} Hz)"
            )
        g = channel.link(link if link is not None else channel.links[0])
        t0 = float(channel.meta.get("t0", 0.0))
        span = (g.shape[0] - 1) * channel.T_sys
        fit = int(np.floor((span - air) * phy.packet_rate + 1e-9)) + 1
        if fit <= 0:
            raise ValidationError("channel record is shorter than one packet")
        n_packets = fit if n_packets is None else min(n_packets, fit)
        starts = np.arange(n_packets) / phy.packet_rate + phy.preamble
        sym_t = starts[:, None] + (np.arange(phy.n_symbols) + 0.5) * phy.symbol_duration
        sym_idx = np.clip(np.rint(sym_t / channel.T_sys).astype(np.int64), 0, g.shape[0] - 1)
    K = n_packets // per_window
    if K == 0:
        raise ValidationError(f"{n_packets} packets do not fill one {phy.window_s} s window")
    return g, sym_idx, t0, K, per_window


def run_link(channel, phy: PhyConfig, seed=0, link=None, n_packets: int | None = None) -> PerSeries:
    """Send packets at ``phy.packet_rate`` through ``channel`` and count errors per window.

    ``channel`` is an emulation-grid tensor whose frequency axis matches the
    PHY subcarriers, or ``None`` for a flat unit channel (then ``n_packets``
    is required). Each OFDM symbol sees the channel sample nearest to its
    centre. Receivers know the channel exactly.
    """
    g, sym_idx, t0, K, per_window = _packet_channel(channel, link, phy, n_packets)
    total = K * per_window
    n_psdu = 8 * phy.packet_bytes
    n_sym = phy.n_symbols
    n_data_bits = n_sym * phy.n_dbps
    noise_var = phy.noise_variance()
    llr_scale = noise_var if noise_var > 0 else 1.0
    scr = scrambler_sequence(n_data_bits, phy.scrambler_seed)
    cols = DATA_SUBCARRIERS + phy.n_fft // 2
    errors = np.zeros(total, dtype=bool)
    for b0 in range(0, total, BATCH):
        b1 = min(b0 + BATCH, total)
        n = b1 - b0
        psdu = rng.stream(seed, "payload", b0).integers(0, 2, size=(n, n_psdu), dtype=np.uint8)
        if phy.coded:
            data = np.zeros((n, n_data_bits), dtype=np.uint8)
            data[:, SERVICE_BITS:SERVICE_BITS + n_psdu] = psdu
            data ^= scr
            data[:, SERVICE_BITS + n_psdu:SERVICE_BITS + n_psdu + TAIL_BITS] = 0
            coded = puncture(conv_encode(data), phy.rate)
        else:
            data = np.zeros((n, n_data_bits), dtype=np.uint8)
            data[:, :n_psdu] = psdu
            data ^= scr
            coded = data
        tx = map_bits(interleave(coded, phy.n_cbps, phy.n_bpsc), phy.modulation).reshape(n, n_sym, phy.n_data)
        if g is None:
            h = np.ones_like(tx)
        else:
            h = g[sym_idx[b0:b1]][:, :, cols]
        y = h * tx
        if noise_var > 0:
            gen = rng.stream(seed, "noise", b0)
            y = y + np.sqrt(noise_var / 2) * (gen.standard_normal(y.shape) + 1j * gen.standard_normal(y.shape))
        llr = demap_llr(y, h, llr_scale, phy.modulation).reshape(n, -1)
        llr = deinterleave(llr, phy.n_cbps, phy.n_bpsc)
        if phy.coded:
            full = depuncture(llr, 2 * n_data_bits, phy.rate)
            dec = viterbi(full) ^ scr
            rx = dec[:, SERVICE_BITS:SERVICE_BITS + n_psdu]
        else:
            rx = ((llr < 0).astype(np.uint8) ^ scr)[:, :n_psdu]
        errors[b0:b1] = np.any(rx != psdu, axis=1)
    per = errors.reshape(K, per_window).mean(axis=1)
    t_center = t0 + (np.arange(K) + 0.5) * per_window / phy.packet_rate
    return PerSeries(t_center, per, np.full(K, per_window))


def envelope(series: list) -> PerSeries:
    """Pointwise min/mean/max over runs that share one window layout."""
    if not series:
        raise ValidationError("ensemble is empty")
    K = series[0].K
    if any(s.K != K for s in series):
        raise ValidationError("runs have different window counts")
    P = np.stack([s.per for s in series])
    mean = P.mean(axis=0)
    return PerSeries(series[0].t_center, mean, series[0].n_packets, P.min(axis=0), mean, P.max(axis=0))


def ensemble_per(tensors: list, phy: PhyConfig, seeds, link=None) -> PerSeries:
    """Run every tensor with its seed and return the envelope."""
    tensors = list(tensors)
    seeds = list(seeds)
    if not tensors:
        raise ValidationError("ensemble is empty")
    if len(seeds) != len(tensors):
        raise ValidationError("need one seed per tensor")
    return envelope([run_link(t, phy, s, link) for t, s in zip(tensors, seeds)])


def per_ratio_cdf(gamma_ref, gamma_mean):
    """Empirical CDF of ``gamma_ref[k] / gamma_mean[k]`` over windows with ``gamma_mean > 0``.

    Returns ``(ratios_sorted, cdf, n_excluded)`` with ``cdf[i]`` the fraction
    of ratios ``<= ratios_sorted[i]``.
    """
    ref = np.asarray(gamma_ref, dtype=float)
    mean = np.asarray(gamma_mean, dtype=float)
    keep = mean > 0
    r = np.sort(ref[keep] / mean[keep])
    cdf = np.searchsorted(r, r, side="right") / max(len(r), 1)
    return r, cdf, int(np.sum(~keep))


def ecdf(samples, x) -> np.ndarray:
    s = np.sort(np.asarray(samples, dtype=float))
    return np.searchsorted(s, np.asarray(x, dtype=float), side="right") / max(len(s), 1)


def time_in_envelope(ref, lo, hi) -> float:
    """Percentage of windows with ``lo <= ref <= hi``."""
    ref, lo, hi = (np.asarray(v, dtype=float) for v in (ref, lo, hi))
    if ref.size == 0:
        raise ValidationError("empty series")
    return float(100.0 * np.mean((ref >= lo) & (ref <= hi)))


def write_per_csv(path, series: PerSeries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if series.per_min is None:
            w.writerow(["k", "t_center_s", "per"])
            for k in range(series.K):
                w.writerow([k, repr(float(series.t_center[k])), repr(float(series.per[k]))])
        else:
            w.writerow(["k", "t_center_s", "per_min", "per_mean", "per_max"])
            for k in range(series.K):
                w.writerow([k, repr(float(series.t_center[k])), repr(float(series.per_min[k])),
                            repr(float(series.per_mean[k])), repr(float(series.per_max[k]))])


def read_per_csv(path) -> PerSeries:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValidationError(f"{path}: empty PER file")
    col = "per" if "per" in rows[0] else "per_mean"
    t = np.array([float(r["t_center_s"]) for r in rows])
    per = np.array([float(r[col]) for r in rows])
    n = np.zeros(len(rows), dtype=int)
    if col == "per":
        return PerSeries(t, per, n)
    lo = np.array([float(r["per_min"]) for r in rows])
    hi = np.array([float(r["per_max"]) for r in rows])
    return PerSeries(t, per, n, lo, per, hi)
