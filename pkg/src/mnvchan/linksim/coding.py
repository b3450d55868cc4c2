"""Bit-level chain of the 802.11p data field: scrambler, K=7 code, puncturing, interleaver.

All functions work on batches: arrays of shape (n_packets, n_bits), uint8.
"""

from __future__ import annotations

import numpy as np

from .. import kernels

G0 = 0o133
G1 = 0o171
SERVICE_BITS = 16
TAIL_BITS = 6


def scrambler_sequence(n: int, seed: int = 0x7F) -> np.ndarray:
    """Output of the ``x^7 + x^4 + 1`` scrambler started in state ``seed``."""
    state = [(seed >> i) & 1 for i in range(7)]  # state[6] = x^7 tap, state[3] = x^4 tap
    out = np.empty(n, dtype=np.uint8)
    for k in range(n):
        fb = state[6] ^ state[3]
        out[k] = fb
        state = [fb] + state[:6]
    return out


def scramble(bits, seed: int = 0x7F) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8)
    return bits ^ scrambler_sequence(bits.shape[-1], seed)


def conv_encode(bits) -> np.ndarray:
    """Rate-1/2 encoding, outputs interleaved as (A0, B0, A1, B1, ...).

    The register holds the current bit in position 6 and the bit from ``d``
    steps earlier in position ``6 - d``, matching the decoder trellis.
    """
    bits = np.atleast_2d(np.asarray(bits, dtype=np.uint8))
    n = bits.shape[1]
    a = np.zeros_like(bits)
    b = np.zeros_like(bits)
    for d in range(min(7, n)):
        shifted = np.zeros_like(bits)
        shifted[:, d:] = bits[:, : n - d] if d else bits
        if (G0 >> (6 - d)) & 1:
            a ^= shifted
        if (G1 >> (6 - d)) & 1:
            b ^= shifted
    out = np.empty((bits.shape[0], 2 * n), dtype=np.uint8)
    out[:, 0::2] = a
    out[:, 1::2] = b
    return out


# keep-masks over one puncturing period of the mother-code output
PUNCTURE = {
    "1/2": np.array([1, 1], dtype=bool),
    "3/4": np.array([1, 1, 1, 0, 0, 1], dtype=bool),
}
RATE = {"1/2": 0.5, "3/4": 0.75}


def _keep_mask(n_coded: int, rate: str) -> np.ndarray:
    pat = PUNCTURE[rate]
    if n_coded % len(pat):
        raise ValueError(f"{n_coded} coded bits do not fill whole puncturing periods")
    return np.tile(pat, n_coded // len(pat))


def puncture(coded, rate: str) -> np.ndarray:
    coded = np.atleast_2d(coded)
    return coded[:, _keep_mask(coded.shape[1], rate)]


def depuncture(llr, n_coded: int, rate: str) -> np.ndarray:
    """Re-insert erased positions as zero LLRs."""
    llr = np.atleast_2d(llr)
    out = np.zeros((llr.shape[0], n_coded))
    out[:, _keep_mask(n_coded, rate)] = llr
    return out


def interleaver_permutation(n_cbps: int, n_bpsc: int) -> np.ndarray:
    """``perm[k]`` is the output position of input bit ``k`` within one OFDM symbol."""
    k = np.arange(n_cbps)
    s = max(n_bpsc // 2, 1)
    i = (n_cbps // 16) * (k % 16) + k // 16
    j = s * (i // s) + (i + n_cbps - (16 * i) // n_cbps) % s
    return j


def interleave(bits, n_cbps: int, n_bpsc: int) -> np.ndarray:
    bits = np.atleast_2d(bits)
    perm = interleaver_permutation(n_cbps, n_bpsc)
    blocks = bits.reshape(bits.shape[0], -1, n_cbps)
    out = np.empty_like(blocks)
    out[:, :, perm] = blocks
    return out.reshape(bits.shape)


def deinterleave(values, n_cbps: int, n_bpsc: int) -> np.ndarray:
    values = np.atleast_2d(values)
    perm = interleaver_permutation(n_cbps, n_bpsc)
    blocks = values.reshape(values.shape[0], -1, n_cbps)
    return blocks[:, :, perm].reshape(values.shape)


def viterbi(llr) -> np.ndarray:
    return kernels.viterbi_decode(llr)
