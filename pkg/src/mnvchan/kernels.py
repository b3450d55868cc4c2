"""Hot inner loops, each with a numba and a pure-numpy implementation.

The public names (``cfr_sum``, ``ar1_filter``, ``viterbi_decode``) are bound
to the numba versions when available, otherwise to the numpy ones. Both
variants are always importable under their ``*_numpy`` / ``*_numba`` names so
tests and the benchmark can compare them.
"""

import numpy as np

from . import _accel

# ---------------------------------------------------------------------------
# Sum of paths -> sampled frequency response
# ---------------------------------------------------------------------------

_CFR_CHUNK = 256


def cfr_sum_numpy(gains, delays, f0, df, n_freq):
    """g[t, q] = sum_p gains[t, p] * exp(-j 2 pi (f0 + q df) delays[t, p])."""
    gains = np.ascontiguousarray(gains, dtype=np.complex128)
    delays = np.ascontiguousarray(delays, dtype=np.float64)
    n_t = gains.shape[0]
    freqs = f0 + df * np.arange(n_freq)
    out = np.empty((n_t, n_freq), dtype=np.complex128)
    for lo in range(0, n_t, _CFR_CHUNK):
        hi = min(lo + _CFR_CHUNK, n_t)
        ph = np.exp(-2j * np.pi * delays[lo:hi, :, None] * freqs[None, None, :])
        out[lo:hi] = np.einsum("tp,tpq->tq", gains[lo:hi], ph)
    return out


# ---------------------------------------------------------------------------
# First-order autoregressive recursion (exponentially correlated process)
# ---------------------------------------------------------------------------


def ar1_filter_numpy(innov, rho):
    """s[:, 0] = e[:, 0]; s[:, k] = rho[:, k] s[:, k-1] + sqrt(1 - rho[:, k]^2) e[:, k].

    ``innov`` and ``rho`` have shape (n_process, n_steps); ``rho[:, 0]`` is
    ignored. The output has unit stationary variance.
    """
    innov = np.asarray(innov, dtype=np.float64)
    rho = np.asarray(rho, dtype=np.float64)
    out = np.empty_like(innov)
    if innov.shape[1] == 0:
        return out
    scale = np.sqrt(np.clip(1.0 - rho * rho, 0.0, None))
    out[:, 0] = innov[:, 0]
    for k in range(1, innov.shape[1]):
        out[:, k] = rho[:, k] * out[:, k - 1] + scale[:, k] * innov[:, k]
    return out


# ---------------------------------------------------------------------------
# Soft-decision Viterbi for the K=7 (133, 171) code
# ---------------------------------------------------------------------------

N_STATES = 64
_G0 = 0o133
_G1 = 0o171


def _parity(x):
    return bin(x).count("1") & 1


def _trellis_tables():
    """Predecessor states and expected output signs for each (state, branch).

    The encoder register is ``r = (bit << 6) | state`` where ``state`` holds
    the six previous input bits, most recent in bit 5. The next state is
    ``r >> 1``.
    """
    prev = np.zeros((N_STATES, 2), dtype=np.int64)
    sign0 = np.zeros((N_STATES, 2), dtype=np.float64)
    sign1 = np.zeros((N_STATES, 2), dtype=np.float64)
    for ns in range(N_STATES):
        bit = ns >> 5
        for j in range(2):
            ps = ((ns << 1) & 0x3F) | j
            r = (bit << 6) | ps
            prev[ns, j] = ps
            # LLR > 0 favours a 0 bit, so a 0 output adds +llr.
            sign0[ns, j] = 1.0 - 2.0 * _parity(r & _G0)
            sign1[ns, j] = 1.0 - 2.0 * _parity(r & _G1)
    return prev, sign0, sign1


PREV_STATE, SIGN_A, SIGN_B = _trellis_tables()


def viterbi_decode_numpy(llr):
    """Decode a batch of terminated rate-1/2 codewords.

    Parameters
    ----------
    llr : ndarray, shape (n_words, 2 * n_steps)
        Depunctured log-likelihood ratios log(P(0)/P(1)), interleaved as
        (A0, B0, A1, B1, ...). Erased bits carry 0.

    Returns
    -------
    ndarray of uint8, shape (n_words, n_steps)
    """
    llr = np.asarray(llr, dtype=np.float64)
    n_words, n_coded = llr.shape
    n_steps = n_coded // 2
    la = llr[:, 0::2]
    lb = llr[:, 1::2]
    metric = np.full((n_words, N_STATES), -np.inf)
    metric[:, 0] = 0.0
    choice = np.empty((n_steps, n_words, N_STATES), dtype=np.uint8)
    for k in range(n_steps):
        cand = (
            metric[:, PREV_STATE]
            + la[:, k, None, None] * SIGN_A[None]
            + lb[:, k, None, None] * SIGN_B[None]
        )
        pick = (cand[:, :, 1] > cand[:, :, 0]).astype(np.uint8)
        choice[k] = pick
        metric = np.where(pick == 1, cand[:, :, 1], cand[:, :, 0])
        metric -= metric.max(axis=1, keepdims=True)
    bits = np.empty((n_words, n_steps), dtype=np.uint8)
    state = np.zeros(n_words, dtype=np.int64)
    rows = np.arange(n_words)
    for k in range(n_steps - 1, -1, -1):
        bits[:, k] = state >> 5
        state = PREV_STATE[state, choice[k, rows, state]]
    return bits


if _accel.HAVE_NUMBA:
    from numba import njit

    @njit(cache=True)
    def cfr_sum_numba(gains, delays, f0, df, n_freq):
        n_t, n_p = gains.shape
        out = np.zeros((n_t, n_freq), dtype=np.complex128)
        two_pi = 2.0 * np.pi
        for t in range(n_t):
            for p in range(n_p):
                a = gains[t, p]
                if a == 0:
                    continue
                tau = delays[t, p]
                step = np.exp(-1j * two_pi * df * tau)
                q = 0
                while q < n_freq:
                    # re-anchor the phasor every block to bound rounding drift
                    ph = a * np.exp(-1j * two_pi * (f0 + df * q) * tau)
                    stop = min(q + 128, n_freq)
                    while q < stop:
                        out[t, q] += ph
                        ph *= step
                        q += 1
        return out

    @njit(cache=True)
    def ar1_filter_numba(innov, rho):
        n_proc, n_steps = innov.shape
        out = np.empty_like(innov)
        for i in range(n_proc):
            if n_steps == 0:
                continue
            s = innov[i, 0]
            out[i, 0] = s
            for k in range(1, n_steps):
                r = rho[i, k]
                c = 1.0 - r * r
                c = np.sqrt(c) if c > 0.0 else 0.0
                s = r * s + c * innov[i, k]
                out[i, k] = s
        return out

    @njit(cache=True)
    def _viterbi_numba(llr, prev, sa, sb):
        n_words, n_coded = llr.shape
        n_steps = n_coded // 2
        bits = np.empty((n_words, n_steps), dtype=np.uint8)
        choice = np.empty((n_steps, 64), dtype=np.uint8)
        metric = np.empty(64)
        new = np.empty(64)
        for w in range(n_words):
            for s in range(64):
                metric[s] = -np.inf
            metric[0] = 0.0
            for k in range(n_steps):
                a = llr[w, 2 * k]
                b = llr[w, 2 * k + 1]
                best = -np.inf
                for ns in range(64):
                    c0 = metric[prev[ns, 0]] + a * sa[ns, 0] + b * sb[ns, 0]
                    c1 = metric[prev[ns, 1]] + a * sa[ns, 1] + b * sb[ns, 1]
                    if c1 > c0:
                        new[ns] = c1
                        choice[k, ns] = 1
                    else:
                        new[ns] = c0
                        choice[k, ns] = 0
                    if new[ns] > best:
                        best = new[ns]
                for ns in range(64):
                    metric[ns] = new[ns] - best
            state = 0
            for k in range(n_steps - 1, -1, -1):
                bits[w, k] = state >> 5
                state = prev[state, choice[k, state]]
        return bits

    def viterbi_decode_numba(llr):
        llr = np.ascontiguousarray(llr, dtype=np.float64)
        return _viterbi_numba(llr, PREV_STATE, SIGN_A, SIGN_B)

    def cfr_sum(gains, delays, f0, df, n_freq):
        return cfr_sum_numba(
            np.ascontiguousarray(gains, dtype=np.complex128),
            np.ascontiguousarray(delays, dtype=np.float64),
            float(f0),
            float(df),
            int(n_freq),
        )

    def ar1_filter(innov, rho):
        return ar1_filter_numba(
            np.ascontiguousarray(innov, dtype=np.float64),
            np.ascontiguousarray(rho, dtype=np.float64),
        )

    viterbi_decode = viterbi_decode_numba
else:
    cfr_sum = cfr_sum_numpy
    ar1_filter = ar1_filter_numpy
    viterbi_decode = viterbi_decode_numpy
