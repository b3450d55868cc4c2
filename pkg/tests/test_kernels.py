"""Both kernel backends against each other and against direct formulas."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mnvchan import _accel, kernels

needs_numba = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba backend not available")


def test_backend_name_matches_flag():
    assert _accel.BACKEND in ("numba", "numpy")
    if _accel.DISABLED:
        assert _accel.BACKEND == "numpy"


def test_cfr_sum_matches_direct_sum(gen):
    g = gen.standard_normal((5, 3)) + 1j * gen.standard_normal((5, 3))
    tau = gen.uniform(0, 2e-6, (5, 3))
    f0, df, Q = -1e6, 250e3, 9
    f = f0 + df * np.arange(Q)
    ref = np.einsum("tp,tpq->tq", g, np.exp(-2j * np.pi * tau[:, :, None] * f))
    np.testing.assert_allclose(kernels.cfr_sum_numpy(g, tau, f0, df, Q), ref, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(kernels.cfr_sum(g, tau, f0, df, Q), ref, rtol=1e-10, atol=1e-10)


def test_ar1_unit_variance_and_lag_one_correlation():
    e = np.random.default_rng(1).standard_normal((4000, 50))
    s = kernels.ar1_filter_numpy(e, np.full_like(e, 0.6))
    assert abs(s[:, -1].var() - 1) < 0.08
    assert abs(np.corrcoef(s[:, -2], s[:, -1])[0, 1] - 0.6) < 0.05


@needs_numba
@given(st.integers(1, 6), st.integers(1, 40), st.integers(0, 2**31))
def test_backends_agree(n_t, n_p, seed):
    r = np.random.default_rng(seed)
    g = r.standard_normal((n_t, n_p)) + 1j * r.standard_normal((n_t, n_p))
    tau = r.uniform(0, 4e-6, (n_t, n_p))
    a = kernels.cfr_sum_numpy(g, tau, -7.5e7, 250e3, 33)
    b = kernels.cfr_sum_numba(g, tau, -7.5e7, 250e3, 33)
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-9)
    e = r.standard_normal((n_t, n_p))
    rho = r.uniform(0, 1, (n_t, n_p))
    np.testing.assert_allclose(kernels.ar1_filter_numpy(e, rho), kernels.ar1_filter_numba(e, rho), rtol=1e-12)
    llr = r.standard_normal((n_t, 2 * (n_p + 6)))
    np.testing.assert_array_equal(kernels.viterbi_decode_numpy(llr), kernels.viterbi_decode_numba(llr))
