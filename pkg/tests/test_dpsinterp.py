import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.signal.windows import dpss

from mnvchan.dpsinterp import (
    BandRegion,
    DpsBasis,
    Interpolator,
    band_kernel,
    band_region,
    build_basis,
    estimate_coefficients,
    interpolate_link,
    interpolate_tensor,
    make_basis,
    plan_grids,
    preset_basis,
    preset_plan,
    reconstruct,
)
from mnvchan.errors import NumericalError, ValidationError
from mnvchan.synth import FREQ_CENTERED, ChannelTensor


def nmse_db(est, ref):
    return 10 * np.log10(np.sum(np.abs(est - ref) ** 2) / np.sum(np.abs(ref) ** 2))


@pytest.fixture(scope="module")
def desk():
    plan = preset_plan("desk")
    basis = preset_basis("desk", plan=plan)
    return plan, basis, Interpolator.build(plan, basis)


@pytest.fixture(scope="module")
def small():
    """A plan and basis small enough for exhaustive checks."""
    plan = plan_grids(500e-6, 100e-6, 250e3, 125e3, M_s=8, N_s=17, delta=2, N_e=16)
    band = BandRegion(0.02, 0.15)
    return plan, DpsBasis(*make_basis(plan.M_i, band.W_t, 4), *make_basis(plan.N_i, band.W_f, 6), band)


def sounding_paths(plan, taus, nus, amps, T, Q=64):
    m = np.arange(T)[:, None]
    f = (np.arange(Q) - Q // 2)[None, :] * plan.F_s
    return sum(a * np.exp(2j * np.pi * nu * m * plan.T_s) * np.exp(-2j * np.pi * f * tau)
               for tau, nu, a in zip(taus, nus, amps))


def emulation_paths(plan, taus, nus, amps, J):
    j = np.arange(J)[:, None]
    f = (np.arange(plan.N_e) - plan.N_e // 2)[None, :] * plan.F_e
    return sum(a * np.exp(2j * np.pi * nu * j * plan.T_e) * np.exp(-2j * np.pi * f * tau)
               for tau, nu, a in zip(taus, nus, amps))


# --- grid planning ---------------------------------------------------------


def test_plan_time_ratios():
    p = plan_grids(500e-6, 50e-9, 250e3, 156.25e3, M_s=64, N_s=601, delta=4, N_e=128)
    assert p.T_i == pytest.approx(50e-9, rel=1e-12)
    assert (p.r_t_s, p.r_t_e) == (10000, 1)


def test_plan_frequency_ratios():
    p = plan_grids(500e-6, 50e-9, 250e3, 156.25e3, M_s=64, N_s=601, delta=4, N_e=128)
    assert p.F_i == pytest.approx(31.25e3, rel=1e-12)
    assert (p.r_f_s, p.r_f_e) == (8, 5)


def test_plan_block_length_example():
    p = plan_grids(500e-6, 50e-9, 250e3, 156.25e3, M_s=64, N_s=601, delta=4, N_e=128)
    assert p.M_i == 72000


def test_plan_frequency_size_is_exact_product():
    p = plan_grids(500e-6, 50e-9, 250e3, 156.25e3, M_s=64, N_s=601, delta=4, N_e=128)
    assert p.N_i == 4808


def test_plan_frequency_size_can_be_truncated():
    p = plan_grids(500e-6, 50e-9, 250e3, 156.25e3, M_s=64, N_s=601, delta=4, N_e=128, n_i=4800)
    assert p.N_i == 4800
    assert p.N_s == 600
    assert p.obs_freq_index()[-1] < p.N_i


@given(st.integers(1, 40), st.integers(1, 40), st.integers(1, 30), st.integers(1, 30),
       st.integers(1, 12), st.integers(0, 5))
def test_plan_invariants(ts_ns, te_ns, fs_khz, fe_khz, M_s, delta):
    T_s, T_e = ts_ns * 1e-9 * te_ns, te_ns * 1e-9  # T_s a multiple of T_e keeps blocks tileable
    F_s, F_e = fs_khz * 1e3 * 4, fe_khz * 1e3
    N_s = 64
    try:
        p = plan_grids(T_s, T_e, F_s, F_e, M_s=M_s, N_s=N_s, delta=delta, N_e=4)
    except ValidationError:
        return
    assert p.T_s == pytest.approx(p.r_t_s * p.T_i, rel=1e-9)
    assert p.T_e == pytest.approx(p.r_t_e * p.T_i, rel=1e-9)
    assert p.F_s == pytest.approx(p.r_f_s * p.F_i, rel=1e-9)
    assert p.F_e == pytest.approx(p.r_f_e * p.F_i, rel=1e-9)
    assert np.gcd(p.r_t_s, p.r_t_e) == 1 and np.gcd(p.r_f_s, p.r_f_e) == 1
    assert p.M_i == (M_s + 2 * delta) * p.r_t_s
    assert p.N_i == N_s * p.r_f_s


@pytest.mark.parametrize("T_s,F_s", [(500.5e-9, 250e3), (500e-6, 250.5), (-1.0, 250e3)])
def test_plan_incommensurate_spacings_raise(T_s, F_s):
    with pytest.raises(ValidationError):
        plan_grids(T_s, 50e-9, F_s, 156.25e3, M_s=4, N_s=61, delta=1, N_e=4)


def test_band_region_values():
    p = preset_plan("desk")
    b = band_region(p, 5.9e9, 27.8, 3e-6)
    assert b.nu_max == pytest.approx(5e-6 * 5.9e9 * 27.8 / 299792458.0, rel=1e-12)
    assert b.theta_max == pytest.approx(31.25e3 * 3e-6, rel=1e-12)
    with pytest.raises(ValidationError):
        BandRegion(0.6, 0.1)
    with pytest.raises(ValidationError):
        BandRegion(0.1, 0.0)


# --- DPS sequences ---------------------------------------------------------


def test_kernel_diagonal_and_sinc():
    W = 0.13
    K = band_kernel(40, (-W, W))
    assert np.allclose(np.diag(K), 2 * W)
    d = np.subtract.outer(np.arange(40), np.arange(40))
    assert np.allclose(K, 2 * W * np.sinc(2 * W * d), atol=1e-13)


@pytest.mark.parametrize("method", ["tridiagonal", "dense"])
def test_symmetric_band_gives_classical_sequences(method):
    M, W, D = 48, 0.08, 6
    U, lam = make_basis(M, (-W, W), D, method=method)
    assert np.isrealobj(U)
    ref = dpss(M, W * M, Kmax=D, norm=2).T
    for k in range(D):
        c = np.dot(U[:, k], ref[:, k])
        assert abs(c) == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("band", [(-0.1, 0.1), (-0.2, 0.0), (0.05, 0.3)])
@pytest.mark.parametrize("method", ["tridiagonal", "dense"])
def test_basis_orthonormal(band, method):
    U, _ = make_basis(64, band, 12, method=method)
    assert np.abs(U.conj().T @ U - np.eye(12)).max() < 1e-8


def test_concentration_eigenvalues_fall_off():
    _, lam = make_basis(64, (-0.1, 0.1), 16)
    assert np.all(np.diff(lam) <= 1e-12)
    assert lam[0] > 0.99 and lam[-1] < 0.01


def test_concentration_eigenvalues_near_one_up_to_shannon_number():
    M, W, D = 64, 0.1, 16
    _, lam = make_basis(M, (-W, W), D)
    n = int(np.floor(2 * W * M))
    assert np.all(lam[: n + 1] > 0.99)


def test_eigenvalues_match_kernel_rayleigh_quotients():
    band = (-0.25, -0.05)
    U, lam = make_basis(50, band, 8)
    K = band_kernel(50, band)
    rq = np.real(np.einsum("mk,mn,nk->k", U.conj(), K, U))
    assert np.allclose(rq, lam, atol=1e-10)


def test_dense_and_tridiagonal_span_the_same_subspace():
    band = (-0.2, 0.0)
    U1, l1 = make_basis(60, band, 10, method="dense")
    U2, l2 = make_basis(60, band, 10, method="tridiagonal")
    assert np.allclose(l1, l2, atol=1e-9)
    assert np.abs(U1 @ U1.conj().T - U2 @ U2.conj().T).max() < 1e-8


def test_make_basis_rejects_bad_input():
    with pytest.raises(ValidationError):
        make_basis(10, (-0.6, 0.5), 2)
    with pytest.raises(ValidationError):
        make_basis(10, (-0.1, 0.1), 11)
    with pytest.raises(ValidationError):
        make_basis(10, (-0.1, 0.1), 2, method="qr")


def test_default_dims():
    plan = preset_plan("desk")
    band = band_region(plan, 5.9e9, 27.8, 3e-6)
    b = build_basis(plan, band)
    assert b.D_f == int(np.ceil(band.theta_max * plan.N_i))
    assert b.D_t == int(np.ceil(2 * band.nu_max * plan.M_i)) + 1


# --- least squares ---------------------------------------------------------


def random_psi(basis, gen):
    return gen.standard_normal(basis.D_t * basis.D_f) + 1j * gen.standard_normal(basis.D_t * basis.D_f)


def test_estimate_exact_on_full_grid(small, gen):
    plan, basis = small
    psi = random_psi(basis, gen)
    t, f = np.arange(plan.M_i), np.arange(plan.N_i)
    y = reconstruct(psi, plan, basis, t, f)
    est = estimate_coefficients(y, plan, basis, t, f)
    assert np.linalg.norm(est - psi) / np.linalg.norm(psi) < 1e-9


def test_estimate_exact_on_sounding_grid(small, gen):
    plan, basis = small
    psi = random_psi(basis, gen)
    y = reconstruct(psi, plan, basis, plan.obs_time_index(), plan.obs_freq_index())
    est = estimate_coefficients(y, plan, basis)
    assert np.linalg.norm(est - psi) / np.linalg.norm(psi) < 1e-8


def test_estimate_error_falls_with_more_observations(small, gen):
    plan, basis = small
    f = plan.obs_freq_index()
    t_all = np.arange(plan.M_i)
    errors = []
    for frac in (0.25, 0.5, 1.0):
        t = t_all[:: int(round(1 / frac))]
        e = 0.0
        for _ in range(200):
            psi = random_psi(basis, gen)
            y = reconstruct(psi, plan, basis, t, f)
            y = y + 0.1 * (gen.standard_normal(y.shape) + 1j * gen.standard_normal(y.shape))
            e += np.sum(np.abs(estimate_coefficients(y, plan, basis, t, f) - psi) ** 2)
        errors.append(e / 200)
    assert errors[0] > errors[1] > errors[2]


def test_estimate_rank_deficiency(small):
    plan, basis = small
    t = np.array([0, 0, 0, 0, 0])
    with pytest.raises(NumericalError, match="rank"):
        estimate_coefficients(np.ones((5, plan.N_s)), plan, basis, t_idx=t)
    with pytest.raises(NumericalError):
        estimate_coefficients(np.ones((2, 2)), plan, basis, t_idx=[0, 1], f_idx=[0, 1])


def test_estimate_shape_mismatch(small):
    plan, basis = small
    with pytest.raises(ValidationError):
        estimate_coefficients(np.ones((3, 3)), plan, basis)


def test_identity_round_trip(small, gen):
    plan, basis = small
    psi = random_psi(basis, gen)
    t, f = plan.obs_time_index(), plan.obs_freq_index()
    y = reconstruct(psi, plan, basis, t, f)
    back = reconstruct(estimate_coefficients(y, plan, basis), plan, basis, t, f)
    assert np.abs(back - y).max() / np.abs(y).max() < 1e-8


def test_subspace_reproduction_in_interior(small, gen):
    plan, basis = small
    psi = random_psi(basis, gen)
    y = reconstruct(psi, plan, basis, plan.obs_time_index(), plan.obs_freq_index())
    out = Interpolator.build(plan, basis).apply(y)
    ref = reconstruct(psi, plan, basis)
    assert np.linalg.norm(out - ref) / np.linalg.norm(ref) < 1e-8


@given(st.integers(0, 2**31 - 1), st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False))
def test_linearity(seed, a):
    plan = plan_grids(500e-6, 100e-6, 250e3, 125e3, M_s=8, N_s=17, delta=2, N_e=16)
    band = BandRegion(0.02, 0.15)
    basis = DpsBasis(*make_basis(plan.M_i, band.W_t, 4), *make_basis(plan.N_i, band.W_f, 6), band)
    g = np.random.default_rng(seed)
    shape = (plan.M_o, plan.N_s)
    y1 = g.standard_normal(shape) + 1j * g.standard_normal(shape)
    y2 = g.standard_normal(shape) + 1j * g.standard_normal(shape)
    lhs = reconstruct(estimate_coefficients(a * y1 + y2, plan, basis), plan, basis)
    rhs = a * reconstruct(estimate_coefficients(y1, plan, basis), plan, basis) \
        + reconstruct(estimate_coefficients(y2, plan, basis), plan, basis)
    assert np.abs(lhs - rhs).max() <= 1e-9 * max(1.0, np.abs(rhs).max())


# --- block interpolation ---------------------------------------------------


def test_single_in_band_path(desk):
    plan, _, interp = desk
    g = sounding_paths(plan, [1e-6], [200.0], [1.0], T=200)
    out = interpolate_link(g, plan, interp)
    assert nmse_db(out, emulation_paths(plan, [1e-6], [200.0], [1.0], out.shape[0])) <= -40


@pytest.mark.parametrize("tau,nu", [(5e-6, 200.0), (-1e-6, 200.0), (1e-6, 900.0)])
def test_out_of_band_path_degrades(desk, tau, nu):
    plan, _, interp = desk
    g = sounding_paths(plan, [tau], [nu], [1.0], T=200)
    out = interpolate_link(g, plan, interp)
    assert nmse_db(out, emulation_paths(plan, [tau], [nu], [1.0], out.shape[0])) >= -10


def test_adjacent_blocks_agree_on_overlap(desk, gen):
    plan, _, interp = desk
    n = 6
    taus = gen.uniform(0, 2.8e-6, n)
    nus = gen.uniform(-450, 450, n)
    amps = gen.standard_normal(n) + 1j * gen.standard_normal(n)
    g = sounding_paths(plan, taus, nus, amps, T=200)[:, 32 - plan.N_s // 2: 32 - plan.N_s // 2 + plan.N_s]
    b = 3
    s0 = b * plan.M_s - plan.delta
    s1 = s0 + plan.M_s
    # emulation instants shared by both windows, away from their edges
    t = np.arange((s1 + plan.delta) * plan.r_t_s, (s0 + plan.M_s + plan.delta) * plan.r_t_s + 1)
    a = interp.apply(g[s0:s0 + plan.M_o], t - s0 * plan.r_t_s)
    c = interp.apply(g[s1:s1 + plan.M_o], t - s1 * plan.r_t_s)
    assert nmse_db(a, c) <= -35


def test_interpolate_link_length_and_edges(desk):
    plan, _, interp = desk
    g = sounding_paths(plan, [0.5e-6], [-300.0], [1.0], T=37)
    out = interpolate_link(g, plan, interp)
    assert out.shape == ((37 - 1) * plan.r_t_s + 1, plan.N_e)
    assert nmse_db(out, emulation_paths(plan, [0.5e-6], [-300.0], [1.0], out.shape[0])) <= -40


def test_interpolate_link_too_short(desk):
    plan, _, interp = desk
    with pytest.raises(ValidationError):
        interpolate_link(np.ones((plan.M_o - 1, 64), complex), plan, interp)


def test_interpolate_tensor_grid_mismatch(desk):
    plan, basis, _ = desk
    t = ChannelTensor([(1, 2)], np.ones((1, 40, 64), complex), 1e-3, 250e3, 5.9e9, 2, FREQ_CENTERED, {})
    with pytest.raises(ValidationError):
        interpolate_tensor(t, plan, basis)


def test_round_trip_back_to_source_grid(gen):
    """Interpolating onto the sounding grid itself reproduces in-band tensors."""
    plan = plan_grids(500e-6, 500e-6, 250e3, 250e3, M_s=16, N_s=61, delta=4, N_e=61)
    basis = build_basis(plan, band_region(plan, 5.9e9, 27.8, 3e-6), margin=4)
    n = 5
    taus, nus = gen.uniform(0, 2.8e-6, n), gen.uniform(-450, 450, n)
    amps = gen.standard_normal(n) + 1j * gen.standard_normal(n)
    g = sounding_paths(plan, taus, nus, amps, T=120, Q=61)
    t = ChannelTensor([(1, 2)], g[None], 500e-6, 250e3, 5.9e9, 2, FREQ_CENTERED, {})
    out = interpolate_tensor(t, plan, basis)
    assert out.data.shape == t.data.shape
    assert nmse_db(out.data, t.data) <= -35
