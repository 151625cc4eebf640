import numpy as np
import pytest

from evokan.bench import resample
from evokan.problems import NavierStokesSpec, make_initial_condition
from evokan.spectral import (
    BlowUpError,
    ConfigurationError,
    SpectralGrid,
    ac_spectral_step_imex,
    ac_spectral_step_sav,
    divergence,
    leray_project,
    nse_spectral_step,
    pressure_hat,
    advection_hat,
    sav_init_spectral,
    sav_modified_energy,
    vorticity,
)


def taylor_green(grid):
    X, Y = grid.mesh()
    return np.stack([-np.cos(2 * np.pi * X) * np.sin(2 * np.pi * Y), np.sin(2 * np.pi * X) * np.cos(2 * np.pi * Y)])


def test_grid_validation():
    with pytest.raises(ConfigurationError):
        SpectralGrid(100, 1)
    with pytest.raises(ConfigurationError):
        SpectralGrid(8, 1)
    SpectralGrid(48, 1)
    SpectralGrid(8, 1, min_n=4)


def test_cell_centred_nodes():
    g = SpectralGrid(16, 1)
    assert g.x[0] == pytest.approx(-1 + 1 / 16)
    assert g.points().shape == (16, 1)
    g2 = SpectralGrid(16, 2)
    P = g2.points()
    assert P.shape == (256, 2)
    # row-major: second coordinate varies fastest
    assert P[1, 0] == P[0, 0] and P[1, 1] > P[0, 1]


@pytest.mark.parametrize("dim", [1, 2])
def test_fft_round_trip(dim):
    g = SpectralGrid(32, dim)
    u = np.random.default_rng(dim).normal(size=g.shape)
    assert np.max(np.abs(g.ifft(g.fft(u)) - u)) < 1e-12 * np.max(np.abs(u))


def test_spectral_derivative_exact():
    g = SpectralGrid(32, 1)
    u = np.sin(3 * np.pi * g.x)
    du = g.ifft(g.diff(g.fft(u), 0))
    np.testing.assert_allclose(du, 3 * np.pi * np.cos(3 * np.pi * g.x), atol=1e-12)
    lap = g.ifft(g.laplacian(g.fft(u)))
    np.testing.assert_allclose(lap, -9 * np.pi**2 * u, atol=1e-10)


@pytest.mark.parametrize("scheme", ["imex", "sav"])
def test_ac_constant_equilibria(scheme):
    g = SpectralGrid(32, 1)
    for c in (-1.0, 1.0):
        u = np.full(g.shape, c)
        if scheme == "imex":
            out = ac_spectral_step_imex(u, 0.05, 1e-3, g)
        else:
            out = ac_spectral_step_sav(sav_init_spectral(u, 0.05, g), 0.05, 1e-3, g).u
        np.testing.assert_allclose(out, c, atol=1e-14)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_ac_blow_up_detected():
    g = SpectralGrid(16, 1)
    with pytest.raises(BlowUpError):
        ac_spectral_step_imex(np.full(16, 1e200), 0.05, 1e-3, g)


def _terminal(scheme, dt, T=0.1, eps=0.1, n=64):
    g = SpectralGrid(n, 1)
    u = 0.25 * np.sin(np.pi * g.x) + 0.1 * np.cos(2 * np.pi * g.x)
    steps = int(round(T / dt))
    if scheme == "imex":
        for _ in range(steps):
            u = ac_spectral_step_imex(u, eps, dt, g)
        return u
    st = sav_init_spectral(u, eps, g)
    for _ in range(steps):
        st = ac_spectral_step_sav(st, eps, dt, g)
    return st.u


@pytest.mark.parametrize("scheme", ["imex", "sav"])
def test_ac_first_order_self_convergence(scheme):
    u1, u2, u3 = (_terminal(scheme, dt) for dt in (1e-3, 5e-4, 2.5e-4))
    ratio = np.linalg.norm(u1 - u2) / np.linalg.norm(u2 - u3)
    assert abs(ratio - 2.0) < 0.2


@pytest.mark.parametrize("dt", [1e-3, 1e-2, 1e-1])
def test_sav_modified_energy_non_increasing(dt):
    eps = 0.02
    g = SpectralGrid(256, 1)
    st = sav_init_spectral(0.25 * np.sin(np.pi * g.x), eps, g)
    prev = sav_modified_energy(st, eps, g)
    for _ in range(int(round(1.0 / dt))):
        st = ac_spectral_step_sav(st, eps, dt, g)
        cur = sav_modified_energy(st, eps, g)
        assert cur <= prev * (1 + 1e-13)
        prev = cur


def test_taylor_green_decay():
    nu, dt, T = 0.05, 1e-3, 0.1
    g = SpectralGrid(64, 2)
    v0 = taylor_green(g)
    vh = g.fft(v0)
    for _ in range(int(round(T / dt))):
        vh = nse_spectral_step(vh, nu, dt, g)
    exact = v0 * np.exp(-8 * np.pi**2 * nu * T)
    assert np.max(np.abs(g.ifft(vh) - exact)) < 1e-6


def test_uniform_flow_unchanged():
    g = SpectralGrid(32, 2)
    vel = np.stack([np.full(g.shape, 0.3), np.full(g.shape, -0.2)])
    out = g.ifft(nse_spectral_step(g.fft(vel), 0.05, 1e-2, g))
    np.testing.assert_allclose(out, vel, atol=1e-14)


def test_nse_divergence_and_mean_conserved():
    nu, dt = 0.01, 2e-3
    g = SpectralGrid(128, 2)
    vel = make_initial_condition(NavierStokesSpec(nu))(g.points()).T.reshape((2,) + g.shape)
    vel = vel + np.array([0.1, -0.05])[:, None, None]
    vh = g.fft(vel)
    mean0 = vh[:, 0, 0].copy()
    for _ in range(int(round(0.2 / dt))):
        vh = nse_spectral_step(vh, nu, dt, g)
        assert np.max(np.abs(divergence(g.ifft(vh), g))) < 1e-10
    assert np.max(np.abs(vh[:, 0, 0] - mean0)) / g.n**2 < 1e-14


def test_nse_blow_up_guard():
    g = SpectralGrid(16, 2)
    vel = 1e4 * taylor_green(g)
    with pytest.raises(BlowUpError):
        nse_spectral_step(g.fft(vel), 0.0, 1e-3, g)


def test_pressure_balances_advection():
    g = SpectralGrid(32, 2)
    rng = np.random.default_rng(2)
    vh = leray_project(g.fft(rng.normal(size=(2,) + g.shape)), g)
    ah = advection_hat(vh, g)
    ph = pressure_hat(vh, g)
    # a + grad p is divergence-free
    total = np.stack([ah[a] + g.diff(ph, a) for a in range(2)])
    assert np.max(np.abs(divergence(g.ifft(total), g))) < 1e-10 * np.max(np.abs(g.ifft(ah)))


def test_vorticity_taylor_green():
    g = SpectralGrid(32, 2)
    X, Y = g.mesh()
    w = vorticity(taylor_green(g), g)
    np.testing.assert_allclose(w, 4 * np.pi * np.cos(2 * np.pi * X) * np.cos(2 * np.pi * Y), atol=1e-11)
    assert np.max(np.abs(vorticity(np.ones((2,) + g.shape), g))) < 1e-14


def test_vorticity_single_mode_energy():
    g = SpectralGrid(32, 2)
    X, Y = g.mesh()
    kx, ky = 2 * np.pi, 3 * np.pi
    psi = np.sin(kx * X + ky * Y)
    vel = np.stack([ky * np.cos(kx * X + ky * Y), -kx * np.cos(kx * X + ky * Y)])
    w = vorticity(vel, g)
    k2 = kx**2 + ky**2
    assert g.integrate(w**2) == pytest.approx(k2**2 * g.integrate(psi**2), rel=1e-12)
    assert g.integrate(w**2) == pytest.approx(k2 * g.integrate(np.sum(vel**2, 0)), rel=1e-12)


def test_resample_band_limited():
    fine, coarse = SpectralGrid(96, 2), SpectralGrid(32, 2)
    f = lambda G: np.sin(np.pi * G.mesh()[0]) * np.cos(3 * np.pi * G.mesh()[1])  # noqa: E731
    np.testing.assert_allclose(resample(f(fine), fine, coarse), f(coarse), atol=1e-13)
    fine = SpectralGrid(64, 2)
    np.testing.assert_allclose(resample(f(fine), fine, coarse), f(coarse), atol=1e-13)
