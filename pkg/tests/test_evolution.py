import numpy as np
import pytest

from evokan.evolution import (
    EULER,
    RK4,
    CollocationSet,
    EvolutionConfig,
    EvolutionState,
    FitConfig,
    assemble_normal_system,
    evolve_step,
    fit_initial,
    least_squares_direction,
    run,
    solve_direction,
)
from evokan.network import Network, init_params, network_forward, param_jacobian
from evokan.problems import (
    AllenCahnResidual,
    AllenCahnSpec,
    HeatResidual,
    ResidualOperator,
    make_initial_condition,
)
from evokan.splines import basis_functions


class Decay(ResidualOperator):
    """``u_t = -u``."""

    def __call__(self, jet, points, grid_shape=None):
        return -jet.value


def constant_one_kan():
    net = Network((1, 1), embedding="identity", grid=5)
    p = net.flatten([[np.concatenate([np.ones(net.n_basis), [0.0, 1.0]]).reshape(1, 1, -1)]])
    return net, p


# ------------------------------------------------------------------ configs


@pytest.mark.parametrize("kw", [{"dt": 0.0}, {"dt": -1e-3}, {"integrator": "rk2"}, {"snapshot_every": 0},
                                {"regularization": -1.0}, {"dt": 0.1, "T": 0.01}])
def test_evolution_config_rejects(kw):
    with pytest.raises(ValueError):
        EvolutionConfig(**kw)


def test_collocation_grid_and_random():
    c = CollocationSet.uniform_grid(8, 2)
    assert c.points.shape == (64, 2) and c.grid_shape == (8, 8)
    assert c.cell_volume == pytest.approx(4 / 64)
    r = CollocationSet.uniform_random(50, 1, seed=3, resample=True)
    assert np.array_equal(r.points, CollocationSet.uniform_random(50, 1, seed=3).points)
    assert not np.array_equal(r.at_step(1).points, r.points)
    assert c.at_step(5) is c
    with pytest.warns(UserWarning):
        CollocationSet.uniform_grid(8, 1).check_size(100)


# ----------------------------------------------------------- linear algebra


def test_solve_direction_trivial():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(5, 5))
    A = A @ A.T + np.eye(5)
    assert not solve_direction(A, np.zeros(5)).any()
    b = rng.normal(size=5)
    np.testing.assert_array_equal(solve_direction(np.eye(5), b, lam=0.0), b)


def test_rank_deficient_against_pinv():
    net = Network((1, 2, 1), embedding="identity", grid=4)
    assert net.n_params <= 50
    p = init_params(net, 1) + 0.1 * np.random.default_rng(1).normal(size=net.n_params)
    X = np.repeat(np.linspace(-0.9, 0.9, 8), 2)
    J = param_jacobian(net, p, X)
    N = np.random.default_rng(2).normal(size=len(X))
    A, b = J.T @ J, J.T @ N
    g_pinv = np.linalg.pinv(A) @ b
    floor = np.linalg.norm(A @ g_pinv - b)
    g = solve_direction(A, b, 0.0)
    assert np.linalg.norm(A @ g - b) <= floor + 1e-8
    # with Tikhonov the normal residual is exactly lam * s * gamma; the
    # least-squares objective itself still matches the pseudoinverse
    g = solve_direction(A, b, 1e-8)
    s = np.trace(A) / len(A)
    np.testing.assert_allclose(A @ g - b, -1e-8 * s * g, atol=1e-12)
    assert np.linalg.norm(J @ g - N) <= np.linalg.norm(J @ g_pinv - N) + 1e-8


def test_dual_form_matches_primal():
    rng = np.random.default_rng(5)
    J = rng.normal(size=(10, 30))
    N = rng.normal(size=10)
    A, b = J.T @ J, J.T @ N
    g_primal = solve_direction(A, b, 1e-6)
    g_dual = least_squares_direction(J, N, 1e-6)
    np.testing.assert_allclose(g_dual, g_primal, rtol=1e-8, atol=1e-10)


def test_assembled_system():
    net = Network((1, 3, 1), grid=5)
    p = init_params(net, 3)
    colloc = CollocationSet.uniform_grid(16, 1)
    A, b = assemble_normal_system(net, p, AllenCahnResidual(AllenCahnSpec(1, 0.1)), colloc)
    assert np.max(np.abs(A - A.T)) == 0.0
    h = 1e-6
    base = network_forward(net, p, colloc.points).ravel()
    Jfd = np.empty((16, net.n_params))
    for j in range(net.n_params):
        q = p.copy()
        q[j] += h
        Jfd[:, j] = (network_forward(net, q, colloc.points).ravel() - base) / h
    Afd = Jfd.T @ Jfd
    assert np.linalg.norm(A - Afd) / np.linalg.norm(Afd) < 1e-5


def test_zero_rhs_gives_zero_b():
    net, p = constant_one_kan()
    A, b = assemble_normal_system(net, p, AllenCahnResidual(AllenCahnSpec(1, 0.1)),
                                  CollocationSet.uniform_grid(16, 1))
    assert np.max(np.abs(b)) < 1e-12


# ------------------------------------------------------------------ fitting


def test_fit_exact_target_is_immediate():
    net = Network((1, 3, 1), grid=4)
    colloc = CollocationSet.uniform_grid(16, 1)
    res = fit_initial(net, lambda X: np.zeros((len(X), 1)), colloc, params0=np.zeros(net.n_params))
    assert res.rms == 0.0 and res.iterations == 0 and res.converged


def test_fit_ac_initial_condition():
    spec = AllenCahnSpec(1, 0.02)
    net = Network((1, 8, 8, 1))
    res = fit_initial(net, make_initial_condition(spec), CollocationSet.uniform_grid(256, 1),
                      FitConfig(max_iter=200, tol=1e-4))
    assert res.converged and res.rms < 1e-4 and res.iterations <= 200
    assert all(b <= a for a, b in zip(res.history, res.history[1:]))


def test_fit_reports_non_convergence():
    net = Network((1, 1), embedding="identity", grid=3)
    colloc = CollocationSet.uniform_grid(64, 1)
    with pytest.warns(UserWarning):
        res = fit_initial(net, lambda X: np.sign(X), colloc, FitConfig(max_iter=5, tol=1e-12))
    assert not res.converged


# ----------------------------------------------------------------- stepping


def test_galerkin_oracle_heat():
    net = Network((1, 1), embedding="identity", edge_scales=False, grid=12, order=3)
    assert net.n_params <= 20
    colloc = CollocationSet.uniform_grid(64, 1)
    x = colloc.points[:, 0]
    c = np.random.default_rng(7).normal(size=net.n_params)
    Phi, _, Phi2 = basis_functions(net.knots[0], x, derivatives=2)
    c_dot = np.linalg.lstsq(Phi, Phi2 @ c, rcond=None)[0]
    cfg = EvolutionConfig(dt=1e-4, T=1e-4, integrator=EULER, regularization=0.0)
    new, s1 = evolve_step(EvolutionState(c.copy(), dt=cfg.dt), net, HeatResidual(1.0), colloc, cfg)
    assert np.linalg.norm(s1.gamma - c_dot) / np.linalg.norm(c_dot) < 1e-8
    np.testing.assert_allclose(new.params, c + cfg.dt * c_dot, rtol=0, atol=1e-8)


def test_rk4_scalar_surrogate():
    net = Network((1, 1), backend="mlp", embedding="identity")
    p0 = np.array([0.7, -0.3])
    colloc = CollocationSet.uniform_grid(16, 1)
    cfg = EvolutionConfig(dt=0.1, T=1.0, integrator=RK4, regularization=0.0)
    st = EvolutionState(p0.copy(), dt=cfg.dt)
    for _ in range(10):
        st, _ = evolve_step(st, net, Decay(), colloc, cfg)
    amp = 1 - 0.1 + 0.1**2 / 2 - 0.1**3 / 6 + 0.1**4 / 24
    np.testing.assert_allclose(st.params, amp**10 * p0, rtol=1e-13)
    # RK4 truncation at dt = 0.1 is 3.3e-7 relative, so e^-1 is matched to 1e-6
    np.testing.assert_allclose(st.params, np.exp(-1) * p0, rtol=1e-6)
    assert st.t == pytest.approx(1.0, abs=1e-15)


def test_stationary_state():
    net, p = constant_one_kan()
    cfg = EvolutionConfig(dt=1e-3, T=1e-3)
    new, _ = evolve_step(EvolutionState(p.copy(), dt=cfg.dt), net, AllenCahnResidual(AllenCahnSpec(1, 0.02)),
                         CollocationSet.uniform_grid(64, 1), cfg)
    assert np.max(np.abs(new.params - p)) < 1e-12


def test_blow_up_guard():
    net = Network((1, 1), backend="mlp", embedding="identity")
    res = run(Decay(), net, EvolutionConfig(dt=0.1, T=0.1), CollocationSet.uniform_grid(8, 1),
              params0=np.array([0.0, 20.0]), raise_errors=False)
    assert res.error is not None and len(res.trajectory) == 1


# --------------------------------------------------------------------- runs


def small_ac_run(out_dir=None, sav=False, T=0.02):
    spec = AllenCahnSpec(1, 0.1)
    net = Network((1, 4, 1), grid=5)
    cfg = EvolutionConfig(dt=1e-3, T=T, sav=sav, snapshot_every=5)
    return run(AllenCahnResidual(spec), net, cfg, CollocationSet.uniform_grid(32, 1),
               ic=make_initial_condition(AllenCahnSpec(1, 0.1, amplitude=0.5)),
               fit_cfg=FitConfig(max_iter=30, tol=1e-4), out_dir=out_dir)


def test_single_step_trajectory():
    net = Network((1, 1), backend="mlp", embedding="identity")
    res = run(Decay(), net, EvolutionConfig(dt=0.05, T=0.05, snapshot_every=1), CollocationSet.uniform_grid(8, 1),
              params0=np.array([0.2, 0.1]))
    assert [s.t for s in res.trajectory] == [0.0, 0.05]


@pytest.mark.filterwarnings("ignore::UserWarning")
def test_run_outputs_and_determinism(tmp_path):
    a = small_ac_run(tmp_path / "a")
    small_ac_run(tmp_path / "b")
    da = (tmp_path / "a" / "diagnostics.csv").read_bytes()
    assert da == (tmp_path / "b" / "diagnostics.csv").read_bytes()
    assert len(da.splitlines()) == 21
    snaps = sorted((tmp_path / "a" / "snapshots").iterdir())
    assert [s.name for s in snaps] == ["snap_000000.evks", "snap_000005.evks", "snap_000010.evks",
                                       "snap_000015.evks", "snap_000020.evks"]
    assert len(a.trajectory) == 5
    assert (tmp_path / "a" / "timing.csv").exists()


@pytest.mark.filterwarnings("ignore::UserWarning")
def test_sav_run_modified_energy():
    res = small_ac_run(sav=True, T=0.05)
    assert res.state.sav.r > 0
    m = [row[5] for row in res.diagnostics]
    for prev, cur in zip(m, m[1:]):
        assert cur <= prev * (1 + 1e-3)
