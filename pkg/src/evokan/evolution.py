"""Parameter-space time stepping: fit the initial state, then follow the PDE.

At every stage the parameter velocity ``gamma`` minimises ``|J gamma - N|``
over the collocation points, where ``J`` is the value Jacobian of the network
and ``N`` the PDE right-hand side evaluated from network jets.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.linalg as sla

from . import io
from .network import Network, evaluate, network_forward, param_jacobian
from .problems import (
    AllenCahnResidual,
    FieldSnapshot,
    GradientFlowForm,
    ResidualOperator,
    SavState,
    double_well,
    double_well_prime,
)
from .spectral import BlowUpError, SpectralGrid

log = logging.getLogger(__name__)

EULER = "euler"
RK4 = "rk4"
BLOWUP_LIMIT = 10.0


class SingularSystemError(np.linalg.LinAlgError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


# ---------------------------------------------------------------- collocation


@dataclass
class CollocationSet:
    points: np.ndarray
    mode: str = "grid"
    grid_shape: tuple[int, ...] | None = None
    half_width: float = 1.0
    seed: int | None = None
    resample: bool = False

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.points.shape[0] == 0:
            raise ValueError("collocation set must be nonempty")

    @classmethod
    def uniform_grid(cls, n: int, dim: int, half_width: float = 1.0) -> "CollocationSet":
        grid = SpectralGrid(n, dim, half_width, min_n=4)
        return cls(grid.points(), "grid", grid.shape, half_width)

    @classmethod
    def uniform_random(cls, count: int, dim: int, seed: int = 0, half_width: float = 1.0,
                       resample: bool = False) -> "CollocationSet":
        rng = np.random.default_rng(seed)
        pts = rng.uniform(-half_width, half_width, (count, dim))
        return cls(pts, "random", None, half_width, seed, resample)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def cell_volume(self) -> float:
        """Quadrature weight per point (rectangle rule or Monte Carlo)."""
        return (2.0 * self.half_width) ** self.dim / len(self.points)

    def at_step(self, step: int) -> "CollocationSet":
        if not (self.resample and self.mode == "random"):
            return self
        return CollocationSet.uniform_random(len(self.points), self.dim, (self.seed or 0) + step,
                                             self.half_width, True)

    def check_size(self, n_params: int) -> None:
        if len(self.points) < n_params / 4:
            warnings.warn(f"{len(self.points)} collocation points for {n_params} parameters; "
                          "the least-squares projection is heavily underdetermined", stacklevel=2)


# ------------------------------------------------------------------ configs


@dataclass(frozen=True)
class EvolutionConfig:
    dt: float = 1e-4
    T: float = 1.0
    integrator: str = RK4
    regularization: float = 1e-8
    sav: bool = False
    snapshot_every: int = 10

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.T >= self.dt * (1 - 1e-12):
            raise ValueError(f"final time T={self.T} is shorter than dt={self.dt}")
        if self.integrator not in (EULER, RK4):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if self.regularization < 0:
            raise ValueError("regularization must be >= 0")
        if self.snapshot_every < 1:
            raise ValueError("snapshot_every must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass(frozen=True)
class FitConfig:
    max_iter: int = 200
    tol: float = 1e-5
    damping: float = 1e-3
    up: float = 10.0
    down: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if not (self.tol > 0 and self.damping > 0 and self.up > 1 and self.down > 1):
            raise ValueError("fit tolerances and damping factors must be positive (factors > 1)")
        if self.max_iter < 0:
            raise ValueError("max_iter must be >= 0")


@dataclass
class EvolutionState:
    params: np.ndarray
    sav: SavState | None = None
    step: int = 0
    dt: float = 0.0

    @property
    def t(self) -> float:
        # product, not running sum: no accumulation error
        return self.step * self.dt


# ------------------------------------------------------------- linear algebra


def _factor_solve(M: np.ndarray, rhs: np.ndarray, lam: float, scale: float, dim: int):
    """Cholesky solve of ``(M + lam * scale * I) x = rhs``, raising ``lam`` on failure."""
    last = None
    for attempt in range(4):
        try:
            Mr = M + (lam * scale) * np.eye(dim)
            c = sla.cho_factor(Mr, lower=False, check_finite=True)
            return sla.cho_solve(c, rhs), lam
        except (np.linalg.LinAlgError, ValueError) as err:
            last = err
            lam = max(lam * 10.0, 1e-14)
    cond = np.linalg.cond(M) if np.all(np.isfinite(M)) else np.inf
    raise SingularSystemError(f"normal equations not factorisable ({last}); cond={cond:.3g}", cond)


def solve_direction(A: np.ndarray, b: np.ndarray, lam: float = 1e-8) -> np.ndarray:
    """Solve ``(A + lam * s * I) gamma = b`` with ``s = trace(A) / n``."""
    n = A.shape[0]
    s = np.trace(A) / n if n else 0.0
    s = s if s > 0 else 1.0
    gamma, _ = _factor_solve(A, b, lam, s, n)
    return gamma


def least_squares_direction(J: np.ndarray, N: np.ndarray, lam: float = 1e-8) -> np.ndarray:
    """Regularised ``argmin |J gamma - N|``; identical to :func:`solve_direction` on ``(J^T J, J^T N)``.

    For wide ``J`` the push-through identity
    ``(J^T J + c I)^{-1} J^T = J^T (J J^T + c I)^{-1}`` gives the same vector
    from a rows-by-rows factorisation.
    """
    m, n = J.shape
    if m >= n or lam == 0:
        A, b = normal_system(J, N)
        return solve_direction(A, b, lam)
    K = _gram(J)
    s = np.trace(K) / n
    s = s if s > 0 else 1.0
    y, _ = _factor_solve(K, N, lam, s, m)
    return J.T @ y


def normal_system(J: np.ndarray, N: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(J^T J, J^T N)`` with an exactly symmetric Gram matrix."""
    return _gram(np.asarray(J, dtype=float).T), J.T @ N


def _gram(M: np.ndarray) -> np.ndarray:
    """``M M^T``, mirrored from its upper triangle so it is exactly symmetric."""
    U = M @ M.T
    return np.triu(U) + np.triu(U, 1).T


# ------------------------------------------------------------------- fitting


@dataclass
class FitResult:
    params: np.ndarray
    rms: float
    iterations: int
    converged: bool
    history: list[float] = field(default_factory=list)


def fit_initial(net: Network, ic: Callable, colloc: CollocationSet, cfg: FitConfig = FitConfig(),
                params0: np.ndarray | None = None) -> FitResult:
    """Levenberg-Marquardt fit of the network to ``ic`` at the collocation points.

    Not reaching ``cfg.tol`` is reported through ``converged`` and a warning;
    the best parameters found are returned either way.
    """
    from .network import init_params

    X = colloc.points
    target = np.asarray(ic(X), dtype=float).reshape(len(X), -1)
    p = init_params(net, cfg.seed) if params0 is None else np.array(params0, dtype=float)

    def resid(q):
        return (network_forward(net, q, X) - target).ravel()

    r = resid(p)
    loss = float(r @ r)
    rms = np.sqrt(loss / r.size)
    history = [rms]
    lam = cfg.damping
    it = 0
    while it < cfg.max_iter and rms >= cfg.tol:
        it += 1
        J = param_jacobian(net, p, X)
        while True:
            try:
                step = least_squares_direction(J, -r, lam)
            except SingularSystemError:
                lam *= cfg.up
                continue
            q = p + step
            rq = resid(q)
            lq = float(rq @ rq)
            if np.isfinite(lq) and lq < loss:
                p, r, loss = q, rq, lq
                lam = max(lam / cfg.down, 1e-12)
                break
            lam *= cfg.up
            if lam > 1e12:
                break
        rms = np.sqrt(loss / r.size)
        history.append(rms)
        if lam > 1e12:
            break
    converged = bool(rms < cfg.tol)
    if not converged:
        warnings.warn(f"initial fit stopped at RMS {rms:.3e} after {it} iterations (target {cfg.tol:.1e})",
                      stacklevel=2)
    log.info("initial fit: RMS %.3e after %d iterations", rms, it)
    return FitResult(p, float(rms), it, converged, history)


# ------------------------------------------------------------------ stepping


@dataclass
class StageResult:
    gamma: np.ndarray
    r_t: float
    residual_norm: float
    rhs_norm: float
    energy: float
    modified_energy: float
    max_abs: float


def assemble_normal_system(net: Network, params, op: ResidualOperator, colloc: CollocationSet):
    """``(J^T J, J^T N)`` at the collocation points."""
    jet, J = evaluate(net, params, colloc.points)
    N = _rhs(op, jet, colloc)
    if not np.all(np.isfinite(N)):
        raise BlowUpError("non-finite PDE residual")
    return normal_system(J, N.ravel())


def _rhs(op: ResidualOperator, jet, colloc: CollocationSet) -> np.ndarray:
    if op.needs_grid and colloc.grid_shape is None:
        raise ValueError(f"{type(op).__name__} requires grid collocation")
    return np.asarray(op(jet, colloc.points, colloc.grid_shape)).reshape(len(colloc.points), -1)


def _ac_energies(op: AllenCahnResidual, jet, colloc: CollocationSet):
    u = jet.value[:, 0]
    w = colloc.cell_volume
    eps = op.spec.eps
    quad = 0.5 * eps**2 * float(np.sum(jet.grad[:, 0, :] ** 2)) * w
    e1 = float(np.sum(double_well(u, eps))) * w + op.spec.shift
    return quad, e1


def stage(net: Network, params, r, op: ResidualOperator, colloc: CollocationSet, lam: float,
          sav: bool) -> StageResult:
    """Parameter velocity (and ``r_t`` in SAV mode) at one state."""
    jet, J = evaluate(net, params, colloc.points)
    max_abs = float(np.max(np.abs(jet.value)))
    if not np.isfinite(max_abs) or max_abs > BLOWUP_LIMIT:
        raise BlowUpError(f"network output magnitude {max_abs:.3g} exceeds {BLOWUP_LIMIT}")
    energy = modified = float("nan")
    r_t = 0.0
    if isinstance(op, AllenCahnResidual):
        quad, e1 = _ac_energies(op, jet, colloc)
        energy = quad + e1 - op.spec.shift
    if sav:
        if not isinstance(op, AllenCahnResidual):
            raise ValueError("SAV mode is only defined for the Allen-Cahn gradient flow")
        if not r > 0:
            raise BlowUpError(f"auxiliary variable left (0, inf): r={r}")
        u = jet.value[:, 0]
        U = double_well_prime(u, op.spec.eps)
        mu = op.form.apply_L_jet(jet)[:, 0] + (r / np.sqrt(e1)) * U
        N = op.form.mobility(mu)[:, None]
        modified = quad + r * r
    else:
        N = _rhs(op, jet, colloc)
    if not np.all(np.isfinite(N)):
        raise BlowUpError("non-finite PDE residual")
    Nf = N.ravel()
    gamma = least_squares_direction(J, Nf, lam)
    if not np.all(np.isfinite(gamma)):
        raise BlowUpError("non-finite parameter velocity")
    tend = J @ gamma
    res = float(np.linalg.norm(tend - Nf))
    rhs = float(np.linalg.norm(Nf))
    if res > rhs * (1 + 1e-8) + 1e-300:
        raise ArithmeticError(f"projection increased the objective: |J g - N| = {res:.3e} > |N| = {rhs:.3e}")
    if sav:
        # r follows the tendency the network actually realises
        r_t = float(np.sum(U * tend)) * colloc.cell_volume / (2.0 * np.sqrt(e1))
    return StageResult(gamma, r_t, res, rhs, energy, modified, max_abs)


def evolve_step(state: EvolutionState, net: Network, op: ResidualOperator, colloc: CollocationSet,
                cfg: EvolutionConfig) -> tuple[EvolutionState, StageResult]:
    """One Euler or classical RK4 step of ``d params / dt = gamma(params)``."""
    dt, lam = cfg.dt, cfg.regularization
    pts = colloc.at_step(state.step)
    K = state.params
    r = state.sav.r if state.sav is not None else 0.0
    sav = cfg.sav

    def F(k, rr):
        return stage(net, k, rr, op, pts, lam, sav)

    s1 = F(K, r)
    if cfg.integrator == EULER:
        K_new = K + dt * s1.gamma
        r_new = r + dt * s1.r_t
    else:
        s2 = F(K + 0.5 * dt * s1.gamma, r + 0.5 * dt * s1.r_t)
        s3 = F(K + 0.5 * dt * s2.gamma, r + 0.5 * dt * s2.r_t)
        s4 = F(K + dt * s3.gamma, r + dt * s3.r_t)
        K_new = K + dt / 6.0 * (s1.gamma + 2 * s2.gamma + 2 * s3.gamma + s4.gamma)
        r_new = r + dt / 6.0 * (s1.r_t + 2 * s2.r_t + 2 * s3.r_t + s4.r_t)
    if not np.all(np.isfinite(K_new)):
        raise BlowUpError("non-finite parameters after step")
    new_sav = replace(state.sav, r=float(r_new)) if state.sav is not None else None
    return EvolutionState(K_new, new_sav, state.step + 1, cfg.dt), s1


# --------------------------------------------------------------------- runs


DIAGNOSTIC_COLUMNS = ["step", "t", "residual_norm", "gamma_norm", "energy", "modified_energy"]


@dataclass
class RunResult:
    trajectory: list[FieldSnapshot]
    diagnostics: list[list]
    wall_ms: list[float]
    fit: FitResult | None
    state: EvolutionState
    error: Exception | None = None


def sample_snapshot(net: Network, params, grid: SpectralGrid, t: float) -> FieldSnapshot:
    vals = network_forward(net, params, grid.points())
    comps = vals.T.reshape((vals.shape[1],) + grid.shape)
    return FieldSnapshot(grid.shape, comps, t, grid.half_width)


def sav_init_network(form: GradientFlowForm, net: Network, params, colloc: CollocationSet) -> SavState:
    u = network_forward(net, params, colloc.points)[:, 0]
    e1 = float(np.sum(double_well(u, form.spec.eps))) * colloc.cell_volume + form.shift
    return SavState(float(np.sqrt(e1)), form)


def run(op: ResidualOperator, net: Network, cfg: EvolutionConfig, colloc: CollocationSet, *,
        ic: Callable | None = None, fit_cfg: FitConfig = FitConfig(), params0=None,
        metrics_grid: SpectralGrid | None = None, out_dir=None, raise_errors: bool = True) -> RunResult:
    """Fit the initial condition (unless ``params0`` is given) and evolve to ``cfg.T``.

    Snapshots are taken every ``cfg.snapshot_every`` steps and at the final
    step. When ``out_dir`` is set, snapshots are written as they are taken and
    the diagnostics CSV is flushed even if a step fails.
    """
    colloc.check_size(net.n_params)
    fit = None
    if params0 is None:
        if ic is None:
            raise ValueError("either ic or params0 is required")
        fit = fit_initial(net, ic, colloc, fit_cfg)
        params0 = fit.params
    if metrics_grid is None:
        if colloc.grid_shape is None:
            raise ValueError("random collocation needs an explicit metrics grid")
        metrics_grid = SpectralGrid(colloc.grid_shape[0], colloc.dim, colloc.half_width, min_n=4)
    sav = None
    if cfg.sav:
        if not isinstance(op, AllenCahnResidual):
            raise ValueError("SAV mode is only defined for the Allen-Cahn gradient flow")
        sav = sav_init_network(op.form, net, params0, colloc)
    state = EvolutionState(np.array(params0, dtype=float), sav, 0, cfg.dt)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        (out / "snapshots").mkdir(parents=True, exist_ok=True)
    traj, diags, walls = [], [], []

    def snap(st):
        s = sample_snapshot(net, st.params, metrics_grid, st.t)
        traj.append(s)
        if out is not None:
            io.save_snapshot(out / "snapshots" / f"snap_{st.step:06d}.evks", s)

    snap(state)
    error = None
    try:
        for _ in range(cfg.n_steps):
            t0 = time.perf_counter()
            prev = state
            state, s1 = evolve_step(state, net, op, colloc, cfg)
            walls.append((time.perf_counter() - t0) * 1e3)
            diags.append([prev.step, prev.t, s1.residual_norm, float(np.linalg.norm(s1.gamma)), s1.energy,
                          s1.modified_energy])
            if state.step % cfg.snapshot_every == 0 or state.step == cfg.n_steps:
                snap(state)
    except (BlowUpError, SingularSystemError, ArithmeticError) as err:
        error = err
        log.error("run stopped at step %d (t=%.6g): %s", state.step, state.t, err)
    finally:
        if out is not None:
            write_diagnostics(out, diags, walls)
    if error is not None and raise_errors:
        raise error
    return RunResult(traj, diags, walls, fit, state, error)


def write_diagnostics(out: Path, diags, walls) -> None:
    io.write_csv(out / "diagnostics.csv", DIAGNOSTIC_COLUMNS, diags)
    io.write_csv(out / "timing.csv", ["step", "wall_ms"], [[row[0], w] for row, w in zip(diags, walls)])
