"""PDE right-hand sides for Allen-Cahn and incompressible Navier-Stokes.

Sign convention: every operator returns ``N`` with ``u_t = N(u)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import JetValue
from .spectral import (
    ConfigurationError,
    SpectralGrid,
    is_power_of_two,
    nse_tendency_hat,
)


class ContractError(ValueError):
    """An argument has the right type but the wrong structure."""


class InvariantError(ValueError):
    pass


LITERAL = "literal"
DIVERGENCE_FREE = "divergence_free"


@dataclass(frozen=True)
class AllenCahnSpec:
    dim: int = 1
    eps: float = 0.02
    amplitude: float = 0.25
    alpha: int = 1
    half_width: float = 1.0
    shift: float = 1.0

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ContractError(f"Allen-Cahn dimension must be 1 or 2, got {self.dim}")
        if not self.eps > 0:
            raise ContractError(f"eps must be positive, got {self.eps}")
        if self.alpha < 1:
            raise ContractError(f"alpha must be >= 1, got {self.alpha}")
        if not self.shift > 0:
            raise ContractError("energy shift must be positive")

    @property
    def n_outputs(self) -> int:
        return 1


@dataclass(frozen=True)
class NavierStokesSpec:
    nu: float = 0.05
    ic: str = DIVERGENCE_FREE
    half_width: float = 1.0

    def __post_init__(self):
        if not self.nu > 0:
            raise ContractError(f"viscosity must be positive, got {self.nu}")
        if self.ic not in (LITERAL, DIVERGENCE_FREE):
            raise ContractError(f"unknown initial condition variant {self.ic!r}")

    @property
    def dim(self) -> int:
        return 2

    @property
    def n_outputs(self) -> int:
        return 2


@dataclass
class FieldSnapshot:
    """Samples of a (possibly vector) field on a cell-centred periodic grid.

    ``values`` has shape ``(components,) + shape`` and is row-major over space.
    """

    shape: tuple[int, ...]
    values: np.ndarray
    t: float = 0.0
    half_width: float = 1.0

    def __post_init__(self):
        self.shape = tuple(int(s) for s in self.shape)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == len(self.shape):
            self.values = self.values[None]
        if self.values.shape[1:] != self.shape:
            raise ContractError(f"values {self.values.shape} do not match grid {self.shape}")

    @property
    def components(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return len(self.shape)

    def grid(self, min_n: int = 4) -> SpectralGrid:
        if len(set(self.shape)) != 1:
            raise ConfigurationError(f"non-square grid {self.shape}")
        return SpectralGrid(self.shape[0], self.dim, self.half_width, min_n=min_n)

    def scalar(self) -> np.ndarray:
        if self.components != 1:
            raise ContractError(f"expected a scalar field, got {self.components} components")
        return self.values[0]


# ------------------------------------------------------------------ Allen-Cahn


def double_well(u, eps):
    """``G(u) = (u^2 - 1)^2 / (4 eps^2)``."""
    return (u * u - 1.0) ** 2 / (4.0 * eps**2)


def double_well_prime(u, eps):
    """``g(u) = G'(u) = u (u^2 - 1) / eps^2``."""
    return u * (u * u - 1.0) / eps**2


def ac_residual(spec: AllenCahnSpec, jet: JetValue) -> np.ndarray:
    """``eps^2 Laplace u - g(u)`` from a jet carrying pure second derivatives."""
    if jet.second is None or jet.second.shape[-1] != spec.dim:
        raise ContractError(f"Allen-Cahn residual needs {spec.dim} second derivatives")
    return spec.eps**2 * jet.second.sum(axis=-1) - double_well_prime(jet.value, spec.eps)


@dataclass(frozen=True)
class GradientFlowForm:
    """Allen-Cahn as ``phi_t = G mu`` with ``G = -I``, ``L = -eps^2 Laplace``.

    ``E1[phi] = int G(phi) + shift`` and ``U[phi] = g(phi)``.
    """

    spec: AllenCahnSpec

    @property
    def shift(self) -> float:
        return self.spec.shift

    def U(self, u):
        return double_well_prime(u, self.spec.eps)

    def E1(self, u, cell_volume: float) -> float:
        return float(np.sum(double_well(u, self.spec.eps)) * cell_volume + self.shift)

    def apply_L(self, u, grid: SpectralGrid):
        return grid.ifft(self.spec.eps**2 * grid.k2 * grid.fft(u))

    def apply_L_jet(self, jet: JetValue):
        return -self.spec.eps**2 * jet.second.sum(axis=-1)

    def mobility(self, mu):
        return -mu


@dataclass
class SavState:
    r: float
    form: GradientFlowForm


def _snapshot_grid(snapshot: FieldSnapshot) -> SpectralGrid:
    return snapshot.grid(min_n=4)


def ac_energy(spec: AllenCahnSpec, snapshot: FieldSnapshot) -> tuple[float, float]:
    """``(E_total, E1)`` of a scalar snapshot.

    ``E_total = int eps^2/2 |grad u|^2 + G(u)`` is the free energy this equation
    dissipates; ``E1 = int G(u) + shift``. Gradients are spectral.
    """
    u = snapshot.scalar()
    grid = _snapshot_grid(snapshot)
    form = GradientFlowForm(spec)
    quad = 0.5 * grid.integrate(u * form.apply_L(u, grid))
    e1 = form.E1(u, grid.cell_volume)
    return quad + e1 - spec.shift, e1


def sav_init(form: GradientFlowForm, snapshot: FieldSnapshot) -> SavState:
    grid = _snapshot_grid(snapshot)
    return SavState(float(np.sqrt(form.E1(snapshot.scalar(), grid.cell_volume))), form)


def sav_mu(form: GradientFlowForm, snapshot: FieldSnapshot, sav: SavState) -> np.ndarray:
    """``mu = L phi + (r / sqrt(E1[phi])) U[phi]`` on the snapshot grid."""
    if not sav.r > 0:
        raise InvariantError(f"auxiliary variable must stay positive, got r={sav.r}")
    u = snapshot.scalar()
    grid = _snapshot_grid(snapshot)
    ratio = sav.r / np.sqrt(form.E1(u, grid.cell_volume))
    return form.apply_L(u, grid) + ratio * form.U(u)


def sav_rhs(form: GradientFlowForm, snapshot: FieldSnapshot, sav: SavState) -> tuple[np.ndarray, float]:
    """``(phi_t, r_t)`` with ``phi_t = G mu`` and ``r_t = int U phi_t / (2 sqrt(E1))``."""
    mu = sav_mu(form, snapshot, sav)
    u = snapshot.scalar()
    grid = _snapshot_grid(snapshot)
    phi_t = form.mobility(mu)
    r_t = grid.integrate(form.U(u) * phi_t) / (2.0 * np.sqrt(form.E1(u, grid.cell_volume)))
    return phi_t, float(r_t)


# ----------------------------------------------------------- Navier-Stokes


def nse_grid(snapshot: FieldSnapshot) -> SpectralGrid:
    if snapshot.dim != 2 or len(set(snapshot.shape)) != 1 or not is_power_of_two(snapshot.shape[0]):
        raise ConfigurationError(f"Navier-Stokes residual needs a square power-of-two grid, got {snapshot.shape}")
    return SpectralGrid(snapshot.shape[0], 2, snapshot.half_width, min_n=4)


def nse_residual(spec: NavierStokesSpec, snapshot: FieldSnapshot) -> FieldSnapshot:
    """Projected tendency ``P[-(v . grad) v + nu Laplace v]`` of a sampled velocity.

    The pressure gradient is the part the projection removes; applying it to
    the whole tendency keeps the result divergence free even when the sampled
    field itself is not exactly solenoidal.
    """
    if snapshot.components != 2:
        raise ContractError("Navier-Stokes residual needs a (u, v) snapshot")
    grid = nse_grid(snapshot)
    out = grid.ifft(nse_tendency_hat(grid.fft(snapshot.values), grid, spec.nu))
    return FieldSnapshot(snapshot.shape, out, snapshot.t, snapshot.half_width)


def make_initial_condition(spec):
    """Analytic initial data ``x -> f(x)`` for points of shape ``(P, d)``; returns ``(P, n_out)``."""
    if isinstance(spec, AllenCahnSpec):
        w = np.pi / spec.half_width
        if spec.dim == 1:
            return lambda X: spec.amplitude * np.sin(w * np.asarray(X, dtype=float).reshape(-1, 1))

        def ac2(X):
            X = np.asarray(X, dtype=float).reshape(-1, 2)
            return (0.08 * np.sin(spec.alpha * w * X[:, 0]) * np.sin(spec.alpha * w * X[:, 1]))[:, None]

        return ac2
    if isinstance(spec, NavierStokesSpec):
        w = 2.0 * np.pi / (2.0 * spec.half_width)

        def nse(X):
            X = np.asarray(X, dtype=float).reshape(-1, 2)
            u = -np.sin(w * X[:, 1])
            v = np.cos(w * X[:, 1]) if spec.ic == LITERAL else np.cos(w * X[:, 0])
            return np.stack([u, v], axis=-1)

        return nse
    raise ContractError(f"no initial condition for {type(spec).__name__}")


# ------------------------------------------------------- residual operators


class ResidualOperator:
    """Evaluates ``N`` at collocation points from network jets.

    ``needs_grid`` operators (spectral ones) require the collocation set to be
    the full cell-centred grid in row-major order.
    """

    needs_grid = False
    n_outputs = 1

    def __call__(self, jet: JetValue, points: np.ndarray, grid_shape=None) -> np.ndarray:
        raise NotImplementedError


class AllenCahnResidual(ResidualOperator):
    def __init__(self, spec: AllenCahnSpec):
        self.spec = spec
        self.form = GradientFlowForm(spec)

    def __call__(self, jet, points, grid_shape=None):
        return ac_residual(self.spec, jet)


class HeatResidual(ResidualOperator):
    """``u_t = kappa Laplace u``; a linear test operator."""

    def __init__(self, kappa: float = 1.0):
        self.kappa = kappa

    def __call__(self, jet, points, grid_shape=None):
        return self.kappa * jet.second.sum(axis=-1)


class NavierStokesResidual(ResidualOperator):
    needs_grid = True
    n_outputs = 2

    def __init__(self, spec: NavierStokesSpec):
        self.spec = spec

    def __call__(self, jet, points, grid_shape=None):
        if grid_shape is None:
            raise ConfigurationError("Navier-Stokes residual needs grid collocation")
        vel = jet.value.T.reshape((2,) + tuple(grid_shape))
        snap = FieldSnapshot(grid_shape, vel)
        return nse_residual(self.spec, snap).values.reshape(2, -1).T
