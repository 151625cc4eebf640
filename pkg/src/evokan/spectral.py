"""Fourier pseudo-spectral reference solvers on periodic boxes ``[-L, L]^d``.

Fields are real arrays indexed ``[ix]`` or ``[ix, iy]``; coefficients use the
real-to-complex transform over all spatial axes (the last axis is halved).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class BlowUpError(FloatingPointError):
    """The solution left the representable or physically sane range."""


class ConfigurationError(ValueError):
    pass


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def is_fft_size(n: int) -> bool:
    """``2^p`` or ``3 * 2^p``; the latter allows odd refinement of cell-centred grids."""
    return is_power_of_two(n) or (n % 3 == 0 and is_power_of_two(n // 3))


class SpectralGrid:
    """Uniform periodic grid with matching wavenumbers ``k = (pi / L) m``.

    Nodes are cell-centred, ``x_j = -L + (j + 1/2) h``, so no node sits on the
    symmetry lines ``x = 0, +-L`` where the phase-field initial data vanish.
    """

    def __init__(self, n: int, dim: int, half_width: float = 1.0, min_n: int = 16):
        if not is_fft_size(n) or n < min_n:
            raise ConfigurationError(f"grid size must be 2^p or 3*2^p and >= {min_n}, got {n}")
        if dim not in (1, 2):
            raise ConfigurationError(f"only 1D and 2D grids are supported, got dim={dim}")
        self.n, self.dim, self.half_width = int(n), int(dim), float(half_width)
        self.h = 2.0 * half_width / n
        self.x = -half_width + self.h * (np.arange(n) + 0.5)
        scale = np.pi / half_width
        full = np.fft.fftfreq(n, 1.0 / n)
        half = np.fft.rfftfreq(n, 1.0 / n)
        if dim == 1:
            self.m = [half]
        else:
            self.m = [full[:, None], half[None, :]]
        self.k = [scale * m for m in self.m]
        self.k2 = sum(k * k for k in self.k)
        nyq = n // 2
        # odd derivatives drop the unpaired Nyquist mode
        self.kodd = [np.where(np.abs(m) == nyq, 0.0, k) for m, k in zip(self.m, self.k)]
        self.keep = np.ones(self.spectral_shape, dtype=bool)
        for m in self.m:
            self.keep &= np.abs(m) < n / 3.0

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def spectral_shape(self) -> tuple[int, ...]:
        return (self.n,) * (self.dim - 1) + (self.n // 2 + 1,)

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @property
    def volume(self) -> float:
        return (2.0 * self.half_width) ** self.dim

    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.x] * self.dim), indexing="ij"))

    def points(self) -> np.ndarray:
        """Grid points as a ``(n**d, d)`` array in row-major field order."""
        return np.stack([c.ravel() for c in self.mesh()], axis=-1)

    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    def fft(self, u: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(u, axes=self.axes())

    def ifft(self, uh: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(uh, s=self.shape, axes=self.axes())

    def diff(self, uh: np.ndarray, axis: int) -> np.ndarray:
        return 1j * self.kodd[axis] * uh

    def laplacian(self, uh: np.ndarray) -> np.ndarray:
        return -self.k2 * uh

    def integrate(self, f: np.ndarray) -> float:
        """Rectangle rule over the periodic cell (spectrally accurate)."""
        total = np.sum(f, axis=self.axes()) * self.cell_volume
        return float(total) if np.ndim(total) == 0 else total


def dealias(uh: np.ndarray, grid: SpectralGrid) -> np.ndarray:
    """Two-thirds rule: zero every mode with ``|m_j| >= n / 3`` in any direction."""
    return np.where(grid.keep, uh, 0.0)


def gradient(u: np.ndarray, grid: SpectralGrid) -> list[np.ndarray]:
    uh = grid.fft(u)
    return [grid.ifft(grid.diff(uh, a)) for a in range(grid.dim)]


def divergence(vel: np.ndarray, grid: SpectralGrid) -> np.ndarray:
    """Spectral divergence of a ``(dim, *shape)`` vector field."""
    vh = grid.fft(vel)
    return grid.ifft(sum(grid.diff(vh[a], a) for a in range(grid.dim)))


# ---------------------------------------------------------------- Allen-Cahn


def _g(u, eps):
    return u * (u * u - 1.0) / eps**2


def _G(u, eps):
    return (u * u - 1.0) ** 2 / (4.0 * eps**2)


def _check(u):
    if not np.all(np.isfinite(u)):
        raise BlowUpError("non-finite values in spectral state")


def ac_spectral_step_imex(u: np.ndarray, eps: float, dt: float, grid: SpectralGrid,
                          dealias_reaction: bool = False) -> np.ndarray:
    """First-order IMEX step ``(1 + dt eps^2 |k|^2) u^{n+1} = u^n - dt g(u^n)``.

    The cubic term is evaluated pointwise. Truncating it (``dealias_reaction``)
    destroys the pointwise +-1 equilibria once interfaces are thinner than the
    grid spacing, so it is off by default.
    """
    uh = grid.fft(u)
    gh = grid.fft(_g(u, eps))
    if dealias_reaction:
        gh = dealias(gh, grid)
    u_new = grid.ifft((uh - dt * gh) / (1.0 + dt * eps**2 * grid.k2))
    _check(u_new)
    return u_new


@dataclass
class SavSpectralState:
    u: np.ndarray
    r: float
    t: float = 0.0


def ac_nonlinear_energy(u: np.ndarray, eps: float, grid: SpectralGrid, shift: float = 1.0) -> float:
    return grid.integrate(_G(u, eps)) + shift


def ac_quadratic_energy(u: np.ndarray, eps: float, grid: SpectralGrid) -> float:
    """``(u, L u) / 2`` with ``L = -eps^2 Laplace`` in the discrete inner product."""
    uh = grid.fft(u)
    return 0.5 * grid.integrate(u * grid.ifft(eps**2 * grid.k2 * uh))


def sav_modified_energy(state: SavSpectralState, eps: float, grid: SpectralGrid) -> float:
    return ac_quadratic_energy(state.u, eps, grid) + state.r**2


def sav_init_spectral(u: np.ndarray, eps: float, grid: SpectralGrid, shift: float = 1.0) -> SavSpectralState:
    return SavSpectralState(u.copy(), float(np.sqrt(ac_nonlinear_energy(u, eps, grid, shift))))


def ac_spectral_step_sav(
    state: SavSpectralState, eps: float, dt: float, grid: SpectralGrid, shift: float = 1.0
) -> SavSpectralState:
    """First-order SAV step for ``u_t = -mu``, ``mu = L u + (r / sqrt(E1)) g(u)``.

    With ``b = g(u^n) / sqrt(E1[u^n])`` and ``A = 1 + dt L``:
    ``u^{n+1} = A^{-1} u^n - r^{n+1} dt A^{-1} b`` and
    ``r^{n+1} = r^n + (b, u^{n+1} - u^n) / 2``, solved with two diagonal divisions.
    """
    u, r = state.u, state.r
    inv = 1.0 / (1.0 + dt * eps**2 * grid.k2)
    b = _g(u, eps) / np.sqrt(ac_nonlinear_energy(u, eps, grid, shift))
    u1 = grid.ifft(inv * grid.fft(u))
    u2 = dt * grid.ifft(inv * grid.fft(b))
    r_new = (r + 0.5 * grid.integrate(b * (u1 - u))) / (1.0 + 0.5 * grid.integrate(b * u2))
    u_new = u1 - r_new * u2
    _check(u_new)
    if not np.isfinite(r_new):
        raise BlowUpError("non-finite auxiliary variable")
    return SavSpectralState(u_new, float(r_new), state.t + dt)


# ------------------------------------------------------------- Navier-Stokes


def leray_project(vh: np.ndarray, grid: SpectralGrid) -> np.ndarray:
    """Remove the gradient part: ``v - k (k . v) / |k|^2`` (mean mode untouched)."""
    k2 = np.where(grid.k2 == 0, 1.0, grid.k2)
    kdotv = sum(grid.kodd[a] * vh[a] for a in range(grid.dim))
    return np.stack([vh[a] - grid.kodd[a] * kdotv / k2 for a in range(grid.dim)])


def advection_hat(vh: np.ndarray, grid: SpectralGrid) -> np.ndarray:
    """Dealiased Fourier coefficients of ``(v . grad) v``."""
    vh = dealias(vh, grid)
    vel = grid.ifft(vh)
    out = np.empty_like(vh)
    for c in range(grid.dim):
        adv = sum(vel[a] * grid.ifft(grid.diff(vh[c], a)) for a in range(grid.dim))
        out[c] = dealias(grid.fft(adv), grid)
    return out


def pressure_hat(vh: np.ndarray, grid: SpectralGrid) -> np.ndarray:
    """Pressure coefficients solving ``-Laplace p = div((v . grad) v)`` (zero mean)."""
    ah = advection_hat(vh, grid)
    k2 = np.where(grid.k2 == 0, 1.0, grid.k2)
    kdota = sum(grid.kodd[a] * ah[a] for a in range(grid.dim))
    return np.where(grid.k2 == 0, 0.0, 1j * kdota / k2)


def nse_tendency_hat(vh: np.ndarray, grid: SpectralGrid, nu: float, viscous: bool = True) -> np.ndarray:
    """Divergence-free tendency ``P[-(v . grad) v + nu Laplace v]`` in Fourier space."""
    rhs = -advection_hat(vh, grid)
    if viscous:
        rhs = rhs - nu * grid.k2 * vh
    return leray_project(rhs, grid)


def nse_spectral_step(vh: np.ndarray, nu: float, dt: float, grid: SpectralGrid, max_speed: float = 1e3) -> np.ndarray:
    """Three-stage SSP Runge-Kutta with an exact viscous integrating factor."""

    def F(w):
        return nse_tendency_hat(w, grid, nu, viscous=False)

    def E(s):
        return np.exp(-nu * grid.k2 * s)

    v1 = E(dt) * (vh + dt * F(vh))
    v2 = 0.75 * E(0.5 * dt) * vh + 0.25 * E(-0.5 * dt) * (v1 + dt * F(v1))
    out = (1.0 / 3.0) * E(dt) * vh + (2.0 / 3.0) * E(0.5 * dt) * (v2 + dt * F(v2))
    speed = np.abs(grid.ifft(out)).max()
    if not np.isfinite(speed) or speed > max_speed:
        raise BlowUpError(f"velocity magnitude {speed:.3g} exceeds guard")
    return out


def vorticity(vel: np.ndarray, grid: SpectralGrid) -> np.ndarray:
    """``dv/dx - du/dy`` for a velocity field of shape ``(2, n, n)``."""
    vh = grid.fft(vel)
    return grid.ifft(grid.diff(vh[1], 0) - grid.diff(vh[0], 1))
