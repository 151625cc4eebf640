"""Reference trajectories from the spectral solvers, sampled on a comparison grid."""

from __future__ import annotations

import numpy as np

from .problems import AllenCahnSpec, FieldSnapshot, NavierStokesSpec, make_initial_condition
from .spectral import (
    SpectralGrid,
    sav_modified_energy,
    ac_spectral_step_imex,
    ac_spectral_step_sav,
    nse_spectral_step,
    sav_init_spectral,
)

IMEX = "imex"
SAV = "sav"


def resample(field: np.ndarray, src: SpectralGrid, dst: SpectralGrid) -> np.ndarray:
    """Move a field between cell-centred grids of the same box.

    Odd refinement ratios nest the coarse nodes inside the fine grid, so the
    values are copied; otherwise the Fourier series is truncated to the
    coarse band and evaluated at the coarse nodes. Both are exact for fields
    band-limited to the coarse grid.
    """
    if src.n == dst.n:
        return field.copy()
    lead = field.shape[: field.ndim - src.dim]
    if src.n % dst.n == 0 and (src.n // dst.n) % 2 == 1:
        ratio = src.n // dst.n
        sl = (slice(None),) * len(lead) + (slice((ratio - 1) // 2, None, ratio),) * src.dim
        return field[sl].copy()
    if dst.n > src.n:
        raise ValueError("spectral resampling only coarsens")
    F = src.fft(field)
    out = np.zeros(lead + dst.spectral_shape, dtype=complex)
    half = dst.n // 2
    shift = dst.x[0] - src.x[0]
    if src.dim == 1:
        out[..., :half] = F[..., :half]
    else:
        rows = np.r_[0:half, src.n - half + 1 : src.n]
        drows = np.r_[0:half, dst.n - half + 1 : dst.n]
        out[..., drows, :half] = F[..., rows, :half]
    for k in dst.k:
        out = out * np.exp(1j * k * shift)
    return dst.ifft(out) * (dst.n / src.n) ** src.dim


def _sample_steps(times, dt: float) -> list[int]:
    steps = []
    for t in times:
        i = int(round(t / dt))
        if abs(i * dt - t) > 1e-9:
            raise ValueError(f"snapshot time {t} is not a multiple of the reference step {dt}")
        steps.append(i)
    return steps


def reference_dt(spec: AllenCahnSpec, dt: float = 1e-4) -> float:
    """Reference step, capped at ``eps^2 / 4`` so the explicit reaction stays stable."""
    return min(dt, 0.25 * spec.eps**2)


def ac_benchmark(spec: AllenCahnSpec, times, out_grid: SpectralGrid, n_ref: int | None = None,
                 dt: float | None = None, scheme: str = IMEX, dealias_reaction: bool = False):
    """Allen-Cahn reference snapshots at ``times`` (ascending, from 0).

    Returns ``(snapshots, modified_energies)``; the energies are only filled
    for the SAV scheme.
    """
    n_ref = n_ref or (3 * out_grid.n)
    grid = SpectralGrid(n_ref, spec.dim, spec.half_width)
    dt = dt if dt is not None else reference_dt(spec)
    steps = _sample_steps(times, dt)
    ic = make_initial_condition(spec)
    u = ic(grid.points())[:, 0].reshape(grid.shape)
    state = sav_init_spectral(u, spec.eps, grid, spec.shift) if scheme == SAV else None
    snaps, energies = [], []
    i = 0
    for target, t in zip(steps, times):
        while i < target:
            if scheme == SAV:
                state = ac_spectral_step_sav(state, spec.eps, dt, grid, spec.shift)
                u = state.u
            else:
                u = ac_spectral_step_imex(u, spec.eps, dt, grid, dealias_reaction)
            i += 1
        snaps.append(FieldSnapshot(out_grid.shape, resample(u, grid, out_grid), t, spec.half_width))
        if scheme == SAV:
            energies.append(sav_modified_energy(state, spec.eps, grid))
    return snaps, energies


def nse_benchmark(spec: NavierStokesSpec, times, out_grid: SpectralGrid, n_ref: int = 128,
                  dt: float = 1e-4) -> list[FieldSnapshot]:
    grid = SpectralGrid(n_ref, 2, spec.half_width)
    steps = _sample_steps(times, dt)
    vel = make_initial_condition(spec)(grid.points()).T.reshape((2,) + grid.shape)
    vh = grid.fft(vel)
    snaps = []
    i = 0
    for target, t in zip(steps, times):
        while i < target:
            vh = nse_spectral_step(vh, spec.nu, dt, grid)
            i += 1
        snaps.append(FieldSnapshot(out_grid.shape, resample(grid.ifft(vh), grid, out_grid), t, spec.half_width))
    return snaps
