"""Uniform B-spline bases on extended knot grids."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    """Raised when an argument violates a domain precondition."""


@dataclass(frozen=True)
class KnotVector:
    """Uniform knot sequence of ``G + 1`` interior knots extended by ``k`` on each side."""

    order: int
    grid: int
    lo: float
    hi: float
    knots: np.ndarray

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / self.grid

    @property
    def n_basis(self) -> int:
        return self.grid + self.order


def make_knots(lo: float, hi: float, G: int, k: int) -> KnotVector:
    if not (hi > lo):
        raise DomainError(f"empty spline domain [{lo}, {hi}]")
    if G < 2:
        raise DomainError(f"grid size G must be >= 2, got {G}")
    if k < 1:
        raise DomainError(f"spline order k must be >= 1, got {k}")
    h = (hi - lo) / G
    knots = lo + h * np.arange(-k, G + k + 1, dtype=float)
    knots.setflags(write=False)
    return KnotVector(order=int(k), grid=int(G), lo=float(lo), hi=float(hi), knots=knots)


def _raw_bases(kv: KnotVector, x: np.ndarray, degree: int, keep: int = 0) -> list[np.ndarray]:
    """Basis values at ``x`` in ``[lo, hi]`` for degrees ``degree - keep .. degree``.

    On uniform knots only ``p + 1`` functions of degree ``p`` are nonzero at a
    point, so the Cox-de Boor recursion runs on those and is scattered into
    arrays of shape ``x.shape + (n_knots - p - 1,)``.
    """
    h = kv.spacing
    u = (x - kv.knots[0]) / h
    # interval index; the right end of the domain belongs to the last interior interval
    m = np.minimum(np.floor(u), kv.order + kv.grid - 1)
    f = (u - m)[..., None]
    mi = m.astype(np.intp)[..., None]
    n_knots = len(kv.knots)
    local = np.ones(x.shape + (1,))
    out = []
    for p in range(degree + 1):
        if p:
            r = np.arange(p + 1)
            nxt = np.zeros(x.shape + (p + 1,))
            nxt[..., 1:] += (f + p - r[1:]) / p * local
            nxt[..., :-1] += (r[:-1] + 1 - f) / p * local
            local = nxt
        if p >= degree - keep:
            dense = np.zeros(x.shape + (n_knots - p - 1,))
            np.put_along_axis(dense, mi - p + np.arange(p + 1), local, axis=-1)
            out.append(dense)
    return out


def basis_functions(kv: KnotVector, x, derivatives: int = 0):
    """Evaluate all ``G + k`` basis functions (and derivatives) at ``x``.

    Inputs outside ``[lo, hi]`` are clamped to the nearest endpoint, so the
    derivatives of the clamped function vanish there.

    Returns a tuple ``(B, dB, d2B)`` truncated to ``derivatives + 1`` entries,
    each of shape ``x.shape + (G + k,)``.
    """
    x = np.asarray(x, dtype=float)
    xc = np.clip(x, kv.lo, kv.hi)
    k, h = kv.order, kv.spacing
    levels = _raw_bases(kv, xc, k, min(derivatives, k))
    out = [levels[-1]]
    if derivatives >= 1:
        inside = ((x >= kv.lo) & (x <= kv.hi))[..., None]
        # uniform knots: B'_{i,k} = (B_{i,k-1} - B_{i+1,k-1}) / h
        lower = levels[-2]
        d1 = (lower[..., :-1] - lower[..., 1:]) / h
        out.append(np.where(inside, d1, 0.0))
        if derivatives >= 2:
            if k >= 2:
                lower2 = levels[-3]
                d = (lower2[..., :-1] - lower2[..., 1:]) / h
                d2 = (d[..., :-1] - d[..., 1:]) / h
            else:
                d2 = np.zeros_like(d1)
            out.append(np.where(inside, d2, 0.0))
    return tuple(out)


def bspline_basis(kv: KnotVector, i: int, x: float) -> float:
    """Value of the ``i``-th basis function at ``x`` (clamped to the domain)."""
    if not 0 <= i < kv.n_basis:
        raise DomainError(f"basis index {i} outside [0, {kv.n_basis})")
    return float(basis_functions(kv, x)[0][..., i])
