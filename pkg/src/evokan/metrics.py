"""Error and energy diagnostics for trajectories of field snapshots."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import io
from .problems import AllenCahnSpec, FieldSnapshot, ac_energy

TIME_TOL = 1e-9


class ComparisonError(ValueError):
    pass


def _check_pair(a: FieldSnapshot, b: FieldSnapshot) -> None:
    if a.shape != b.shape or a.components != b.components:
        raise ComparisonError(f"grid mismatch: {a.shape}x{a.components} vs {b.shape}x{b.components}")
    if abs(a.t - b.t) > TIME_TOL:
        raise ComparisonError(f"timestamp mismatch: {a.t!r} vs {b.t!r}")


def l2_snapshot_error(a: FieldSnapshot, b: FieldSnapshot) -> float:
    """``sqrt(|Omega|^-1 int |a - b|^2)`` by the rectangle rule (components summed)."""
    _check_pair(a, b)
    diff = a.values - b.values
    return float(np.sqrt(np.sum(np.mean(diff * diff, axis=tuple(range(1, diff.ndim))))))


def l2_norm(a: FieldSnapshot) -> float:
    return float(np.sqrt(np.sum(np.mean(a.values**2, axis=tuple(range(1, a.values.ndim))))))


def relative_l2_error(a: FieldSnapshot, reference: FieldSnapshot) -> float:
    return l2_snapshot_error(a, reference) / l2_norm(reference)


def time_average(times, values, T: float | None = None) -> float:
    """Trapezoidal ``(1/T) int_0^T e(t) dt`` over the sampled times."""
    t = np.asarray(times, dtype=float)
    e = np.asarray(values, dtype=float)
    if len(t) == 1:
        return float(e[0])
    span = T if T is not None else t[-1] - t[0]
    return float(np.sum(0.5 * (e[1:] + e[:-1]) * np.diff(t)) / span)


@dataclass
class ErrorReport:
    times: list[float]
    absolute: list[float]
    relative: list[float]
    time_averaged: float
    max_error: float
    metadata: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        io.write_csv(path, ["t", "l2_error", "relative_l2_error"],
                     zip(self.times, self.absolute, self.relative))


def time_averaged_error(traj_a: list[FieldSnapshot], traj_b: list[FieldSnapshot], T: float | None = None,
                        **metadata) -> ErrorReport:
    if len(traj_a) != len(traj_b) or not traj_a:
        raise ComparisonError(f"trajectories have {len(traj_a)} and {len(traj_b)} snapshots")
    times = [a.t for a in traj_a]
    absolute = [l2_snapshot_error(a, b) for a, b in zip(traj_a, traj_b)]
    relative = []
    for a, b in zip(traj_a, traj_b):
        nb = l2_norm(b)
        relative.append(l2_snapshot_error(a, b) / nb if nb > 0 else float("inf"))
    return ErrorReport(times, absolute, relative, time_average(times, absolute, T), max(absolute), dict(metadata))


def format_error_table(values: dict[str, dict[float, float]], parameter: str = "eps") -> str:
    """Methods as rows, parameter values as columns, errors in scientific notation."""
    cols = sorted({p for row in values.values() for p in row}, reverse=True)
    head = ["Parameter"] + [f"{parameter} = {p:g}" for p in cols]
    rows = [[m] + [f"{row[p]:.4e}" if p in row else "-" for p in cols] for m, row in values.items()]
    widths = [max(len(r[i]) for r in [head] + rows) for i in range(len(head))]
    line = lambda r: " | ".join(c.ljust(w) for c, w in zip(r, widths))  # noqa: E731
    sep = "-+-".join("-" * w for w in widths)
    return "\n".join([line(head), sep] + [line(r) for r in rows]) + "\n"


@dataclass
class EnergyTrace:
    times: list[float]
    total: list[float]
    nonlinear: list[float]
    increases: list[int]

    @property
    def monotone(self) -> bool:
        return not self.increases

    def to_csv(self, path) -> None:
        flags = set(self.increases)
        io.write_csv(path, ["t", "energy", "E1", "increase"],
                     [[t, e, e1, int(i in flags)] for i, (t, e, e1) in
                      enumerate(zip(self.times, self.total, self.nonlinear))])


def energy_trace(traj: list[FieldSnapshot], spec: AllenCahnSpec, rtol: float = 1e-3) -> EnergyTrace:
    """Free energy per snapshot; indices where it grows by more than ``rtol`` (relative) are flagged."""
    totals, e1s = [], []
    for s in traj:
        e, e1 = ac_energy(spec, s)
        totals.append(e)
        e1s.append(e1)
    inc = [i for i in range(1, len(totals))
           if totals[i] - totals[i - 1] > rtol * max(abs(totals[i - 1]), np.finfo(float).tiny)]
    return EnergyTrace([s.t for s in traj], totals, e1s, inc)
