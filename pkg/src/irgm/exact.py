"""Closed-form thermal averages and brute-force enumeration oracles."""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import _kernels
from .physics import KB, PrecomputedSample, total_energy

ENUMERATION_LIMIT = 20


class Method(str, enum.Enum):
    EXACT = "exact"
    MONTE_CARLO = "monte_carlo"
    ENUMERATION = "enumeration"


@dataclass(frozen=True)
class TemperatureGrid:
    temps: np.ndarray  # K, strictly ascending

    def __post_init__(self):
        t = np.asarray(self.temps, dtype=float).ravel()
        if t.size == 0:
            raise ValueError("temperature grid is empty")
        if np.any(np.diff(t) <= 0):
            raise ValueError("temperatures must be strictly ascending")
        if np.any(t <= 0):
            raise ValueError("temperatures must be positive; T = 0 is handled analytically")
        object.__setattr__(self, "temps", t)

    @classmethod
    def linear(cls, tmin: float = 0.01, tmax: float = 1.0, points: int = 100) -> "TemperatureGrid":
        return cls(np.linspace(tmin, tmax, int(points)))

    def __len__(self) -> int:
        return len(self.temps)


DEFAULT_GRID = TemperatureGrid.linear()


@dataclass
class FieldCurve:
    grid: TemperatureGrid
    field: np.ndarray  # (M, 3) V/m
    method: Method
    f0_ref: np.ndarray  # (3,) V/m, T = 0 limit
    field_smoothed: np.ndarray | None = None
    field_err: np.ndarray | None = None  # (M, 3) standard errors, MC only
    spin_avg: np.ndarray | None = None  # (M, N) mean spins
    spin_err: np.ndarray | None = None

    def __post_init__(self):
        self.field = np.asarray(self.field, dtype=float).reshape(-1, 3)
        if len(self.field) != len(self.grid):
            raise ValueError("field rows must match the temperature grid")
        if not np.all(np.isfinite(self.field)):
            raise ValueError("field contains non-finite values")

    @property
    def temps(self) -> np.ndarray:
        return self.grid.temps

    def to_csv(self) -> str:
        cols = [self.temps[:, None], self.field]
        header = ["T_K", "Fx", "Fy", "Fz"]
        if self.field_smoothed is not None:
            cols.append(self.field_smoothed)
            header += ["Fx_s", "Fy_s", "Fz_s"]
        if self.field_err is not None:
            cols.append(self.field_err)
            header += ["Fx_err", "Fy_err", "Fz_err"]
        table = np.hstack(cols)
        out = io.StringIO()
        out.write(",".join(header) + "\n")
        for row in table:
            out.write(",".join(repr(float(x)) for x in row) + "\n")
        return out.getvalue()

    def save_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, path, method: Method = Method.EXACT) -> "FieldCurve":
        data = np.genfromtxt(path, delimiter=",", names=True)
        names = data.dtype.names
        for col in ("T_K", "Fx", "Fy", "Fz"):
            if col not in names:
                raise ValueError(f"curve CSV is missing column {col!r}")
        data = np.atleast_1d(data)
        grid = TemperatureGrid(data["T_K"])
        field = np.column_stack([data["Fx"], data["Fy"], data["Fz"]])

        def cols(suffix):
            keys = [f"F{c}{suffix}" for c in "xyz"]
            return np.column_stack([data[k] for k in keys]) if all(k in names for k in keys) else None

        # without a stored reference the lowest-temperature row stands in for T = 0
        return cls(grid, field, method, field[0].copy(), cols("_s"), cols("_err"))


def exact_spin_average(h, temperature):
    """Thermal mean of a free spin with random-field energy ``h`` (J).

    ``tanh(h / kT)`` for ``T > 0``; the ``T = 0`` limit is ``sign(h)``
    (0 when ``h == 0``).
    """
    h = np.asarray(h, dtype=float)
    t = np.asarray(temperature, dtype=float)
    if np.any(t < 0):
        raise ValueError("temperature must be >= 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.tanh(h / (KB * np.where(t > 0, t, 1.0)))
    out = np.where(t > 0, val, np.sign(h))
    return out if out.ndim else float(out)


def _require_noninteracting(pre: PrecomputedSample):
    if pre.interaction_scale != 0.0 or np.any(pre.interaction_matrix != 0.0):
        raise ValueError("exact_curve solves the non-interacting model only; "
                         "precompute with interaction_scale=0 or use enumeration / MC")


def exact_curve(pre: PrecomputedSample, grid: TemperatureGrid = DEFAULT_GRID) -> FieldCurve:
    _require_noninteracting(pre)
    s = exact_spin_average(pre.local_fields[None, :], grid.temps[:, None])
    f0 = np.sign(pre.local_fields) @ pre.field_kernels
    return FieldCurve(grid, s @ pre.field_kernels, Method.EXACT, f0, spin_avg=s)


def _check_enumerable(pre: PrecomputedSample):
    if pre.n > ENUMERATION_LIMIT:
        raise ValueError(f"exhaustive enumeration is limited to N <= {ENUMERATION_LIMIT} "
                         f"(2^N states); got N = {pre.n}")


def _gray(pre: PrecomputedSample):
    _check_enumerable(pre)
    h = np.ascontiguousarray(pre.local_fields, dtype=float)
    jmat = np.ascontiguousarray(pre.interaction_matrix, dtype=float)
    return _kernels.gray_energies(h, jmat)


def ground_state_exhaustive(pre: PrecomputedSample) -> tuple[np.ndarray, float]:
    """Exact minimizer over all 2^N states.

    Ties (to round-off) go to the lexicographically smallest state with
    -1 ordered before +1.
    """
    energies, _ = _gray(pre)
    scale = np.abs(pre.local_fields).sum() + 2 * np.abs(pre.interaction_matrix).sum()
    tol = 1e-11 * max(scale, np.finfo(float).tiny)
    cands = np.flatnonzero(energies <= energies.min() + tol)
    states = [_kernels.gray_state(int(i), pre.n) for i in cands]
    exact = [total_energy(pre, s) for s in states]
    emin = min(exact)
    keep = [s for s, e in zip(states, exact) if e <= emin + tol]
    best = min(keep, key=lambda s: tuple(s.tolist()))
    return best, total_energy(pre, best)


def enumerate_thermal(pre: PrecomputedSample, grid: TemperatureGrid = DEFAULT_GRID) -> FieldCurve:
    """Exact Boltzmann averages over all 2^N states, interactions included."""
    energies, bits = _gray(pre)
    betas = 1.0 / (KB * grid.temps)
    s_avg, _, _ = _kernels.gray_averages(energies, bits, pre.n, betas, energies.min())
    if pre.interaction_scale == 0.0:
        f0 = np.sign(pre.local_fields) @ pre.field_kernels
    else:
        ground, _ = ground_state_exhaustive(pre)
        f0 = ground.astype(float) @ pre.field_kernels
    return FieldCurve(grid, s_avg @ pre.field_kernels, Method.ENUMERATION, f0, spin_avg=s_avg)


def thermal_energy_terms(pre: PrecomputedSample, temperature: float) -> tuple[float, float]:
    """Exact thermal ``(<H_r>, <H_int>)`` by enumeration."""
    energies, bits = _gray(pre)
    betas = np.array([1.0 / (KB * temperature)])
    s_avg, _, ebar = _kernels.gray_averages(energies, bits, pre.n, betas, energies.min())
    h_r = -float(s_avg[0] @ pre.local_fields)
    return h_r, float(ebar[0]) - h_r


def with_smoothed(curve: FieldCurve, smoothed: np.ndarray) -> FieldCurve:
    return replace(curve, field_smoothed=np.asarray(smoothed, dtype=float))

