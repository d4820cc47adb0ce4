"""Metropolis Monte Carlo for the interacting model.

The sampler combines single-spin flips with symmetric collective moves: a
joint flip of each spin with its most strongly coupled partner, a joint flip
of the partner chain ``j -> partner(j) -> partner(partner(j))`` when it holds
three distinct spins, and a global flip (the pair energy is invariant under
``s -> -s``). Defects a few nm apart are locked together by couplings far
above 1 K, so nearly degenerate states often differ by a small cluster; when
interactions dominate the random fields the ground state and its mirror image
are nearly degenerate as well.

``mc_curve`` runs one replica per grid temperature plus a short hot ladder
and exchanges neighbouring replicas ``swap_passes`` times after every sweep (``mode="tempering"``,
the default). ``mode="sequential"`` instead sweeps the grid from hot to cold,
carrying the state over; ``mode="independent"`` restarts at every temperature.

By default the measured quantity for spin ``j`` is its exact conditional mean
given every spin outside the pair ``{j, partner(j)}`` (``tanh(g_j / kT)`` when
uncoupled). It is unbiased for ``<s_j>``, has lower variance, and stays correct
for spins and locked pairs too stiff to ever flip during the run.
``estimator="spin"`` averages the raw spins instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .exact import DEFAULT_GRID, FieldCurve, Method, TemperatureGrid
from .physics import KB, PrecomputedSample, check_spins, total_energy

CHUNK_PROPOSALS = 2_000_000  # random draws generated per kernel call


def geometric_temps(t_hot: float = 10.0, t_cold: float = 0.01, stages: int = 60) -> tuple:
    return tuple(float(t) for t in np.geomspace(t_hot, t_cold, stages))


@dataclass(frozen=True)
class McSchedule:
    equilibration_sweeps: int = 2000
    measurement_sweeps: int = 10_000
    anneal_temps: tuple = field(default_factory=geometric_temps)
    anneal_restarts: int = 8
    anneal_sweeps_per_stage: int = 20
    rng_seed: int = 0
    n_batches: int = 20
    estimator: str = "conditional"
    mode: str = "tempering"
    hot_replicas: int = 8  # extra unmeasured replicas above the grid (tempering)
    hot_factor: float = 10.0  # hottest replica = hot_factor * max grid temperature
    swap_passes: int = 4  # alternating neighbour-exchange passes after each sweep

    def __post_init__(self):
        for name in ("equilibration_sweeps", "measurement_sweeps", "anneal_restarts",
                     "anneal_sweeps_per_stage", "n_batches", "swap_passes"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.measurement_sweeps < self.n_batches:
            raise ValueError("need at least one measurement sweep per batch")
        temps = np.asarray(self.anneal_temps, dtype=float)
        if temps.size < 1 or np.any(temps <= 0) or np.any(np.diff(temps) >= 0):
            raise ValueError("anneal_temps must be positive and strictly descending")
        if self.estimator not in ("conditional", "spin"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.mode not in ("tempering", "sequential", "independent"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.hot_replicas < 0 or self.hot_factor < 1:
            raise ValueError("hot_replicas must be >= 0 and hot_factor >= 1")

    def replace(self, **changes) -> "McSchedule":
        from dataclasses import replace
        return replace(self, **changes)

    def to_json_dict(self) -> dict:
        return {
            "equilibration_sweeps": self.equilibration_sweeps,
            "measurement_sweeps": self.measurement_sweeps,
            "anneal_temps_K": list(self.anneal_temps),
            "anneal_restarts": self.anneal_restarts,
            "anneal_sweeps_per_stage": self.anneal_sweeps_per_stage,
            "rng_seed": int(self.rng_seed),
            "n_batches": self.n_batches,
            "estimator": self.estimator,
            "mode": self.mode,
            "hot_replicas": self.hot_replicas,
            "hot_factor": self.hot_factor,
            "swap_passes": self.swap_passes,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "McSchedule":
        kw = dict(d)
        if "anneal_temps_K" in kw:
            kw["anneal_temps"] = tuple(float(t) for t in kw.pop("anneal_temps_K"))
        return cls(**kw)


def pair_partners(jmat: np.ndarray) -> np.ndarray:
    """Most strongly coupled partner of each spin; empty when uncoupled."""
    if len(jmat) < 2 or not np.any(jmat):
        return np.empty(0, dtype=np.int64)
    a = np.abs(jmat)
    partner = np.argmax(a, axis=1).astype(np.int64)
    partner[a[np.arange(len(a)), partner] == 0.0] = -1
    return partner


def acceptance_probability(delta: float, temperature: float) -> float:
    """Metropolis acceptance ``min(1, exp(-dE / kT))``."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    return 1.0 if delta <= 0 else float(np.exp(-delta / (KB * temperature)))


class _Replicas:
    """Spin configurations held at a ladder of inverse temperatures."""

    def __init__(self, pre: PrecomputedSample, temps, rng: np.random.Generator, spins=None,
                 swap_passes: int = 1):
        self.h = np.ascontiguousarray(pre.local_fields, dtype=float)
        self.jmat = np.ascontiguousarray(pre.interaction_matrix, dtype=float)
        self.partner = pair_partners(self.jmat)
        self.rng = rng
        self.swap_passes = swap_passes
        self.n = pre.n
        self.betas = 1.0 / (KB * np.asarray(temps, dtype=float))
        r = len(self.betas)
        if spins is None:
            spins = rng.choice(np.array([-1.0, 1.0]), size=(r, self.n))
        self.spins = np.array(spins, dtype=float).reshape(r, self.n)
        self.stats = np.zeros(4, dtype=np.int64)
        self.refresh()

    def refresh(self):
        self.local = np.array([_kernels.fresh_local(self.h, self.jmat, s) for s in self.spins])
        self.energy = np.array([_kernels._energy(self.h, self.jmat, s) for s in self.spins])
        self.dirty = np.ones(len(self.betas), dtype=np.bool_)

    def set_temps(self, temps):
        self.betas = 1.0 / (KB * np.asarray(temps, dtype=float))
        self.dirty[:] = True

    def run(self, n_sweeps: int, n_measured: int = 0, n_batches: int = 0, improved=True):
        """Advance every replica ``n_sweeps`` sweeps; optionally measure.

        Returns ``(spin_batches (n_measured, n_batches, N), energy_batches)``.
        """
        r, n = self.spins.shape
        out = np.zeros((n_measured, n_batches, n))
        out_e = np.zeros((n_measured, n_batches))
        counts = np.zeros(n_batches)
        cond = np.zeros((max(n_measured, 1), n))
        per_sweep = r * 3 * n
        chunk = max(1, CHUNK_PROPOSALS // per_sweep)
        done = 0
        while done < n_sweeps:
            c = min(chunk, n_sweeps - done)
            u = self.rng.random((c, r, 3 * n))
            u_glob = self.rng.random((c, r))
            u_swap = self.rng.random((c, self.swap_passes, max(r - 1, 1)))
            _kernels.tempering(self.jmat, self.h, self.partner, self.spins, self.local,
                               self.energy, self.betas, u, u_glob, u_swap, done,
                               n_sweeps, n_measured, improved, out, out_e, counts, cond,
                               self.dirty, self.stats)
            done += c
            # bound round-off drift in the incrementally updated fields
            self.refresh()
        if n_batches:
            out /= counts[None, :, None]
            out_e /= counts[None, :]
        return out, out_e


def metropolis_sweeps(pre: PrecomputedSample, state, temperature: float, rng: np.random.Generator,
                      n_sweeps: int = 1) -> tuple[np.ndarray, float]:
    """``n_sweeps`` Metropolis sweeps at one temperature.

    A sweep is N single-flip proposals at uniformly random sites (plus the
    pair, chain and global moves when interactions are present). Returns
    ``(new_state, acceptance_rate)``; ``state`` is not modified.
    """
    if temperature <= 0:
        raise ValueError("Metropolis sweeps need T > 0; use anneal_ground_state for T -> 0")
    reps = _Replicas(pre, [temperature], rng, spins=check_spins(state))
    reps.run(n_sweeps)
    return reps.spins[0].astype(np.int8), reps.stats[0] / reps.stats[3]


def metropolis_sweep(pre: PrecomputedSample, state, temperature: float,
                     rng: np.random.Generator) -> np.ndarray:
    return metropolis_sweeps(pre, state, temperature, rng, 1)[0]


def anneal_ground_state(pre: PrecomputedSample,
                        schedule: McSchedule = McSchedule()) -> tuple[np.ndarray, float]:
    """Best 1-flip-stable state over independent annealing restarts.

    Each restart starts from random spins, sweeps ``schedule.anneal_temps``
    from hot to cold, then flips downhill greedily until no single flip
    lowers the energy.
    """
    h = np.ascontiguousarray(pre.local_fields, dtype=float)
    if not np.any(pre.interaction_matrix):
        spins = np.where(h >= 0, 1, -1).astype(np.int8)
        return spins, total_energy(pre, spins)
    seeds = np.random.SeedSequence([int(schedule.rng_seed), 0x616E6E]).spawn(schedule.anneal_restarts)
    best, best_e = None, np.inf
    for ss in seeds:
        reps = _Replicas(pre, [schedule.anneal_temps[0]], np.random.default_rng(ss))
        for t in schedule.anneal_temps:
            reps.set_temps([t])
            reps.run(schedule.anneal_sweeps_per_stage)
        spins = reps.spins[0].copy()
        local = _kernels.fresh_local(reps.h, reps.jmat, spins)
        _kernels.greedy_descent(reps.jmat, spins, local)
        s = spins.astype(np.int8)
        e = total_energy(pre, s)
        if e < best_e:
            best, best_e = s, e
    return best, best_e


def hot_ladder(grid: TemperatureGrid, schedule: McSchedule) -> np.ndarray:
    if schedule.hot_replicas == 0:
        return np.empty(0)
    t_max = grid.temps[-1]
    return np.geomspace(t_max, schedule.hot_factor * t_max, schedule.hot_replicas + 1)[1:]


@dataclass
class ThermalRun:
    spin_batches: np.ndarray  # (M, n_batches, N)
    energy_batches: np.ndarray  # (M, n_batches)
    swap_rate: float | None = None


def thermal_batches(pre: PrecomputedSample, grid: TemperatureGrid,
                    schedule: McSchedule = McSchedule()) -> ThermalRun:
    """Batch means of the spin estimator and energy at every grid temperature."""
    rng = np.random.default_rng(np.random.SeedSequence([int(schedule.rng_seed), 0x6D63]))
    improved = schedule.estimator == "conditional"
    nb = schedule.n_batches
    m = len(grid)
    if schedule.mode == "tempering":
        temps = np.concatenate([grid.temps, hot_ladder(grid, schedule)])
        reps = _Replicas(pre, temps, rng, swap_passes=schedule.swap_passes)
        reps.run(schedule.equilibration_sweeps)
        reps.stats[:] = 0
        spin_b, e_b = reps.run(schedule.measurement_sweeps, m, nb, improved)
        rate = reps.stats[2] / reps.stats[1] if reps.stats[1] else None
        return ThermalRun(spin_b, e_b, rate)
    spin_b = np.empty((m, nb, pre.n))
    e_b = np.empty((m, nb))
    reps = _Replicas(pre, [grid.temps[-1]], rng)
    for i in range(m - 1, -1, -1):
        if schedule.mode == "independent":
            reps = _Replicas(pre, [grid.temps[i]], rng)
        reps.set_temps([grid.temps[i]])
        reps.run(schedule.equilibration_sweeps)
        sb, eb = reps.run(schedule.measurement_sweeps, 1, nb, improved)
        spin_b[i], e_b[i] = sb[0], eb[0]
    return ThermalRun(spin_b, e_b)


def mc_curve(pre: PrecomputedSample, grid: TemperatureGrid = DEFAULT_GRID,
             schedule: McSchedule = McSchedule(), ground=None) -> FieldCurve:
    """Thermal field curve of the interacting model with batch-means errors.

    ``ground`` (a spin state) skips the annealing used for the T = 0 reference.
    """
    if ground is None:
        ground, _ = anneal_ground_state(pre, schedule)
    f0 = check_spins(ground).astype(float) @ pre.field_kernels
    run = thermal_batches(pre, grid, schedule)
    nb = schedule.n_batches
    s_avg = run.spin_batches.mean(axis=1)
    s_err = run.spin_batches.std(axis=1, ddof=1) / np.sqrt(nb)
    f_batches = run.spin_batches @ pre.field_kernels  # (M, nb, 3)
    f_err = f_batches.std(axis=1, ddof=1) / np.sqrt(nb)
    return FieldCurve(grid, s_avg @ pre.field_kernels, Method.MONTE_CARLO, f0,
                      field_err=f_err, spin_avg=s_avg, spin_err=s_err)


def mc_energy_terms(pre: PrecomputedSample, temperature: float, rng=None,
                    schedule: McSchedule = McSchedule()) -> tuple[float, float]:
    """Thermal ``(<H_r>, <H_int>)`` sampled with Metropolis."""
    if rng is not None:
        schedule = schedule.replace(rng_seed=int(rng.integers(2**63)))
    run = thermal_batches(pre, TemperatureGrid([temperature]), schedule)
    s = run.spin_batches[0].mean(axis=0)
    h_r = -float(s @ pre.local_fields)
    return h_r, float(run.energy_batches[0].mean()) - h_r
