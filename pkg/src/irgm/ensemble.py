"""Disorder ensembles: many samples per picture and interaction regime.

Sample ``i`` of an ensemble is generated from ``derive_seed(master_seed, i)``
and solved independently of every other sample, so results do not depend on
``k_samples``, worker count or execution order. Per-sample verdicts are
appended to a log as they finish; a re-run skips indices already present.
"""

from __future__ import annotations

import csv
import enum
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import COMPONENTS, ClassifierParams, classify_curve, smooth_curve
from .exact import DEFAULT_GRID, TemperatureGrid, exact_curve
from .geometry import Picture, PhysicalParams, derive_seed, generate
from .mc import McSchedule, anneal_ground_state, mc_curve
from .physics import EnergyScales, energy_scales, precompute

WORKERS_ENV = "IRGM_WORKERS"

VERDICT_HEADER = ["index", "seed", "picture", "regime", "Tr_K", "Tint_K",
                  "nonmono_x", "nonmono_y", "nonmono_z", "s_x", "s_y", "s_z",
                  "ratio_x", "ratio_y", "ratio_z"]

# lighter than the single-curve default; smoothing absorbs the extra noise
ENSEMBLE_SCHEDULE = McSchedule(equilibration_sweeps=300, measurement_sweeps=1500,
                               anneal_restarts=4, anneal_sweeps_per_stage=10)

# log-spaced unit scales spanning a factor of 3 either way
DEFAULT_SENSITIVITY_SCALES = tuple(3.0 ** (k / 12) for k in range(-12, 13))


class Regime(str, enum.Enum):
    NON_INTERACTING = "non_interacting"
    TR_LT_TINT = "tr_lt_tint"
    TR_SIM_TINT = "tr_sim_tint"

    @property
    def target_t_int(self) -> float | None:
        """Interaction scale (K) the regime aims for; None without interactions."""
        return {Regime.TR_LT_TINT: 1.0, Regime.TR_SIM_TINT: 0.1}.get(self)

    @property
    def interacting(self) -> bool:
        return self is not Regime.NON_INTERACTING


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        n = int(raw)
        if n < 1:
            raise ValueError(f"{WORKERS_ENV} must be >= 1")
        return n
    return os.cpu_count() or 1


@dataclass(frozen=True)
class EnsembleSpec:
    picture: Picture
    regime: Regime
    k_samples: int = 1000
    master_seed: int = 0
    grid: TemperatureGrid = DEFAULT_GRID
    schedule: McSchedule = ENSEMBLE_SCHEDULE
    classifier: ClassifierParams = ClassifierParams()
    params: PhysicalParams = PhysicalParams()
    unit_scale: float = 1.0  # V/m per classifier unit
    smoothing_window: int = 11
    lambda_iterations: int = 3
    save_curves: bool = False
    sensitivity_scales: tuple = DEFAULT_SENSITIVITY_SCALES

    def __post_init__(self):
        object.__setattr__(self, "picture", Picture.parse(self.picture))
        object.__setattr__(self, "regime", Regime(self.regime))
        object.__setattr__(self, "sensitivity_scales",
                           tuple(float(s) for s in self.sensitivity_scales))
        if self.k_samples < 1:
            raise ValueError("k_samples must be >= 1")
        if self.unit_scale <= 0 or any(s <= 0 for s in self.sensitivity_scales):
            raise ValueError("unit scales must be positive")
        if self.lambda_iterations < 1:
            raise ValueError("lambda_iterations must be >= 1")

    def to_json_dict(self) -> dict:
        return {
            "picture": self.picture.value,
            "regime": self.regime.value,
            "k_samples": self.k_samples,
            "master_seed": int(self.master_seed),
            "grid_K": [float(t) for t in self.grid.temps],
            "schedule": self.schedule.to_json_dict(),
            "classifier": self.classifier.to_json_dict(),
            "params": self.params.to_json_dict(),
            "unit_scale_V_per_m": self.unit_scale,
            "smoothing_window": self.smoothing_window,
            "lambda_iterations": self.lambda_iterations,
            "save_curves": self.save_curves,
            "sensitivity_scales": list(self.sensitivity_scales),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "EnsembleSpec":
        known = {"picture", "regime", "k_samples", "master_seed", "grid_K", "grid",
                 "schedule", "classifier", "params", "unit_scale_V_per_m",
                 "smoothing_window", "lambda_iterations", "save_curves", "sensitivity_scales"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown ensemble spec keys: {sorted(unknown)}")
        kw = {"picture": d["picture"], "regime": d["regime"]}
        for key in ("k_samples", "master_seed", "smoothing_window", "lambda_iterations",
                    "save_curves", "sensitivity_scales"):
            if key in d:
                kw[key] = d[key]
        if "grid_K" in d:
            kw["grid"] = TemperatureGrid(d["grid_K"])
        elif "grid" in d:
            g = d["grid"]
            kw["grid"] = TemperatureGrid.linear(g["tmin_K"], g["tmax_K"], g["points"])
        if "schedule" in d:
            kw["schedule"] = McSchedule.from_json_dict(d["schedule"])
        if "classifier" in d:
            kw["classifier"] = ClassifierParams.from_json_dict(d["classifier"])
        if "params" in d:
            kw["params"] = PhysicalParams.from_json_dict(d["params"])
        if "unit_scale_V_per_m" in d:
            kw["unit_scale"] = float(d["unit_scale_V_per_m"])
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "EnsembleSpec":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


def target_interaction_scale(sample, target: float, schedule: McSchedule,
                             iterations: int = 3):
    """Rescale the couplings so the ground-state ``T_int`` approaches ``target`` K.

    Starts from ``lam = target / T_int(lam=1)`` and repeats
    ``lam <- lam * target / T_int(lam)`` since the ground state itself moves
    with ``lam``. ``T_int`` jumps where the ground state changes, so the
    iteration can cycle; the iterate closest to the target (in log ratio) is
    kept. Returns ``(lam, precomputed, ground, scales)``.
    """
    lam = 1.0
    best = None
    for k in range(iterations + 1):
        pre = precompute(sample, lam)
        ground, _ = anneal_ground_state(pre, schedule)
        scales = energy_scales(pre, ground)
        if scales.t_int <= 0:
            return lam, pre, ground, scales
        miss = abs(math.log(scales.t_int / target))
        # lam = 1 is only the starting point, not a candidate
        if k > 0 and (best is None or miss < best[0]):
            best = (miss, lam, pre, ground, scales)
        lam *= target / scales.t_int
    return best[1:]


@dataclass
class SampleResult:
    index: int
    seed: int
    scales: EnergyScales
    interaction_scale: float
    verdicts: list  # smoothed (MC) or raw (exact) verdicts, x/y/z
    raw_verdicts: list | None = None  # unsmoothed MC verdicts
    curve_csv: str | None = None

    def row(self, spec: EnsembleSpec) -> list:
        v = self.verdicts
        return ([self.index, self.seed, spec.picture.value, spec.regime.value,
                 repr(float(self.scales.t_r)), repr(float(self.scales.t_int))]
                + [int(x.non_monotonic) for x in v]
                + [repr(float(x.avg_slope_s)) for x in v]
                + [repr(float(x.ratio)) for x in v])


def run_sample(spec: EnsembleSpec, index: int) -> SampleResult:
    seed = derive_seed(spec.master_seed, index)
    sample = generate(spec.picture, spec.params, seed)
    if spec.regime.interacting:
        lam, pre, ground, scales = target_interaction_scale(
            sample, spec.regime.target_t_int, spec.schedule.replace(rng_seed=seed),
            spec.lambda_iterations)
        curve = mc_curve(pre, spec.grid, spec.schedule.replace(rng_seed=seed), ground=ground)
        curve = smooth_curve(curve, spec.smoothing_window)
        verdicts = classify_curve(curve, spec.classifier, spec.unit_scale, use_smoothed=True)
        raw = classify_curve(curve, spec.classifier, spec.unit_scale, use_smoothed=False)
    else:
        lam = 0.0
        pre = precompute(sample, 0.0)
        ground = np.where(pre.local_fields >= 0, 1, -1)
        scales = energy_scales(pre, ground)
        curve = exact_curve(pre, spec.grid)
        verdicts = classify_curve(curve, spec.classifier, spec.unit_scale, use_smoothed=False)
        raw = None
    text = curve.to_csv() if spec.save_curves else None
    return SampleResult(index, seed, scales, lam, verdicts, raw, text)


def _run_sample_safe(args):
    spec, index = args
    try:
        return run_sample(spec, index), None
    except Exception as exc:  # recorded per sample, never fatal to the ensemble
        return index, f"{type(exc).__name__}: {exc}"


@dataclass
class EnsembleSummary:
    picture: Picture
    regime: Regime
    k_requested: int
    k_completed: int
    fractions: np.ndarray  # (3,) x, y, z
    errors: np.ndarray  # (3,) binomial standard errors
    raw_fractions: np.ndarray | None = None
    sensitivity: dict = field(default_factory=dict)  # unit scale -> (3,) fractions
    wall_time: float | None = None  # s; kept out of summary.json
    reference_regime: Regime | None = None  # pairs a non-interacting row with a regime

    def __post_init__(self):
        self.picture = Picture.parse(self.picture)
        self.regime = Regime(self.regime)
        self.fractions = np.asarray(self.fractions, dtype=float)
        if self.errors is None:
            self.errors = binomial_errors(self.fractions, self.k_completed)
        self.errors = np.asarray(self.errors, dtype=float)

    def to_json_dict(self) -> dict:
        d = {
            "picture": self.picture.value,
            "regime": self.regime.value,
            "k_requested": self.k_requested,
            "k_completed": self.k_completed,
            "fractions": dict(zip(COMPONENTS, map(float, self.fractions))),
            "standard_errors": dict(zip(COMPONENTS, map(float, self.errors))),
        }
        if self.raw_fractions is not None:
            d["raw_fractions"] = dict(zip(COMPONENTS, map(float, self.raw_fractions)))
        d["unit_scale_sensitivity"] = [
            {"unit_scale_V_per_m": float(k), "fractions": dict(zip(COMPONENTS, map(float, v)))}
            for k, v in sorted(self.sensitivity.items())
        ]
        return d


def binomial_errors(fractions, k: int) -> np.ndarray:
    f = np.asarray(fractions, dtype=float)
    if k <= 0:
        return np.full_like(f, np.nan)
    return np.sqrt(f * (1 - f) / k)


def read_verdicts(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def summarize_rows(spec: EnsembleSpec, rows: list[dict], raw_rows: list[dict] | None = None,
                   wall_time: float | None = None) -> EnsembleSummary:
    """Aggregate per-sample rows; every number is recomputable from the CSV."""
    k = len(rows)
    flags = np.array([[int(r[f"nonmono_{c}"]) for c in COMPONENTS] for r in rows], dtype=float)
    fractions = flags.mean(axis=0) if k else np.full(3, np.nan)
    sens = {}
    if k:
        s = np.array([[float(r[f"s_{c}"]) for c in COMPONENTS] for r in rows])
        ratio = np.array([[float(r[f"ratio_{c}"]) for c in COMPONENTS] for r in rows])
        cp = spec.classifier
        # the ratio is scale-free, so only the slope test depends on the unit
        for scale in spec.sensitivity_scales:
            hit = (ratio > cp.ratio_threshold) & (s * spec.unit_scale / scale > cp.slope_threshold)
            sens[scale] = hit.mean(axis=0)
    raw = None
    if raw_rows:
        raw = np.array([[int(r[f"nonmono_{c}"]) for c in COMPONENTS] for r in raw_rows],
                       dtype=float).mean(axis=0)
    return EnsembleSummary(spec.picture, spec.regime, spec.k_samples, k, fractions,
                           binomial_errors(fractions, k), raw, sens, wall_time)


def _write_rows(path: Path, rows: list[list]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(VERDICT_HEADER)
        w.writerows(rows)


def _load_log(path: Path) -> dict:
    done = {}
    if path.exists():
        for line in path.read_text().splitlines():
            if line.strip():
                rec = json.loads(line)
                done[rec["index"]] = rec
    return done


def run_ensemble(spec: EnsembleSpec, out_dir=None, workers: int | None = None,
                 progress=None) -> EnsembleSummary:
    """Run (or resume) an ensemble and return its summary.

    With ``out_dir`` the directory receives ``spec.json``, ``samples.jsonl``
    (append-only log), ``verdicts.csv`` (sorted by index), ``verdicts_raw.csv``
    (MC regimes), ``failures.csv`` when any sample failed, optional
    ``curves/NNNNNN.csv`` and finally ``summary.json``.
    """
    t0 = time.perf_counter()
    out = Path(out_dir) if out_dir is not None else None
    done: dict = {}
    log_fh = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        spec_text = json.dumps(spec.to_json_dict(), indent=2, sort_keys=True) + "\n"
        spec_path = out / "spec.json"
        if spec_path.exists() and spec_path.read_text() != spec_text:
            raise ValueError(f"{out} holds a different ensemble spec; use a fresh directory")
        spec_path.write_text(spec_text)
        log_path = out / "samples.jsonl"
        done = _load_log(log_path)
        log_fh = open(log_path, "a")
        if spec.save_curves:
            (out / "curves").mkdir(exist_ok=True)
    todo = [i for i in range(spec.k_samples) if i not in done or done[i].get("error")]
    workers = worker_count() if workers is None else workers

    def record(result, error):
        if error is not None:
            rec = {"index": int(result), "error": error}
        else:
            rec = {"index": result.index, "row": [str(x) for x in result.row(spec)]}
            if result.raw_verdicts is not None:
                rec["raw"] = [int(v.non_monotonic) for v in result.raw_verdicts]
            if out is not None and result.curve_csv is not None:
                (out / "curves" / f"{result.index:06d}.csv").write_text(result.curve_csv)
        done[rec["index"]] = rec
        if log_fh is not None:
            log_fh.write(json.dumps(rec) + "\n")
            log_fh.flush()
        if progress is not None:
            progress(rec)

    try:
        jobs = [(spec, i) for i in todo]
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for res, err in pool.map(_run_sample_safe, jobs, chunksize=4):
                    record(res, err)
        else:
            for job in jobs:
                record(*_run_sample_safe(job))
    finally:
        if log_fh is not None:
            log_fh.close()

    ok = [done[i] for i in sorted(done) if i < spec.k_samples and "row" in done[i]]
    failed = [done[i] for i in sorted(done) if i < spec.k_samples and "error" in done[i]]
    rows = [dict(zip(VERDICT_HEADER, rec["row"])) for rec in ok]
    raw_rows = None
    if spec.regime.interacting and ok and all("raw" in rec for rec in ok):
        raw_rows = []
        for rec in ok:
            r = dict(zip(VERDICT_HEADER, rec["row"]))
            r.update({f"nonmono_{c}": str(v) for c, v in zip(COMPONENTS, rec["raw"])})
            raw_rows.append(r)
    summary = summarize_rows(spec, rows, raw_rows, time.perf_counter() - t0)
    if out is not None:
        _write_rows(out / "verdicts.csv", [rec["row"] for rec in ok])
        if raw_rows is not None:
            _write_rows(out / "verdicts_raw.csv", [[r[h] for h in VERDICT_HEADER] for r in raw_rows])
        fail_path = out / "failures.csv"
        if failed:
            with open(fail_path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["index", "error"])
                w.writerows([[rec["index"], rec["error"]] for rec in failed])
        elif fail_path.exists():
            fail_path.unlink()
        (out / "summary.json").write_text(
            json.dumps(summary.to_json_dict(), indent=2, sort_keys=True) + "\n")
    return summary


# -- qualitative orderings ----------------------------------------------------

@dataclass(frozen=True)
class OrderingCheck:
    kind: str  # "interaction", "picture" or "regime"
    larger: str
    smaller: str
    component: str
    diff: float
    combined_se: float
    status: str  # "holds", "tie" or "violated"

    @property
    def significant(self) -> bool:
        """Holds by more than two combined standard errors."""
        return self.status == "holds" and self.diff > 2 * self.combined_se

    def to_json_dict(self) -> dict:
        return {"kind": self.kind, "larger": self.larger, "smaller": self.smaller,
                "component": self.component, "diff": self.diff,
                "combined_se": self.combined_se, "status": self.status,
                "significant": self.significant}


def _label(s: EnsembleSummary) -> str:
    return f"{s.picture.value}/{s.regime.value}"


def _check(kind, big: EnsembleSummary, small: EnsembleSummary, comp: int,
           tie_tol: float = 1e-12) -> OrderingCheck:
    diff = float(big.fractions[comp] - small.fractions[comp])
    se = float(np.hypot(big.errors[comp], small.errors[comp]))
    status = "tie" if abs(diff) <= tie_tol else ("holds" if diff > 0 else "violated")
    small_label = _label(small)
    if small.reference_regime is not None:
        small_label += f"@{small.reference_regime.value}"
    return OrderingCheck(kind, _label(big), small_label, COMPONENTS[comp], diff, se, status)


def compare_regimes(summaries: list[EnsembleSummary]) -> list[OrderingCheck]:
    """Evaluate the expected orderings among whichever cells are present.

    * interaction: each interacting cell exceeds the non-interacting cell of
      its picture (a non-interacting summary whose ``reference_regime`` names
      the interacting regime is preferred over an unpaired one);
    * picture: for interacting regimes, shell > random dipole > trap;
    * regime: for each picture, ``tr_lt_tint`` exceeds ``tr_sim_tint``.
    """
    cells = {}
    baselines = {}
    for s in summaries:
        if s.regime.interacting:
            cells[(s.picture, s.regime)] = s
        else:
            baselines[(s.picture, s.reference_regime)] = s
    checks = []
    inter = [Regime.TR_LT_TINT, Regime.TR_SIM_TINT]
    for (pic, reg), s in sorted(cells.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)):
        base = baselines.get((pic, reg), baselines.get((pic, None)))
        if base is not None:
            checks += [_check("interaction", s, base, c) for c in range(3)]
    order = [Picture.SPHERICAL_SHELL, Picture.RANDOM_DIPOLE, Picture.TRAP]
    for reg in inter:
        for big, small in zip(order, order[1:]):
            if (big, reg) in cells and (small, reg) in cells:
                checks += [_check("picture", cells[(big, reg)], cells[(small, reg)], c)
                           for c in range(3)]
    for pic in order:
        if (pic, inter[0]) in cells and (pic, inter[1]) in cells:
            checks += [_check("regime", cells[(pic, inter[0])], cells[(pic, inter[1])], c)
                       for c in range(3)]
    return checks


def load_summary(path) -> EnsembleSummary:
    d = json.loads(Path(path).read_text())
    sens = {float(e["unit_scale_V_per_m"]): np.array([e["fractions"][c] for c in COMPONENTS])
            for e in d.get("unit_scale_sensitivity", [])}
    raw = d.get("raw_fractions")
    return EnsembleSummary(
        d["picture"], d["regime"], d["k_requested"], d["k_completed"],
        np.array([d["fractions"][c] for c in COMPONENTS]),
        np.array([d["standard_errors"][c] for c in COMPONENTS]),
        None if raw is None else np.array([raw[c] for c in COMPONENTS]), sens)


# fractions of non-monotonic samples reported for 10,000-sample ensembles,
# keyed by (picture, interacting regime) -> (without interactions, with)
REFERENCE_TABLE = {
    (Picture.TRAP, Regime.TR_LT_TINT): ((0.159, 0.164, 0.120), (0.480, 0.486, 0.401)),
    (Picture.TRAP, Regime.TR_SIM_TINT): ((0.110, 0.109, 0.074), (0.305, 0.302, 0.242)),
    (Picture.RANDOM_DIPOLE, Regime.TR_LT_TINT): ((0.147, 0.159, 0.124), (0.619, 0.619, 0.572)),
    (Picture.RANDOM_DIPOLE, Regime.TR_SIM_TINT): ((0.100, 0.094, 0.078), (0.425, 0.423, 0.369)),
    (Picture.SPHERICAL_SHELL, Regime.TR_LT_TINT): ((0.250, 0.253, 0.280), (0.895, 0.894, 0.901)),
    (Picture.SPHERICAL_SHELL, Regime.TR_SIM_TINT): ((0.210, 0.218, 0.258), (0.794, 0.790, 0.814)),
}
REFERENCE_K = 10_000


def reference_summaries() -> list[EnsembleSummary]:
    out = []
    for (pic, reg), (without, with_) in REFERENCE_TABLE.items():
        out.append(EnsembleSummary(pic, Regime.NON_INTERACTING, REFERENCE_K, REFERENCE_K,
                                   without, None, reference_regime=reg))
        out.append(EnsembleSummary(pic, reg, REFERENCE_K, REFERENCE_K, with_, None))
    return out
