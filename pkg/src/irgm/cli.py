"""Command-line interface.

Every command writes plain CSV/JSON outputs followed by a run manifest
(``<output>.manifest.json``, or ``manifest.json`` inside an output directory)
that lists the resolved parameters and every file written. Exit status is 0 on
success, 2 for usage or configuration errors and 1 for runtime failures.
"""

from __future__ import annotations

import contextlib
import json
import platform
import sys
import time
from importlib import metadata
from pathlib import Path

import click
import numpy as np

from . import __version__
from .analysis import (COMPONENTS, ClassifierParams, ConversionParams, classify,
                       frequency_shift, magnitude_estimate, smooth_curve)
from .ensemble import EnsembleSpec, run_ensemble, worker_count
from .exact import ENUMERATION_LIMIT, FieldCurve, Method, TemperatureGrid, enumerate_thermal, exact_curve
from .fit import FitSpec, Target, fit_curves, reference_sample, synthetic_target
from .geometry import DEBYE, NM, Picture, PhysicalParams, SampleConfig, generate
from .mc import McSchedule, mc_curve
from .physics import precompute


def build_id() -> str:
    try:
        version = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        version = __version__
    return f"irgm {version} (python {platform.python_version()}, numpy {np.__version__})"


class ConfigError(click.UsageError):
    """Bad inputs; exits with status 2."""


@contextlib.contextmanager
def config_stage():
    try:
        yield
    except click.ClickException:
        raise
    except (ValueError, KeyError, TypeError, FileNotFoundError, json.JSONDecodeError) as exc:
        raise ConfigError(str(exc)) from exc


@contextlib.contextmanager
def runtime_stage():
    try:
        yield
    except click.ClickException:
        raise
    except Exception as exc:
        raise click.ClickException(f"{type(exc).__name__}: {exc}") from exc


def write_manifest(path: Path, command: str, parameters: dict, outputs: list, started: float,
                   config_path=None, seed=None) -> Path:
    manifest = {
        "command": command,
        "config_path": None if config_path is None else str(config_path),
        "parameters": parameters,
        "seed": seed,
        "version": build_id(),
        "outputs": [str(p) for p in outputs],
        "wall_time_s": time.perf_counter() - started,
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(version=build_id(), prog_name="irgm", message="%(version)s")
def main():
    """Interacting random-field dipole defects and the field they create at a qubit."""


# -- generate -----------------------------------------------------------------

def _params_from(params_file, overrides: dict) -> PhysicalParams:
    params = PhysicalParams()
    if params_file is not None:
        params = PhysicalParams.from_json_dict(json.loads(Path(params_file).read_text()))
    changes = {}
    if overrides.get("p0_debye") is not None:
        changes["p0"] = overrides["p0_debye"] * DEBYE
    for key in ("epsilon_r", "n_defects", "interaction_scale", "field_distribution",
                "shell_sampling"):
        if overrides.get(key) is not None:
            changes[key] = overrides[key]
    if overrides.get("delta_e0_v_per_m") is not None:
        changes["delta_e0"] = overrides["delta_e0_v_per_m"]
    return params.replace(**changes) if changes else params


@main.command("generate")
@click.option("--picture", required=True,
              type=click.Choice([p.value for p in Picture] + ["shell", "dipole"]))
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), required=True)
@click.option("-o", "--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--params-file", type=click.Path(dir_okay=False, path_type=Path),
              help="PhysicalParams JSON; explicit flags override it.")
@click.option("--n-defects", type=int)
@click.option("--p0-debye", type=float)
@click.option("--epsilon-r", type=float)
@click.option("--delta-e0-v-per-m", type=float)
@click.option("--interaction-scale", type=float)
@click.option("--field-distribution", type=click.Choice(["gaussian", "ball"]))
@click.option("--shell-sampling", type=click.Choice(["volume", "coordinate"]))
def cmd_generate(picture, seed, out, params_file, **overrides):
    """Draw one disorder realization and write it as JSON."""
    started = time.perf_counter()
    with config_stage():
        params = _params_from(params_file, overrides)
        pic = Picture.parse(picture)
    with runtime_stage():
        sample = generate(pic, params, seed)
        out.write_text(sample.to_json())
        write_manifest(manifest_path(out), "generate",
                       {"picture": pic.value, "params": params.to_json_dict()},
                       [out], started, params_file, seed)


# -- sweep --------------------------------------------------------------------

@main.command("sweep")
@click.argument("sample_file", type=click.Path(dir_okay=False, path_type=Path))
@click.option("-o", "--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--tmin", type=float, default=0.01, show_default=True, help="K")
@click.option("--tmax", type=float, default=1.0, show_default=True, help="K")
@click.option("--points", type=click.IntRange(1), default=100, show_default=True)
@click.option("--interacting/--non-interacting", default=False, show_default=True)
@click.option("--interaction-scale", type=float, help="Override the sample's lambda.")
@click.option("--exact-only", is_flag=True, help="Refuse anything but the closed-form solver.")
@click.option("--enumerate", "use_enumeration", is_flag=True,
              help=f"Exact enumeration for interacting samples with N <= {ENUMERATION_LIMIT}.")
@click.option("--equilibration-sweeps", type=click.IntRange(1), default=2000, show_default=True)
@click.option("--measurement-sweeps", type=click.IntRange(1), default=10_000, show_default=True)
@click.option("--mc-seed", type=click.IntRange(0, 2**64 - 1), default=0, show_default=True)
@click.option("--estimator", type=click.Choice(["conditional", "spin"]), default="conditional",
              show_default=True)
@click.option("--mc-mode", type=click.Choice(["tempering", "sequential", "independent"]),
              default="tempering", show_default=True)
@click.option("--smooth-window", type=int, default=None,
              help="Moving-average width; defaults to 11 for MC curves and off otherwise.")
@click.option("--convert", is_flag=True, help="Also write the frequency shift CSV.")
@click.option("--df-out", type=click.Path(dir_okay=False, path_type=Path),
              help="Frequency shift CSV path (default: <out stem>_df.csv).")
def cmd_sweep(sample_file, out, tmin, tmax, points, interacting, interaction_scale, exact_only,
              use_enumeration, equilibration_sweeps, measurement_sweeps, mc_seed, estimator,
              mc_mode, smooth_window, convert, df_out):
    """Field at the qubit over a temperature grid for one sample."""
    started = time.perf_counter()
    with config_stage():
        sample = SampleConfig.load(sample_file)
        grid = TemperatureGrid.linear(tmin, tmax, points)
        lam = sample.params.interaction_scale if interaction_scale is None else interaction_scale
        if not interacting:
            lam = 0.0
        if interacting and exact_only:
            raise ValueError("--exact-only solves the non-interacting model; drop --interacting")
        if interacting and lam == 0.0:
            raise ValueError("--interacting needs a nonzero interaction scale")
        schedule = McSchedule(equilibration_sweeps=equilibration_sweeps,
                              measurement_sweeps=max(measurement_sweeps, 20),
                              rng_seed=mc_seed, estimator=estimator, mode=mc_mode)
        pre = precompute(sample, lam)
        if use_enumeration and pre.n > ENUMERATION_LIMIT:
            raise ValueError(f"--enumerate needs N <= {ENUMERATION_LIMIT}")
    with runtime_stage():
        if not interacting:
            curve = exact_curve(pre, grid)
        elif use_enumeration:
            curve = enumerate_thermal(pre, grid)
        else:
            curve = mc_curve(pre, grid, schedule)
        window = smooth_window
        if window is None:
            window = 11 if curve.method is Method.MONTE_CARLO else 0
        if window:
            curve = smooth_curve(curve, min(window, len(grid) - (1 - len(grid) % 2)))
        out.write_text(curve.to_csv())
        outputs = [out]
        if convert:
            df_path = df_out or out.with_name(out.stem + "_df.csv")
            df_path.write_text(_df_csv(curve))
            outputs.append(df_path)
        params = {"grid": {"tmin_K": tmin, "tmax_K": tmax, "points": points},
                  "method": curve.method.value, "interaction_scale": lam,
                  "smooth_window": window, "f0_ref_V_per_m": curve.f0_ref.tolist()}
        if curve.method is Method.MONTE_CARLO:
            params["schedule"] = schedule.to_json_dict()
        write_manifest(manifest_path(out), "sweep", params, outputs, started, sample_file,
                       mc_seed if curve.method is Method.MONTE_CARLO else None)


def _df_csv(curve: FieldCurve) -> str:
    conv = ConversionParams()
    cols = [curve.temps, frequency_shift(curve, conv)]
    header = ["T_K", "delta_f_Hz"]
    if curve.field_smoothed is not None:
        cols.append(frequency_shift(curve, conv, use_smoothed=True))
        header.append("delta_f_smoothed_Hz")
    lines = [",".join(header)]
    lines += [",".join(repr(float(x)) for x in row) for row in np.column_stack(cols)]
    return "\n".join(lines) + "\n"


# -- ensemble -----------------------------------------------------------------

@main.command("ensemble")
@click.argument("spec_file", type=click.Path(dir_okay=False, path_type=Path))
@click.argument("out_dir", type=click.Path(file_okay=False, path_type=Path))
@click.option("--workers", type=click.IntRange(1), default=None,
              help="Worker processes (default: IRGM_WORKERS or the CPU count).")
@click.option("--quiet", is_flag=True)
def cmd_ensemble(spec_file, out_dir, workers, quiet):
    """Run or resume an ensemble; writes verdicts.csv and summary.json."""
    started = time.perf_counter()
    with config_stage():
        spec = EnsembleSpec.load(spec_file)
        workers = workers or worker_count()
    with runtime_stage():
        progress = None
        if not quiet:
            def progress(rec):
                tag = "error" if "error" in rec else "ok"
                click.echo(f"sample {rec['index']}: {tag}", err=True)
        summary = run_ensemble(spec, out_dir, workers=workers, progress=progress)
        outputs = sorted(p for p in out_dir.rglob("*") if p.is_file() and p.name != "manifest.json")
        params = spec.to_json_dict()
        params["workers"] = workers
        params["k_completed"] = summary.k_completed
        write_manifest(out_dir / "manifest.json", "ensemble", params, outputs, started,
                       spec_file, spec.master_seed)
        click.echo(json.dumps(summary.to_json_dict()["fractions"]))
        if summary.k_completed < spec.k_samples:
            raise click.ClickException(
                f"{spec.k_samples - summary.k_completed} samples failed; see failures.csv")


# -- classify -----------------------------------------------------------------

@main.command("classify")
@click.argument("curve_file", type=click.Path(dir_okay=False, path_type=Path))
@click.option("-o", "--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--ratio-threshold", type=float, default=0.1, show_default=True)
@click.option("--slope-threshold", type=float, default=5.0, show_default=True)
@click.option("--slope-filter-factor", type=float, default=0.5, show_default=True)
@click.option("--magnitude", type=click.Choice(["sum", "count"]), default="sum", show_default=True)
@click.option("--unit-scale-v-per-m", type=float, default=1.0, show_default=True,
              help="Field unit (V/m) in which the slope threshold is expressed.")
@click.option("--series", type=click.Choice(["auto", "raw", "smoothed"]), default="auto",
              show_default=True, help="auto uses the smoothed columns when present.")
def cmd_classify(curve_file, out, ratio_threshold, slope_threshold, slope_filter_factor,
                 magnitude, unit_scale_v_per_m, series):
    """Non-monotonicity verdict for each field component of a curve CSV."""
    started = time.perf_counter()
    with config_stage():
        params = ClassifierParams(ratio_threshold, slope_threshold, slope_filter_factor, magnitude)
        if unit_scale_v_per_m <= 0:
            raise ValueError("--unit-scale-v-per-m must be positive")
        curve = FieldCurve.from_csv(curve_file)
        use_smoothed = curve.field_smoothed is not None if series == "auto" else series == "smoothed"
        if use_smoothed and curve.field_smoothed is None:
            raise ValueError("curve has no smoothed columns")
        data = curve.field_smoothed if use_smoothed else curve.field
    with runtime_stage():
        result = {c: classify(data[:, i] / unit_scale_v_per_m, params).to_json_dict()
                  for i, c in enumerate(COMPONENTS)}
        result["series"] = "smoothed" if use_smoothed else "raw"
        result["unit_scale_V_per_m"] = unit_scale_v_per_m
        out.write_text(_dump(result))
        write_manifest(manifest_path(out), "classify", {"params": params.to_json_dict(),
                       "unit_scale_V_per_m": unit_scale_v_per_m, "series": result["series"]},
                       [out], started, curve_file)


# -- estimate -----------------------------------------------------------------

@main.command("estimate")
@click.option("-o", "--out", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--n-defects", type=click.IntRange(1), default=30, show_default=True)
@click.option("--p0-debye", type=float, default=48.0, show_default=True)
@click.option("--epsilon-r", type=float, default=11.0, show_default=True)
@click.option("--d-nm", type=float, default=50.0, show_default=True,
              help="Typical defect-qubit distance.")
@click.option("--grad-b-mt-per-nm", type=float, default=0.1, show_default=True,
              help="Average magnetic field gradient magnitude.")
def cmd_estimate(out, n_defects, p0_debye, epsilon_r, d_nm, grad_b_mt_per_nm):
    """Order-of-magnitude field, dot displacement and frequency shift."""
    started = time.perf_counter()
    with config_stage():
        params = PhysicalParams(p0=p0_debye * DEBYE, epsilon_r=epsilon_r, n_defects=n_defects)
        if d_nm <= 0:
            raise ValueError("--d-nm must be positive")
    with runtime_stage():
        est = magnitude_estimate(params, ConversionParams(), d_nm * NM, grad_b_mt_per_nm * 1e6)
        result = {"field_V_per_m": est.field, "displacement_nm": est.displacement / NM,
                  "frequency_Hz": est.frequency}
        text = _dump(result)
        if out is None:
            click.echo(text, nl=False)
        else:
            out.write_text(text)
            write_manifest(manifest_path(out), "estimate",
                           {"n_defects": n_defects, "p0_debye": p0_debye, "epsilon_r": epsilon_r,
                            "d_nm": d_nm, "grad_b_mT_per_nm": grad_b_mt_per_nm}, [out], started)


# -- fit ----------------------------------------------------------------------

FIT_KEYS = {"reference_seed", "params", "z_nm", "jitter_radius_nm", "restarts", "seed", "polish"}


def load_fit_config(path: Path):
    d = json.loads(path.read_text())
    unknown = set(d) - FIT_KEYS
    if unknown:
        raise ValueError(f"unknown fit spec keys: {sorted(unknown)}")
    params = PhysicalParams.from_json_dict(d["params"]) if "params" in d else None
    ref = reference_sample(int(d.get("reference_seed", 0)), params, float(d.get("z_nm", 36.0)))
    kw = {"jitter_radius": float(d.get("jitter_radius_nm", 5.0)) * NM,
          "restarts": int(d.get("restarts", 500)), "seed": int(d.get("seed", 0)),
          "polish": bool(d.get("polish", False))}
    return ref, kw, d


@main.command("fit")
@click.argument("fit_spec", type=click.Path(dir_okay=False, path_type=Path))
@click.argument("targets", nargs=-1, required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("-o", "--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
def cmd_fit(fit_spec, targets, out):
    """Fit conversion factors and jittered positions to target shift curves."""
    started = time.perf_counter()
    with config_stage():
        ref, kw, raw = load_fit_config(fit_spec)
        curves = [Target.from_csv(p) for p in targets]
        spec = FitSpec(ref, curves, **kw)
    with runtime_stage():
        result = fit_curves(spec)
        out.write_text(_dump(result.to_json_dict()))
        write_manifest(manifest_path(out), "fit", {"spec": raw, "targets": [str(p) for p in targets]},
                       [out], started, fit_spec, kw["seed"])


@main.command("synth-target")
@click.argument("fit_spec", type=click.Path(dir_okay=False, path_type=Path))
@click.option("-o", "--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--c", "c_value", type=float, required=True, help="Conversion factor, Hz per V/m.")
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=0, show_default=True)
@click.option("--tmin", type=float, default=0.01, show_default=True)
@click.option("--tmax", type=float, default=1.0, show_default=True)
@click.option("--points", type=click.IntRange(1), default=100, show_default=True)
def cmd_synth_target(fit_spec, out, c_value, seed, tmin, tmax, points):
    """Write a synthetic target curve from a randomly jittered reference sample."""
    started = time.perf_counter()
    with config_stage():
        ref, kw, _ = load_fit_config(fit_spec)
        grid = TemperatureGrid.linear(tmin, tmax, points)
    with runtime_stage():
        target, offsets = synthetic_target(ref, c_value, grid.temps, seed, kw["jitter_radius"],
                                           out.stem)
        target.save_csv(out)
        write_manifest(manifest_path(out), "synth-target",
                       {"c": c_value, "offsets_nm": (offsets / NM).tolist()},
                       [out], started, fit_spec, seed)


if __name__ == "__main__":
    sys.exit(main())
