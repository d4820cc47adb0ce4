import json

import pytest
from click.testing import CliRunner

from irgm.cli import main


@pytest.fixture
def run(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    runner = CliRunner()

    def invoke(*args):
        return runner.invoke(main, [str(a) for a in args], catch_exceptions=False)

    return invoke


def _sample(run, name="s.json", seed=7, *extra):
    res = run("generate", "--picture", "trap", "--seed", seed, "-o", name, *extra)
    assert res.exit_code == 0, res.output
    return name


def test_version(run):
    res = run("--version")
    assert res.exit_code == 0 and "irgm" in res.output


def test_generate_and_manifest(run, tmp_path):
    _sample(run, "s.json", 7, "--n-defects", 12)
    doc = json.loads((tmp_path / "s.json").read_text())
    assert doc["picture"] == "trap" and len(doc["defects"]) == 12
    man = json.loads((tmp_path / "s.json.manifest.json").read_text())
    assert man["command"] == "generate" and man["seed"] == 7
    assert man["outputs"] == ["s.json"]


def test_generate_rejects_bad_input(run):
    assert run("generate", "--picture", "lattice", "--seed", 1, "-o", "x.json").exit_code == 2
    assert run("generate", "--picture", "trap", "--seed", 1, "-o", "x.json",
               "--epsilon-r", 0.1).exit_code == 2
    assert run("generate", "--picture", "trap", "--seed", 1, "-o", "x.json",
               "--params-file", "missing.json").exit_code == 2


def test_sweep_exact_default_grid(run, tmp_path):
    _sample(run)
    res = run("sweep", "s.json", "-o", "c.csv", "--convert")
    assert res.exit_code == 0, res.output
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "T_K,Fx,Fy,Fz" and len(lines) == 101
    df = (tmp_path / "c_df.csv").read_text().splitlines()
    assert df[0] == "T_K,delta_f_Hz" and len(df) == 101
    man = json.loads((tmp_path / "c.csv.manifest.json").read_text())
    assert man["parameters"]["method"] == "exact"


def test_sweep_byte_identical(run, tmp_path):
    _sample(run, "s.json", 3, "--n-defects", 10)
    args = ["sweep", "s.json", "--interacting", "--points", 20, "--equilibration-sweeps", 100,
            "--measurement-sweeps", 400, "--mc-seed", 5, "--convert"]
    assert run(*args, "-o", "a.csv").exit_code == 0
    assert run(*args, "-o", "b.csv").exit_code == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a_df.csv").read_bytes() == (tmp_path / "b_df.csv").read_bytes()
    header = (tmp_path / "a.csv").read_text().splitlines()[0]
    assert header == "T_K,Fx,Fy,Fz,Fx_s,Fy_s,Fz_s,Fx_err,Fy_err,Fz_err"


def test_sweep_enumeration(run, tmp_path):
    _sample(run, "s.json", 3, "--n-defects", 8)
    res = run("sweep", "s.json", "--interacting", "--enumerate", "--points", 10, "-o", "e.csv")
    assert res.exit_code == 0, res.output
    assert len((tmp_path / "e.csv").read_text().splitlines()) == 11


def test_sweep_config_errors(run):
    _sample(run)
    assert run("sweep", "missing.json", "-o", "c.csv").exit_code == 2
    assert run("sweep", "s.json", "-o", "c.csv", "--interacting", "--exact-only").exit_code == 2
    assert run("sweep", "s.json", "-o", "c.csv", "--interacting", "--enumerate").exit_code == 2
    assert run("sweep", "s.json", "-o", "c.csv", "--tmin", 1.0, "--tmax", 0.5,
               "--points", 3).exit_code == 2


def test_classify(run, tmp_path):
    _sample(run)
    run("sweep", "s.json", "-o", "c.csv")
    res = run("classify", "c.csv", "-o", "v.json")
    assert res.exit_code == 0, res.output
    doc = json.loads((tmp_path / "v.json").read_text())
    assert set(doc) >= {"x", "y", "z"}
    assert set(doc["z"]) == {"non_monotonic", "s", "sum_pos", "sum_neg", "ratio", "params"}
    assert run("classify", "c.csv", "-o", "w.json", "--series", "smoothed").exit_code == 2


def test_estimate(run, tmp_path):
    res = run("estimate", "-o", "est.json")
    assert res.exit_code == 0, res.output
    doc = json.loads((tmp_path / "est.json").read_text())
    assert set(doc) == {"displacement_nm", "field_V_per_m", "frequency_Hz"}
    assert doc["field_V_per_m"] == pytest.approx(4500, rel=0.15)
    assert run("estimate", "--d-nm", -1).exit_code == 2


def test_fit_and_synth_target(run, tmp_path):
    (tmp_path / "fit.json").write_text(json.dumps({"reference_seed": 2, "restarts": 50}))
    res = run("synth-target", "fit.json", "-o", "q1.csv", "--c", 0.105, "--seed", 4,
              "--points", 30)
    assert res.exit_code == 0, res.output
    res = run("fit", "fit.json", "q1.csv", "-o", "fit_out.json")
    assert res.exit_code == 0, res.output
    first = (tmp_path / "fit_out.json").read_bytes()
    run("fit", "fit.json", "q1.csv", "-o", "fit_out.json")
    assert (tmp_path / "fit_out.json").read_bytes() == first
    doc = json.loads(first)
    assert doc["fits"][0]["label"] == "q1"
    assert run("fit", "fit.json", "missing.csv", "-o", "x.json").exit_code == 2
    (tmp_path / "bad.json").write_text(json.dumps({"restart": 5}))
    assert run("fit", "bad.json", "q1.csv", "-o", "x.json").exit_code == 2


def test_ensemble_smoke(run, tmp_path):
    spec = {"picture": "trap", "regime": "tr_sim_tint", "k_samples": 10, "master_seed": 1,
            "params": {"n_defects": 12},
            "grid": {"tmin_K": 0.01, "tmax_K": 1.0, "points": 30},
            "schedule": {"equilibration_sweeps": 100, "measurement_sweeps": 400,
                         "anneal_restarts": 2, "anneal_sweeps_per_stage": 5}}
    (tmp_path / "spec.json").write_text(json.dumps(spec))
    res = run("ensemble", "spec.json", "out", "--workers", 1, "--quiet")
    assert res.exit_code == 0, res.output
    assert len((tmp_path / "out" / "verdicts.csv").read_text().splitlines()) == 11
    summary = (tmp_path / "out" / "summary.json").read_bytes()
    man = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert man["command"] == "ensemble" and man["parameters"]["k_completed"] == 10
    res = run("ensemble", "spec.json", "out2", "--workers", 1, "--quiet")
    assert (tmp_path / "out2" / "summary.json").read_bytes() == summary
    assert (tmp_path / "out2" / "verdicts.csv").read_bytes() == \
        (tmp_path / "out" / "verdicts.csv").read_bytes()
    (tmp_path / "bad.json").write_text(json.dumps({**spec, "k": 3}))
    assert run("ensemble", "bad.json", "out3").exit_code == 2
