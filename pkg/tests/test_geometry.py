import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from irgm.geometry import (
    DEBYE, NM, MIN_SEPARATION, Picture, PhysicalParams, SampleConfig, derive_seed,
    draw_random_field, draw_random_fields, generate, generate_random_dipole,
    generate_spherical_shell, generate_trap, sample_shell_positions, sample_unit_vectors,
)


def test_default_params():
    p = PhysicalParams()
    assert p.p0 == pytest.approx(48 * DEBYE)
    # 48 D is about 1 e*nm
    assert p.p0 == pytest.approx(1.602e-28, rel=2e-3)
    assert (p.epsilon_r, p.n_defects, p.delta_e0, p.interaction_scale) == (11, 30, 1e4, 1.0)


@pytest.mark.parametrize("bad", [
    dict(p0=0.0), dict(epsilon_r=0.5), dict(n_defects=0), dict(delta_e0=-1.0),
    dict(interaction_scale=-0.1), dict(field_distribution="cauchy"), dict(shell_sampling="x"),
])
def test_params_rejected(bad):
    with pytest.raises(ValueError):
        PhysicalParams(**bad)


def test_trap_defaults_seed7():
    s = generate_trap(PhysicalParams(), 7)
    assert s.n == 30
    assert np.allclose(s.positions[:, 2], 50 * NM)
    assert np.all(s.orientations == [0.0, 0.0, 1.0])
    assert np.all(np.abs(s.positions[:, :2]) < 150 * NM)


def test_trap_single_site_in_square():
    s = generate_trap(PhysicalParams(n_defects=1), 0)
    assert s.n == 1
    assert np.all(np.abs(s.positions[0, :2]) <= 150 * NM)


def test_trap_serialization_is_deterministic():
    a = generate_trap(PhysicalParams(), 7).to_json()
    b = generate_trap(PhysicalParams(), 7).to_json()
    assert a == b


def test_random_dipole_layer():
    s = generate_random_dipole(PhysicalParams(), 3)
    z = s.positions[:, 2] / NM
    assert np.all((z > 30) & (z < 50))


def test_unit_vectors_isotropic():
    v = sample_unit_vectors(np.random.default_rng(1), 100_000)
    assert np.allclose(np.linalg.norm(v, axis=1), 1.0, atol=1e-12)
    assert np.linalg.norm(v.mean(axis=0)) < 0.01


def test_shell_radii():
    s = generate_spherical_shell(PhysicalParams(), 11)
    r = np.linalg.norm(s.positions, axis=1) / NM
    assert np.all((r > 60) & (r < 80))


def test_shell_radial_law_ks():
    pos = sample_shell_positions(np.random.default_rng(5), 100_000)
    r = np.linalg.norm(pos, axis=1)
    cdf = lambda x: (x**3 - 60.0**3) / (80.0**3 - 60.0**3)
    assert stats.kstest(r, cdf).statistic < 0.01
    assert np.linalg.norm((pos / r[:, None]).mean(axis=0)) < 0.01


def test_shell_coordinate_mode_differs():
    pos = sample_shell_positions(np.random.default_rng(5), 50_000, mode="coordinate")
    r = np.linalg.norm(pos, axis=1)
    assert np.all((r >= 60) & (r <= 80))
    # uniform in r puts more mass near the inner radius than the volume law
    assert np.mean(r < 70) > 0.49


def test_random_field_zero_scale():
    p = PhysicalParams(delta_e0=0.0)
    assert np.all(draw_random_field(p, np.random.default_rng(0)) == 0.0)


@pytest.mark.parametrize("dist", ["gaussian", "ball"])
def test_random_field_component_std(dist):
    p = PhysicalParams(delta_e0=1e4, field_distribution=dist)
    e = draw_random_fields(p, np.random.default_rng(2), 1_000_000)
    assert np.allclose(e.std(axis=0), 1e4, rtol=0.01)
    assert np.allclose(e.mean(axis=0), 0.0, atol=100)


def test_random_field_reproducible():
    p = PhysicalParams()
    a = draw_random_field(p, np.random.default_rng(9))
    b = draw_random_field(p, np.random.default_rng(9))
    assert np.array_equal(a, b)


def test_minimum_separation_enforced():
    # dense layer forces redraws
    p = PhysicalParams(n_defects=400)
    s = generate_trap(p, 1)
    d = np.linalg.norm(s.positions[:, None] - s.positions[None], axis=-1)
    assert d[np.triu_indices(s.n, 1)].min() >= MIN_SEPARATION


def test_derive_seed_stable_and_distinct():
    assert derive_seed(1, 2) == derive_seed(1, 2)
    seeds = {derive_seed(0, i) for i in range(1000)}
    assert len(seeds) == 1000
    assert 0 <= derive_seed(3, 4) < 2**64


def test_picture_parse():
    assert Picture.parse("shell") is Picture.SPHERICAL_SHELL
    assert Picture.parse("random-dipole") is Picture.RANDOM_DIPOLE
    with pytest.raises(ValueError):
        Picture.parse("lattice")


def test_json_round_trip(tmp_path):
    s = generate(Picture.SPHERICAL_SHELL, PhysicalParams(n_defects=5, delta_e0=3e3), 42)
    path = tmp_path / "s.json"
    s.save(path)
    t = SampleConfig.load(path)
    assert np.allclose(t.positions, s.positions, rtol=1e-15, atol=0)
    assert np.array_equal(t.random_fields, s.random_fields)
    assert np.allclose(t.orientations, s.orientations, rtol=0, atol=1e-15)
    # a second trip through JSON is exact
    t.save(tmp_path / "t.json")
    assert SampleConfig.load(tmp_path / "t.json").to_json() == t.to_json()
    doc = json.loads(path.read_text())
    assert set(doc) == {"seed", "picture", "params", "defects"}
    assert set(doc["defects"][0]) == {"position_nm", "orientation", "random_field_V_per_m"}


def test_sample_invariants():
    s = generate_trap(PhysicalParams(n_defects=2), 0)
    with pytest.raises(ValueError):
        SampleConfig(s.params, s.picture, np.zeros((2, 3)), s.orientations, s.random_fields, 0)
    with pytest.raises(ValueError):
        SampleConfig(s.params, s.picture, s.positions, 2 * s.orientations, s.random_fields, 0)
    with pytest.raises(ValueError):
        SampleConfig(s.params.replace(n_defects=3), s.picture, s.positions, s.orientations,
                     s.random_fields, 0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**64 - 1), picture=st.sampled_from(list(Picture)),
       n=st.integers(1, 40))
def test_generators_deterministic_and_contained(seed, picture, n):
    p = PhysicalParams(n_defects=n)
    a, b = generate(picture, p, seed), generate(picture, p, seed)
    assert a.to_json() == b.to_json()
    assert np.allclose(np.linalg.norm(a.orientations, axis=1), 1.0, atol=1e-12)
    nm = a.positions / NM
    if picture is Picture.SPHERICAL_SHELL:
        r = np.linalg.norm(nm, axis=1)
        assert np.all((r >= 60) & (r <= 80))
    else:
        assert np.all(np.abs(nm[:, :2]) <= 150)
        assert np.all((nm[:, 2] >= 30 - 1e-9) & (nm[:, 2] <= 50 + 1e-9))
