import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import constants

from irgm.geometry import NM, Picture, PhysicalParams, SampleConfig, generate
from irgm.physics import (
    KB, check_spins, dipole_coupling, dipole_field, energy_scales, energy_terms, flip_delta,
    local_field, precompute, qubit_field, total_energy,
)

E_NM = constants.e * 1e-9  # 1 e*nm in C*m
EPS0 = constants.epsilon_0


def _two_site(pos_nm, ori, fields, **kw):
    pos = np.asarray(pos_nm, dtype=float) * NM
    params = PhysicalParams(n_defects=len(pos), **kw)
    return SampleConfig(params, Picture.TRAP, pos, ori, fields, 0)


def brute_force_energy(sample: SampleConfig, spins, lam):
    """Hamiltonian written out term by term with a full j != k double sum."""
    p0 = sample.params.p0
    eps = EPS0 * sample.params.epsilon_r
    h_r = 0.0
    for j in range(sample.n):
        h_r -= p0 * spins[j] * float(np.dot(sample.random_fields[j], sample.orientations[j]))
    h_int = 0.0
    for j in range(sample.n):
        for k in range(sample.n):
            if j == k:
                continue
            d = sample.positions[j] - sample.positions[k]
            r = math.sqrt(float(d @ d))
            pj, pk = sample.orientations[j], sample.orientations[k]
            v = (3 * float(pj @ d) * float(pk @ d) - float(pj @ pk) * r**2) / r**5
            h_int -= lam * p0**2 / (8 * math.pi * eps) * spins[j] * spins[k] * v
    return h_r + h_int


def test_dipole_field_on_axis():
    f = dipole_field([0, 0, E_NM], [0, 0, 50 * NM], 11.0)
    assert f[:2] == pytest.approx([0, 0])
    assert f[2] == pytest.approx(2 * E_NM / (4 * np.pi * EPS0 * 11 * (50 * NM) ** 3), rel=1e-14)
    # scalar arithmetic done by hand
    assert f[2] == pytest.approx(2094.493887771007, rel=1e-9)


def test_dipole_field_equatorial():
    d = 50 * NM
    f = dipole_field([0, 0, E_NM], [d, 0, 0], 11.0)
    assert np.allclose(f, [0, 0, -E_NM / (4 * np.pi * EPS0 * 11 * d**3)], rtol=1e-14, atol=0)


def test_dipole_field_zero_radius():
    with pytest.raises(ValueError):
        dipole_field([0, 0, 1.0], [0, 0, 0], 11.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3),
       st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_dipole_field_inverse_cube(p, r):
    r = np.asarray(r)
    if np.linalg.norm(r) < 1e-3:
        r = r + np.array([0.5, 0.0, 0.0])
    a = dipole_field(p, r * NM, 11.0)
    b = dipole_field(p, 2 * r * NM, 11.0)
    scale = np.abs(a).max() + 1e-300
    assert np.allclose(a, 8 * b, rtol=0, atol=1e-12 * scale)


def test_trap_lateral_pair_is_antiparallel_favoring():
    a = 7.0
    v = dipole_coupling(np.array([[0, 0, 0], [a, 0, 0]], float), np.array([[0, 0, 1], [0, 0, 1]], float))
    assert v[0, 1] == pytest.approx(-1 / a**3)
    assert v[0, 0] == 0.0


def test_coincident_defects_rejected():
    with pytest.raises(ValueError):
        dipole_coupling(np.zeros((2, 3)), np.array([[0, 0, 1], [0, 0, 1]], float))


def test_precompute_lambda_zero():
    s = generate(Picture.SPHERICAL_SHELL, PhysicalParams(n_defects=8), 4)
    pre = precompute(s, 0.0)
    assert not np.any(pre.interaction_matrix)


def test_precompute_invariants_and_kernels():
    s = generate(Picture.RANDOM_DIPOLE, PhysicalParams(n_defects=12), 5)
    pre = precompute(s)
    j = pre.interaction_matrix
    assert np.array_equal(j, j.T)
    assert np.all(np.diag(j) == 0.0)
    for i in range(s.n):
        ref = dipole_field(s.params.p0 * s.orientations[i], -s.positions[i], s.params.epsilon_r)
        assert np.allclose(pre.field_kernels[i], ref, rtol=1e-14, atol=0)
    with pytest.raises(ValueError):
        pre.interaction_matrix[0, 1] = 1.0


@pytest.mark.parametrize("n,seed,lam", [(3, 1, 1.0), (10, 2, 1.0), (10, 3, 4.0)])
def test_total_energy_matches_double_loop(n, seed, lam):
    s = generate(Picture.RANDOM_DIPOLE, PhysicalParams(n_defects=n), seed)
    pre = precompute(s, lam)
    rng = np.random.default_rng(seed)
    for _ in range(5):
        spins = rng.choice([-1, 1], size=n)
        ref = brute_force_energy(s, spins, lam)
        assert total_energy(pre, spins) == pytest.approx(ref, rel=1e-12)


def test_global_flip_symmetry():
    s = generate(Picture.SPHERICAL_SHELL, PhysicalParams(n_defects=9), 8)
    pre = precompute(s)
    spins = np.random.default_rng(0).choice([-1, 1], size=9)
    hr, hi = energy_terms(pre, spins)
    hr2, hi2 = energy_terms(pre, -spins)
    assert hr2 == pytest.approx(-hr)
    assert hi2 == pytest.approx(hi, rel=1e-14)
    s0 = generate(Picture.SPHERICAL_SHELL, PhysicalParams(n_defects=9, delta_e0=0.0), 8)
    pre0 = precompute(s0)
    assert total_energy(pre0, -spins) == pytest.approx(total_energy(pre0, spins), rel=1e-14)


def test_single_spin_energy():
    s = _two_site([[0, 0, 50]], [[0, 0, 1]], [[0, 0, 1e4]])
    pre = precompute(s)
    h1 = pre.local_fields[0]
    assert h1 > 0
    assert total_energy(pre, [1]) == pytest.approx(-h1)
    assert total_energy(pre, [1]) < total_energy(pre, [-1])
    assert flip_delta(pre, [1], 0) == pytest.approx(2 * h1)
    assert flip_delta(pre, [-1], 0) == pytest.approx(-2 * h1)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32), picture=st.sampled_from(list(Picture)),
       n=st.integers(1, 14), lam=st.sampled_from([0.0, 0.3, 1.0, 5.0]),
       spin_seed=st.integers(0, 2**32))
def test_flip_delta_consistency(seed, picture, n, lam, spin_seed):
    s = generate(picture, PhysicalParams(n_defects=n), seed)
    pre = precompute(s, lam)
    spins = np.random.default_rng(spin_seed).choice([-1, 1], size=n)
    e0 = total_energy(pre, spins)
    scale = abs(e0) + np.abs(pre.local_fields).sum() + np.abs(pre.interaction_matrix).sum()
    for j in range(n):
        flipped = spins.copy()
        flipped[j] *= -1
        diff = total_energy(pre, flipped) - e0
        assert flip_delta(pre, spins, j) == pytest.approx(diff, rel=1e-12, abs=1e-12 * scale)
        g = local_field(pre, spins)[j]
        assert flip_delta(pre, spins, j) == pytest.approx(2 * spins[j] * g, rel=1e-12, abs=1e-12 * scale)


def test_flip_delta_aligned_noninteracting():
    s = generate(Picture.TRAP, PhysicalParams(n_defects=6), 2)
    pre = precompute(s, 0.0)
    aligned = np.where(pre.local_fields >= 0, 1, -1)
    for j in range(6):
        assert flip_delta(pre, aligned, j) == pytest.approx(2 * abs(pre.local_fields[j]))


def test_flip_delta_index_error():
    s = generate(Picture.TRAP, PhysicalParams(n_defects=3), 2)
    with pytest.raises(IndexError):
        flip_delta(precompute(s), [1, 1, 1], 3)


def test_spin_validation():
    with pytest.raises(ValueError):
        check_spins([1, 0, -1])
    with pytest.raises(ValueError):
        check_spins([0.5, 1])


def test_qubit_field_basics():
    s = generate(Picture.TRAP, PhysicalParams(), 7)
    pre = precompute(s)
    assert np.all(qubit_field(pre, np.zeros(30)) == 0.0)
    one = _two_site([[10, -20, 50]], [[0, 0, 1]], [[0, 0, 1e4]])
    pre1 = precompute(one)
    ref = dipole_field(one.params.p0 * one.orientations[0], -one.positions[0], 11.0)
    assert np.allclose(qubit_field(pre1, [1.0]), ref)
    with pytest.raises(ValueError):
        qubit_field(pre1, [1.1])


def test_qubit_field_order_of_magnitude():
    s = generate(Picture.TRAP, PhysicalParams(), 7)
    f = np.linalg.norm(qubit_field(precompute(s), np.ones(30)))
    assert 4.5e3 / 3 < f < 4.5e3 * 3


def test_energy_scales_noninteracting():
    s = generate(Picture.TRAP, PhysicalParams(), 7)
    pre = precompute(s, 0.0)
    ground = np.where(pre.local_fields >= 0, 1, -1)
    sc = energy_scales(pre, ground)
    assert sc.t_int == 0.0
    assert sc.t_r == pytest.approx(np.abs(pre.local_fields).sum() / (30 * KB))


def test_energy_scales_typical_tr():
    # random-field scale of order 0.1 K for the default field strength
    trs = []
    for seed in range(20):
        pre = precompute(generate(Picture.RANDOM_DIPOLE, PhysicalParams(), seed), 0.0)
        trs.append(energy_scales(pre, np.where(pre.local_fields >= 0, 1, -1)).t_r)
    assert 0.02 < np.median(trs) < 0.3


def test_energy_scales_thermal_enumeration():
    s = generate(Picture.SPHERICAL_SHELL, PhysicalParams(n_defects=8), 3)
    pre = precompute(s)
    hot = energy_scales(pre, temperature=1e6)
    assert hot.t_r < 1e-3 and hot.t_int < 1e-2
    with pytest.raises(ValueError):
        energy_scales(pre)
