"""Electrostatic kernels and the interacting random-field Hamiltonian.

Energy convention, with ``h_j = p0 (p_j . E_j)`` and
``J_jk = lam * p0**2 * V_jk / (8 pi eps0 eps_r)``::

    H = -sum_j s_j h_j - sum_{j != k} J_jk s_j s_k
      = -sum_j s_j h_j - 2 sum_{j < k} J_jk s_j s_k

The local field ``g_j = h_j + 2 sum_k J_jk s_k`` gives the single-flip cost
``dE_j = 2 s_j g_j`` and the conditional mean ``<s_j | rest> = tanh(g_j / kT)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import constants

from .geometry import SampleConfig

KB = constants.k
EPS0 = constants.epsilon_0


def coulomb_factor(epsilon_r: float) -> float:
    return 1.0 / (4.0 * np.pi * EPS0 * epsilon_r)


def dipole_field(p, r, epsilon_r: float) -> np.ndarray:
    """Field (V/m) of point dipole ``p`` (C*m) at displacement ``r`` (m) from it.

    Works row-wise on ``(..., 3)`` arrays.
    """
    p = np.asarray(p, dtype=float)
    r = np.asarray(r, dtype=float)
    r2 = np.sum(r * r, axis=-1, keepdims=True)
    if np.any(r2 == 0.0):
        raise ValueError("dipole field is undefined at zero separation")
    pr = np.sum(p * r, axis=-1, keepdims=True)
    return coulomb_factor(epsilon_r) * (3.0 * pr * r - p * r2) / r2**2.5


def dipole_coupling(pos: np.ndarray, ori: np.ndarray) -> np.ndarray:
    """Geometric coupling ``V_jk`` (m^-3) for unit dipoles; zero diagonal."""
    d = pos[:, None, :] - pos[None, :, :]
    r2 = np.einsum("jki,jki->jk", d, d)
    n = len(pos)
    off = ~np.eye(n, dtype=bool)
    if np.any(r2[off] == 0.0):
        raise ValueError("coincident defects")
    pj_d = np.einsum("ji,jki->jk", ori, d)
    pk_d = np.einsum("ki,jki->jk", ori, d)
    pjpk = ori @ ori.T
    v = np.zeros((n, n))
    v[off] = (3.0 * pj_d[off] * pk_d[off] - pjpk[off] * r2[off]) / r2[off] ** 2.5
    return v


@dataclass(frozen=True)
class PrecomputedSample:
    field_kernels: np.ndarray  # (N, 3) V/m, field at the qubit per unit s_j
    local_fields: np.ndarray  # (N,) J
    interaction_matrix: np.ndarray  # (N, N) J
    interaction_scale: float
    sample: SampleConfig

    @property
    def n(self) -> int:
        return len(self.local_fields)

    @property
    def turn_off_temperatures(self) -> np.ndarray:
        return np.abs(self.local_fields) / KB


def precompute(sample: SampleConfig, interaction_scale: float | None = None) -> PrecomputedSample:
    """Field kernels, random-field energies and couplings for ``sample``.

    ``interaction_scale`` overrides ``sample.params.interaction_scale``.
    """
    prm = sample.params
    lam = prm.interaction_scale if interaction_scale is None else float(interaction_scale)
    if lam < 0:
        raise ValueError("interaction_scale must be >= 0")
    dipoles = prm.p0 * sample.orientations
    # qubit sits at the origin, so the displacement from defect j to it is -r_j
    kernels = dipole_field(dipoles, -sample.positions, prm.epsilon_r)
    h = prm.p0 * np.einsum("ji,ji->j", sample.orientations, sample.random_fields)
    if lam == 0.0:
        jmat = np.zeros((sample.n, sample.n))
    else:
        v = dipole_coupling(sample.positions, sample.orientations)
        jmat = lam * prm.p0**2 * v / (8.0 * np.pi * EPS0 * prm.epsilon_r)
        jmat = 0.5 * (jmat + jmat.T)
        np.fill_diagonal(jmat, 0.0)
    for a in (kernels, h, jmat):
        a.setflags(write=False)
    return PrecomputedSample(kernels, h, jmat, lam, sample)


def check_spins(state) -> np.ndarray:
    s = np.asarray(state)
    if s.ndim != 1 or not np.all((s == 1) | (s == -1)):
        raise ValueError("spin state entries must be exactly +1 or -1")
    return s.astype(np.int8)


def energy_terms(pre: PrecomputedSample, state) -> tuple[float, float]:
    """``(H_r, H_int)`` in joules."""
    s = check_spins(state).astype(float)
    if len(s) != pre.n:
        raise ValueError("state length does not match sample")
    h_r = -float(s @ pre.local_fields)
    h_int = -float(s @ pre.interaction_matrix @ s)
    return h_r, h_int


def total_energy(pre: PrecomputedSample, state) -> float:
    h_r, h_int = energy_terms(pre, state)
    return h_r + h_int


def local_field(pre: PrecomputedSample, state) -> np.ndarray:
    s = check_spins(state).astype(float)
    return pre.local_fields + 2.0 * pre.interaction_matrix @ s


def flip_delta(pre: PrecomputedSample, state, j: int) -> float:
    """Energy change from flipping spin ``j``, O(N)."""
    s = check_spins(state)
    if not 0 <= j < len(s):
        raise IndexError(f"spin index {j} out of range for N={len(s)}")
    g = pre.local_fields[j] + 2.0 * float(pre.interaction_matrix[j] @ s)
    return 2.0 * float(s[j]) * g


def qubit_field(pre: PrecomputedSample, s_avg) -> np.ndarray:
    """Field at the qubit for mean spins ``s_avg``; accepts ``(N,)`` or ``(M, N)``."""
    s = np.asarray(s_avg, dtype=float)
    if np.any(np.abs(s) > 1 + 1e-9):
        raise ValueError("mean spins must lie in [-1, 1]")
    return s @ pre.field_kernels


@dataclass(frozen=True)
class EnergyScales:
    t_r: float  # K
    t_int: float  # K


def energy_scales(pre: PrecomputedSample, ground=None, temperature: float | None = None,
                  rng=None) -> EnergyScales:
    """Per-defect random-field and interaction scales in kelvin.

    By default both terms are evaluated at ``ground``. Passing ``temperature``
    instead returns thermal averages of the two terms (exact enumeration for
    N <= 20, Metropolis otherwise).
    """
    if temperature is None:
        if ground is None:
            raise ValueError("need a ground state or a temperature")
        h_r, h_int = energy_terms(pre, ground)
    else:
        from .exact import ENUMERATION_LIMIT, thermal_energy_terms
        if pre.n <= ENUMERATION_LIMIT:
            h_r, h_int = thermal_energy_terms(pre, temperature)
        else:
            from .mc import mc_energy_terms
            h_r, h_int = mc_energy_terms(pre, temperature, rng)
    return EnergyScales(abs(h_r) / (pre.n * KB), abs(h_int) / (pre.n * KB))
