"""Compiled inner loops for Metropolis sampling and exhaustive enumeration.

All kernels work on the local field ``g_j = h_j + 2 sum_k J_jk s_k`` and keep
it current after every accepted flip, so a proposal costs O(1) and a flip O(N).
Random numbers are drawn by the caller (numpy ``Generator``) and passed in.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def fresh_local(h, jmat, spins):
    n = spins.shape[0]
    g = h.copy()
    for j in range(n):
        acc = 0.0
        for k in range(n):
            acc += jmat[j, k] * spins[k]
        g[j] += 2.0 * acc
    return g


@njit(cache=True)
def _flip(jmat, spins, local, j):
    old = spins[j]
    spins[j] = -old
    n = spins.shape[0]
    # jmat is symmetric; the row is contiguous
    for k in range(n):
        local[k] -= 4.0 * jmat[j, k] * old


@njit(cache=True)
def _site(u, n):
    """Split one uniform into a site index and an independent uniform."""
    x = u * n
    j = min(int(x), n - 1)
    return j, x - j


@njit(cache=True)
def replica_sweep(jmat, h, partner, spins, local, beta, uniforms, u_global):
    """One sweep on a single replica; returns ``(accepted, proposed, energy_change)``.

    N single-flip proposals, then (when ``partner`` is non-empty) N joint
    flips of ``(j, partner[j])``, N joint flips of the chain
    ``(j, partner[j], partner[partner[j]])`` when it has three distinct spins,
    and one global flip. Every proposal is independent of the state, hence
    symmetric, and is accepted with the Metropolis rule. ``uniforms``
    holds 3N draws; each picks a site and decides acceptance.
    """
    n = spins.shape[0]
    accepted = 0
    proposed = n
    de_total = 0.0
    for t in range(n):
        j, v = _site(uniforms[t], n)
        delta = 2.0 * spins[j] * local[j]
        if delta <= 0.0 or v < math.exp(-beta * delta):
            _flip(jmat, spins, local, j)
            accepted += 1
            de_total += delta
    if partner.shape[0] == 0:
        return accepted, proposed, de_total
    for t in range(n, 2 * n):
        j, v = _site(uniforms[t], n)
        k = partner[j]
        if k < 0:
            continue
        proposed += 1
        delta = (2.0 * spins[j] * local[j] + 2.0 * spins[k] * local[k]
                 - 8.0 * jmat[j, k] * spins[j] * spins[k])
        if delta <= 0.0 or v < math.exp(-beta * delta):
            _flip(jmat, spins, local, j)
            _flip(jmat, spins, local, k)
            accepted += 1
            de_total += delta
    for t in range(2 * n, 3 * n):
        j, v = _site(uniforms[t], n)
        k = partner[j]
        if k < 0:
            continue
        m = partner[k]
        if m < 0 or m == j:
            continue
        proposed += 1
        delta = (2.0 * spins[j] * local[j] + 2.0 * spins[k] * local[k]
                 + 2.0 * spins[m] * local[m]
                 - 8.0 * (jmat[j, k] * spins[j] * spins[k] + jmat[j, m] * spins[j] * spins[m]
                          + jmat[k, m] * spins[k] * spins[m]))
        if delta <= 0.0 or v < math.exp(-beta * delta):
            _flip(jmat, spins, local, j)
            _flip(jmat, spins, local, k)
            _flip(jmat, spins, local, m)
            accepted += 1
            de_total += delta
    # the pair term is invariant under s -> -s, so only the random-field part moves
    proposed += 1
    delta = 0.0
    for j in range(n):
        delta += 2.0 * spins[j] * h[j]
    if delta <= 0.0 or u_global < math.exp(-beta * delta):
        for j in range(n):
            spins[j] = -spins[j]
            local[j] = 2.0 * h[j] - local[j]
        accepted += 1
        de_total += delta
    return accepted, proposed, de_total


@njit(cache=True)
def conditional_means(jmat, partner, spins, local, beta, out):
    """Exact mean of each ``s_j`` given every spin outside ``{j, partner[j]}``.

    Without partners this is ``tanh(beta g_j)``. With a partner ``k`` the four
    joint states of ``(s_j, s_k)`` are summed, so low-lying pair excitations
    are averaged analytically instead of waiting for the chain to visit them.
    """
    n = spins.shape[0]
    if partner.shape[0] == 0:
        for j in range(n):
            out[j] = math.tanh(beta * local[j])
        return
    for j in range(n):
        k = partner[j]
        if k < 0:
            out[j] = math.tanh(beta * local[j])
            continue
        mutual = partner[k] == j
        if mutual and k < j:
            continue  # filled in with its partner
        c = jmat[j, k]
        a_j = local[j] - 2.0 * c * spins[k]
        a_k = local[k] - 2.0 * c * spins[j]
        # exponents of the Boltzmann weights for (s_j, s_k) = ++, +-, -+, --
        x0 = beta * (a_j + a_k + 2.0 * c)
        x1 = beta * (a_j - a_k - 2.0 * c)
        x2 = beta * (-a_j + a_k - 2.0 * c)
        x3 = beta * (-a_j - a_k + 2.0 * c)
        top = max(max(x0, x1), max(x2, x3))
        w0 = math.exp(x0 - top)
        w1 = math.exp(x1 - top)
        w2 = math.exp(x2 - top)
        w3 = math.exp(x3 - top)
        z = w0 + w1 + w2 + w3
        out[j] = (w0 + w1 - w2 - w3) / z
        if mutual:
            out[k] = (w0 - w1 + w2 - w3) / z


@njit(cache=True)
def tempering(jmat, h, partner, spins, local, energy, betas, uniforms, u_global, u_swap,
              sweep0, total_sweeps, n_measured, improved, out, out_e, counts, cond, dirty, stats):
    """Advance all replicas by ``uniforms.shape[0]`` sweeps with neighbour swaps.

    Row ``i`` of ``spins``/``local``/``energy`` is the configuration currently
    held at inverse temperature ``betas[i]``. After each sweep ``u_swap.shape[1]``
    passes let adjacent slots (even or odd pairs, alternating) attempt an exchange. When ``out`` has
    batches, the first ``n_measured`` slots are accumulated into
    ``out[slot, batch]`` (spins) and ``out_e[slot, batch]`` (energy);
    ``sweep0``/``total_sweeps`` place this chunk within
    the measurement run. ``stats`` collects (flips, swap attempts, swaps, flip proposals).
    """
    n_chunk = uniforms.shape[0]
    n_rep = spins.shape[0]
    n = spins.shape[1]
    n_batches = out.shape[1]
    measuring = n_batches > 0
    tmp = np.empty(n)
    for c in range(n_chunk):
        for r in range(n_rep):
            acc, prop, de = replica_sweep(jmat, h, partner, spins[r], local[r], betas[r],
                                    uniforms[c, r], u_global[c, r])
            energy[r] += de
            stats[0] += acc
            stats[3] += prop
            if acc > 0:
                dirty[r] = True
        g = sweep0 + c
        n_pass = u_swap.shape[1]
        for p in range(n_pass):
            for i in range((g * n_pass + p) % 2, n_rep - 1, 2):
                stats[1] += 1
                d = (betas[i] - betas[i + 1]) * (energy[i] - energy[i + 1])
                if d >= 0.0 or u_swap[c, p, i] < math.exp(d):
                    stats[2] += 1
                    for j in range(n):
                        tmp[j] = spins[i, j]
                        spins[i, j] = spins[i + 1, j]
                        spins[i + 1, j] = tmp[j]
                        tmp[j] = local[i, j]
                        local[i, j] = local[i + 1, j]
                        local[i + 1, j] = tmp[j]
                    e = energy[i]
                    energy[i] = energy[i + 1]
                    energy[i + 1] = e
                    dirty[i] = True
                    dirty[i + 1] = True
        if measuring:
            b = g * n_batches // total_sweeps
            counts[b] += 1.0
            for i in range(n_measured):
                out_e[i, b] += energy[i]
                if improved:
                    if dirty[i]:
                        conditional_means(jmat, partner, spins[i], local[i], betas[i], cond[i])
                        dirty[i] = False
                    for j in range(n):
                        out[i, b, j] += cond[i, j]
                else:
                    for j in range(n):
                        out[i, b, j] += spins[i, j]


@njit(cache=True)
def greedy_descent(jmat, spins, local):
    """Flip any spin that lowers the energy until the state is 1-flip stable."""
    n = spins.shape[0]
    changed = True
    while changed:
        changed = False
        for j in range(n):
            if 2.0 * spins[j] * local[j] < 0.0:
                _flip(jmat, spins, local, j)
                changed = True


@njit(cache=True)
def _energy(h, jmat, spins):
    n = spins.shape[0]
    e = 0.0
    for j in range(n):
        e -= h[j] * spins[j]
        acc = 0.0
        for k in range(n):
            acc += jmat[j, k] * spins[k]
        e -= spins[j] * acc
    return e


@njit(cache=True)
def _trailing_zeros(i):
    b = 0
    while (i & 1) == 0:
        i >>= 1
        b += 1
    return b


@njit(cache=True)
def gray_energies(h, jmat):
    """Energies of all 2^N states in Gray-code order, starting from all -1.

    Returns ``(energies, flipped_bit)`` where step ``i > 0`` flips bit
    ``flipped_bit[i]``. The local fields are rebuilt from scratch every 4096
    steps to bound round-off drift.
    """
    n = h.shape[0]
    total = 1 << n
    spins = -np.ones(n)
    local = fresh_local(h, jmat, spins)
    energies = np.empty(total)
    bits = np.zeros(total, dtype=np.int64)
    e = _energy(h, jmat, spins)
    energies[0] = e
    for i in range(1, total):
        b = _trailing_zeros(i)
        bits[i] = b
        e += 2.0 * spins[b] * local[b]
        _flip(jmat, spins, local, b)
        if (i & 4095) == 0:
            local = fresh_local(h, jmat, spins)
            e = _energy(h, jmat, spins)
        energies[i] = e
    return energies, bits


@njit(cache=True)
def gray_averages(energies, bits, n, betas, e_ref):
    """Boltzmann averages of every spin at every inverse temperature.

    Returns ``(spin_avg (M, N), z (M,), energy_avg (M,))`` with weights
    ``exp(-beta (E - e_ref))``.
    """
    m = betas.shape[0]
    spins = -np.ones(n)
    num = np.zeros((m, n))
    z = np.zeros(m)
    ebar = np.zeros(m)
    w = np.empty(m)
    for i in range(energies.shape[0]):
        if i > 0:
            b = bits[i]
            spins[b] = -spins[b]
        de = energies[i] - e_ref
        for t in range(m):
            w[t] = math.exp(-betas[t] * de)
            z[t] += w[t]
            ebar[t] += w[t] * de
        for t in range(m):
            wt = w[t]
            if wt == 0.0:
                continue
            for j in range(n):
                num[t, j] += wt * spins[j]
    for t in range(m):
        for j in range(n):
            num[t, j] /= z[t]
        ebar[t] = ebar[t] / z[t] + e_ref
    return num, z, ebar


@njit(cache=True)
def gray_state(index, n):
    """Spin vector (+-1) of the Gray-code state reached at step ``index``."""
    g = index ^ (index >> 1)
    s = np.empty(n, dtype=np.int8)
    for j in range(n):
        s[j] = 1 if (g >> j) & 1 else -1
    return s
