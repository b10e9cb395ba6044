"""numba hot path of the particle engine.

The kernels mirror, draw for draw, the pure-python cell operations in
swarm.py (balance_cell / kick_cell); the test suite checks bit-identity
between the two.  All randomness is a splitmix64 chain seeded per
(seed, step, phase, cell) with the same constants as rng.py, so the
outcome is independent of the order cells are visited in.
"""

from __future__ import annotations

import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)
INV53 = 2.0**-53


@njit(inline="always")
def _mix64(z):
    z = z + GOLDEN
    z = (z ^ (z >> np.uint64(30))) * MIX1
    z = (z ^ (z >> np.uint64(27))) * MIX2
    return z ^ (z >> np.uint64(31))


@njit(inline="always")
def _key4(a, b, c, d):
    h = np.uint64(0)
    h = _mix64(h ^ (np.uint64(a) + GOLDEN))
    h = _mix64(h ^ (np.uint64(b) + GOLDEN))
    h = _mix64(h ^ (np.uint64(c) + GOLDEN))
    h = _mix64(h ^ (np.uint64(d) + GOLDEN))
    return h


PHASE_BALANCE = 0x1D1  # keep in sync with rng.PHASE_BALANCE


@njit(cache=True)
def bin_and_count(pos, inv_dx, extent, n_states, tag, cell_out, counts_out):
    """Flat C-order cell index per sample plus per-(cell,state) counts.

    Returns 0, or 1 when a sample sits outside the domain (internal error;
    the caller raises).
    """
    n, dims = pos.shape
    counts_out[:] = 0
    bad = 0
    for i in range(n):
        acc = 0
        for u in range(dims):
            if pos[i, u] < 0.0:
                bad = 1
            k = int(pos[i, u] * inv_dx)
            if k == extent[u] and pos[i, u] * inv_dx - extent[u] < 1e-9:
                k = extent[u] - 1  # float round-off exactly on the seam
            if k < 0 or k >= extent[u]:
                bad = 1
                k = 0
            acc = acc * extent[u] + k
        cell_out[i] = acc
        counts_out[acc * n_states + tag[i]] += 1
    return bad


@njit(cache=True)
def group_by_cell(cell, n_cells, order_out, starts_out):
    """Counting sort: order_out lists sample ids grouped by cell, ascending."""
    n = cell.size
    for c in range(n_cells + 1):
        starts_out[c] = 0
    for i in range(n):
        starts_out[cell[i] + 1] += 1
    for c in range(n_cells):
        starts_out[c + 1] += starts_out[c]
    fill = starts_out.copy()
    for i in range(n):
        c = cell[i]
        order_out[fill[c]] = i
        fill[c] += 1


@njit(inline="always")
def _pick_balance_delta(n0, s, d):
    """Integer pair surplus k bringing (s+2k)/(n0-2k) closest to d."""
    k_lo = -(s // 2)
    k_hi = n0 // 2
    k_star = (d * n0 - s) / (2.0 * (1.0 + d))
    kf = int(np.floor(k_star))
    kc = kf + 1
    if kf < k_lo:
        kf = k_lo
    if kf > k_hi:
        kf = k_hi
    if kc < k_lo:
        kc = k_lo
    if kc > k_hi:
        kc = k_hi
    best_k = kf
    best_err = np.inf
    for k in (kf, kc):
        rest = n0 - 2 * k
        if rest > 0:
            err = abs((s + 2.0 * k) / rest - d)
        elif s + 2 * k == 0:
            err = d
        else:
            err = np.inf
        if err < best_err - 1e-15 or (abs(err - best_err) <= 1e-15 and k < best_k):
            best_err = err
            best_k = k
    return best_k


@njit(cache=True)
def balance_and_kick(tag, order, starts, counts, grad_vpot, d, kick_factor,
                     dims, has_kick, seed, step, schedule,
                     rest_buf, dir_buf, dir_len, diag):
    """Speed rebalancing and potential kicks for every cell in schedule.

    diag accumulates [pairs_created, pairs_annihilated, kicked, shortfall].
    """
    n_states = 2 * dims + 1
    for sc in range(schedule.size):
        c = schedule[sc]
        lo = starts[c]
        hi = starts[c + 1]
        n_cell = hi - lo
        if n_cell == 0:
            continue
        state = _key4(seed, step, PHASE_BALANCE, c)

        n0 = counts[c * n_states + 0]
        s = 0
        for u in range(dims):
            npu = counts[c * n_states + 1 + 2 * u]
            nmu = counts[c * n_states + 2 + 2 * u]
            s += 2 * min(npu, nmu)

        if n_cell >= 2:
            k = _pick_balance_delta(n0, s, d)
            if k > 0:
                # choose 2k resting samples, pair them on random axes
                nr = 0
                for j in range(lo, hi):
                    gi = order[j]
                    if tag[gi] == 0:
                        rest_buf[nr] = gi
                        nr += 1
                for i in range(2 * k):
                    state = _mix64(state)
                    j = i + int(state % np.uint64(nr - i))
                    tmp = rest_buf[i]
                    rest_buf[i] = rest_buf[j]
                    rest_buf[j] = tmp
                for pair in range(k):
                    state = _mix64(state)
                    axis = int(state % np.uint64(dims))
                    tag[rest_buf[2 * pair]] = 1 + 2 * axis
                    tag[rest_buf[2 * pair + 1]] = 2 + 2 * axis
                diag[0] += k
            elif k < 0:
                # collect movers per direction, annihilate -k opposite pairs
                for t in range(2 * dims):
                    dir_len[t] = 0
                for j in range(lo, hi):
                    gi = order[j]
                    t = tag[gi]
                    if t > 0:
                        dir_buf[t - 1, dir_len[t - 1]] = gi
                        dir_len[t - 1] += 1
                for _ in range(-k):
                    total = 0
                    for u in range(dims):
                        total += min(dir_len[2 * u], dir_len[2 * u + 1])
                    state = _mix64(state)
                    pick = int(state % np.uint64(total))
                    axis = 0
                    acc = 0
                    for u in range(dims):
                        acc += min(dir_len[2 * u], dir_len[2 * u + 1])
                        if pick < acc:
                            axis = u
                            break
                    for side in range(2):
                        t = 2 * axis + side
                        state = _mix64(state)
                        i = int(state % np.uint64(dir_len[t]))
                        victim = dir_buf[t, i]
                        dir_buf[t, i] = dir_buf[t, dir_len[t] - 1]
                        dir_len[t] -= 1
                        tag[victim] = 0
                    diag[1] += 1

        if has_kick:
            nr = 0
            for j in range(lo, hi):
                gi = order[j]
                if tag[gi] == 0:
                    rest_buf[nr] = gi
                    nr += 1
            sel = 0  # rest_buf[:sel] already granted a speed
            for u in range(dims):
                g = grad_vpot[c, u]
                if g == 0.0:
                    continue
                target = n_cell * abs(g) * kick_factor
                k_u = int(np.floor(target))
                frac = target - k_u
                state = _mix64(state)
                if (state >> np.uint64(11)) * INV53 < frac:
                    k_u += 1
                if k_u == 0:
                    continue
                avail = nr - sel
                if k_u > avail:
                    diag[3] += k_u - avail
                    k_u = avail
                new_tag = (2 + 2 * u) if g > 0.0 else (1 + 2 * u)
                for i in range(k_u):
                    state = _mix64(state)
                    j = sel + int(state % np.uint64(nr - sel))
                    tmp = rest_buf[sel]
                    rest_buf[sel] = rest_buf[j]
                    rest_buf[j] = tmp
                    tag[rest_buf[sel]] = new_tag
                    sel += 1
                diag[2] += k_u


@njit(cache=True)
def advect(pos, tag, vel, dt, lengths, reflecting):
    """Galilean shift by one step; wraps or reflects (with speed flip)."""
    n, dims = pos.shape
    for i in range(n):
        t = tag[i]
        if t == 0:
            continue
        u = (t - 1) >> 1
        x = pos[i, u] + vel[t, u] * dt
        L = lengths[u]
        if reflecting:
            if x < 0.0:
                x = -x
                tag[i] = t + 1 if (t & 1) == 1 else t - 1
            elif x >= L:
                x = 2.0 * L - x
                tag[i] = t + 1 if (t & 1) == 1 else t - 1
                if x >= L:  # landed exactly on the wall
                    x = np.nextafter(L, 0.0)
        else:
            if x < 0.0:
                x += L
            elif x >= L:
                x -= L
        pos[i, u] = x
