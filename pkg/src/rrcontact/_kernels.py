"""Compiled event loops for the contact process.

Active-clock state keeps two swap-remove index sets: the infected vertices
and the directed infected->healthy edges. Total rate is then
``|I| + lam * |SI|`` and both kinds of event are picked uniformly, so every
step is exact with O(max degree) bookkeeping.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _add(lst, pos, size, x):
    lst[size] = x
    pos[x] = size
    return size + 1


@njit(cache=True)
def _remove(lst, pos, size, x):
    i = pos[x]
    last = lst[size - 1]
    lst[i] = last
    pos[last] = i
    pos[x] = -1
    return size - 1


@njit(cache=True)
def _infect(v, infected, indptr, indices, rev, inf_list, inf_pos, n_inf, si_list, si_pos, n_si):
    infected[v] = True
    n_inf = _add(inf_list, inf_pos, n_inf, v)
    for e in range(indptr[v], indptr[v + 1]):
        w = indices[e]
        if infected[w]:
            n_si = _remove(si_list, si_pos, n_si, rev[e])
        else:
            n_si = _add(si_list, si_pos, n_si, e)
    return n_inf, n_si


@njit(cache=True)
def _recover(v, infected, indptr, indices, rev, inf_list, inf_pos, n_inf, si_list, si_pos, n_si):
    infected[v] = False
    n_inf = _remove(inf_list, inf_pos, n_inf, v)
    for e in range(indptr[v], indptr[v + 1]):
        w = indices[e]
        if infected[w]:
            n_si = _add(si_list, si_pos, n_si, rev[e])
        else:
            n_si = _remove(si_list, si_pos, n_si, e)
    return n_inf, n_si


@njit(cache=True)
def count_si_edges(indptr, indices, infected):
    c = 0
    for v in range(len(indptr) - 1):
        if infected[v]:
            for e in range(indptr[v], indptr[v + 1]):
                if not infected[indices[e]]:
                    c += 1
    return c


@njit(cache=True)
def active_run(indptr, indices, rev, lam, init, t_max, checkpoints, watch, rng):
    """Run from ``init`` until extinction or ``t_max``.

    Returns (final infected mask, extinction time or -1, event count,
    infected counts at ``checkpoints``, whether any ``watch`` vertex was
    ever infected).
    """
    n = len(indptr) - 1
    ne = len(indices)
    infected = np.zeros(n, dtype=np.bool_)
    inf_list = np.empty(n, dtype=np.int64)
    inf_pos = np.full(n, -1, dtype=np.int64)
    si_list = np.empty(ne, dtype=np.int64)
    si_pos = np.full(ne, -1, dtype=np.int64)
    n_inf = 0
    n_si = 0
    hit = False
    for v in range(n):
        if init[v]:
            n_inf, n_si = _infect(v, infected, indptr, indices, rev, inf_list, inf_pos, n_inf,
                                  si_list, si_pos, n_si)
            if watch[v]:
                hit = True
    counts = np.zeros(len(checkpoints), dtype=np.int64)
    ci = 0
    t = 0.0
    events = 0
    tau = -1.0
    if n_inf == 0:
        tau = 0.0
    while n_inf > 0:
        total = n_inf + lam * n_si
        dt = rng.standard_exponential() / total
        t_next = t + dt
        while ci < len(checkpoints) and checkpoints[ci] < t_next:
            counts[ci] = n_inf
            ci += 1
        if t_next >= t_max:
            t = t_max
            break
        t = t_next
        events += 1
        u = rng.random() * total
        if u < n_inf:
            k = int(u)
            if k >= n_inf:
                k = n_inf - 1
            v = inf_list[k]
            n_inf, n_si = _recover(v, infected, indptr, indices, rev, inf_list, inf_pos, n_inf,
                                   si_list, si_pos, n_si)
            if n_inf == 0:
                tau = t
        else:
            k = int((u - n_inf) / lam)
            if k >= n_si:
                k = n_si - 1
            v = indices[si_list[k]]
            n_inf, n_si = _infect(v, infected, indptr, indices, rev, inf_list, inf_pos, n_inf,
                                  si_list, si_pos, n_si)
            if watch[v]:
                hit = True
    # checkpoints after extinction or past the cap see the final state
    while ci < len(checkpoints):
        counts[ci] = n_inf
        ci += 1
    return infected, tau, events, counts, hit


@njit(cache=True)
def extinction_run(indptr, indices, rev, lam, init, t_cap, rng):
    """One run from ``init``; returns (extinction time or -1 if past ``t_cap``, events)."""
    n = len(indptr) - 1
    ne = len(indices)
    infected = np.zeros(n, dtype=np.bool_)
    inf_list = np.empty(n, dtype=np.int64)
    inf_pos = np.full(n, -1, dtype=np.int64)
    si_list = np.empty(ne, dtype=np.int64)
    si_pos = np.full(ne, -1, dtype=np.int64)
    n_inf = 0
    n_si = 0
    for v in range(n):
        if init[v]:
            n_inf, n_si = _infect(v, infected, indptr, indices, rev, inf_list, inf_pos, n_inf,
                                  si_list, si_pos, n_si)
    if n_inf == 0:
        return 0.0, 0
    t = 0.0
    events = 0
    while True:
        total = n_inf + lam * n_si
        t += rng.standard_exponential() / total
        if t >= t_cap:
            return -1.0, events
        events += 1
        u = rng.random() * total
        if u < n_inf:
            k = int(u)
            if k >= n_inf:
                k = n_inf - 1
            n_inf, n_si = _recover(inf_list[k], infected, indptr, indices, rev, inf_list,
                                   inf_pos, n_inf, si_list, si_pos, n_si)
            if n_inf == 0:
                return t, events
        else:
            k = int((u - n_inf) / lam)
            if k >= n_si:
                k = n_si - 1
            n_inf, n_si = _infect(indices[si_list[k]], infected, indptr, indices, rev, inf_list,
                                  inf_pos, n_inf, si_list, si_pos, n_si)


# -- graphical representation ------------------------------------------------------

@njit(cache=True)
def apply_field_checked(kind, a, b, times, states, sub, add):
    """Apply a time-sorted event stream to every row of ``states`` in place.

    ``kind`` 0 = recovery mark at ``a``; 1 = arrow ``a -> b``. Returns
    per-copy extinction times (-1 if still alive) and a violation count.
    After each event only the touched vertex can change, so checking it
    alone is a complete pathwise test of: row i subset of row j for each
    pair in ``sub``, and row l == row i | row j for each triple in ``add``.
    """
    k, n = states.shape
    counts = np.zeros(k, dtype=np.int64)
    for c in range(k):
        for v in range(n):
            if states[c, v]:
                counts[c] += 1
    ext = np.full(k, -1.0)
    violations = 0
    for i in range(len(times)):
        t = times[i]
        if kind[i] == 0:
            v = a[i]
            for c in range(k):
                if states[c, v]:
                    states[c, v] = False
                    counts[c] -= 1
                    if counts[c] == 0:
                        ext[c] = t
        else:
            v = b[i]
            u = a[i]
            for c in range(k):
                if states[c, u] and not states[c, v]:
                    states[c, v] = True
                    counts[c] += 1
        for p in range(sub.shape[0]):
            if states[sub[p, 0], v] and not states[sub[p, 1], v]:
                violations += 1
        for p in range(add.shape[0]):
            if states[add[p, 2], v] != (states[add[p, 0], v] or states[add[p, 1], v]):
                violations += 1
    return ext, violations


@njit(cache=True)
def dual_apply(kind, a, b, times, dual, t_lo):
    """Run the dual backward over events with time >= ``t_lo``, newest first."""
    for i in range(len(times) - 1, -1, -1):
        if times[i] < t_lo:
            break
        if kind[i] == 0:
            dual[a[i]] = False
        elif dual[b[i]]:
            dual[a[i]] = True
    return dual


@njit(cache=True)
def field_extinction(kind, a, b, times, state, count, t_offset):
    """Apply one chunk of a field to ``state``; return (extinction time or -1, count)."""
    for i in range(len(times)):
        if kind[i] == 0:
            v = a[i]
            if state[v]:
                state[v] = False
                count -= 1
                if count == 0:
                    return t_offset + times[i], 0
        else:
            if state[a[i]] and not state[b[i]]:
                state[b[i]] = True
                count += 1
    return -1.0, count
