"""Compiled event loops for the exclusion process.

Sites are indexed 0..S-1 inside the window and bond b joins sites b and b+1.
Random numbers come in as pre-drawn buffers so that streams stay owned by
numpy Generators; every kernel reports how much of its buffers it consumed.
"""
import numpy as np
from numba import njit

_MASK32 = np.uint64(0xFFFFFFFF)


@njit(cache=True, nogil=True)
def rebuild_active(eta, act, pos):
    """Fill act/pos with the bonds whose end occupancies differ; return their count."""
    na = 0
    for b in range(eta.size - 1):
        if eta[b] != eta[b + 1]:
            act[na] = b
            pos[b] = na
            na += 1
        else:
            pos[b] = -1
    return na


@njit(cache=True, nogil=True)
def _toggle(c, t, act, pos, na, bact, blast):
    p = pos[c]
    if p < 0:
        act[na] = c
        pos[c] = na
        blast[c] = t
        return na + 1
    na -= 1
    m = act[na]
    act[p] = m
    pos[m] = p
    pos[c] = -1
    bact[c] += t - blast[c]
    return na


@njit(cache=True, nogil=True)
def rf_run(eta, act, pos, na, t, target, rate, ex, un, i0, cur, occ, last, bact, blast, tag):
    """Rejection-free events until ``target`` or until the buffers run out.

    Holding times are Exponential(rate * na); the firing bond is uniform over
    the active list. ``occ``/``last`` accumulate int eta(x) dt for sites,
    ``bact``/``blast`` the time each bond spends active.
    Returns (na, t, tag, next_index, reached_target).
    """
    nbond = eta.size - 1
    i = i0
    n = ex.size
    while i < n:
        if na == 0:
            return na, target, tag, i, True
        t_new = t + ex[i] / (rate * na)
        if t_new > target:
            # memoryless: discard the overshooting draw and stop at target
            return na, target, tag, i + 1, True
        t = t_new
        b = act[int(un[i] * na)]
        i += 1
        eb = eta[b]
        o = b + 1 - eb  # occupied end before the jump
        e = b + eb      # empty end before the jump
        cur[b] += 2 * eb - 1
        occ[o] += t - last[o]
        last[e] = t
        tag += (tag == o) * (e - o)
        eta[o] = 0
        eta[e] = 1
        # a swap across b flips the activity of both neighbouring bonds
        if b > 0:
            na = _toggle(b - 1, t, act, pos, na, bact, blast)
        if b + 1 < nbond:
            na = _toggle(b + 1, t, act, pos, na, bact, blast)
    return na, t, tag, i, False


@njit(cache=True, nogil=True)
def unif_run(eta, nprop, raw, j0, cur, tag):
    """Apply ``nprop`` uniformized proposals (uniform bond, swap if unequal).

    Bond indices come from 32-bit halves of ``raw`` via multiply-shift with
    rejection, so they are exactly uniform. Returns (done, next_word, tag,
    swaps) where ``swaps`` counts the proposals that moved a particle.
    """
    nbond = np.uint64(eta.size - 1)
    thr = (np.uint64(1 << 32) - nbond) % nbond
    nwords = raw.size * 2
    j = j0
    k = 0
    moved = 0
    while k < nprop and j < nwords:
        w = (raw[j >> 1] >> np.uint64(32 * (j & 1))) & _MASK32
        j += 1
        m = w * nbond
        if (m & _MASK32) < thr:
            continue
        b = np.int64(m >> np.uint64(32))
        a = b + 1
        eb = eta[b]
        ea = eta[a]
        d = np.int64(eb) - np.int64(ea)
        cur[b] += d
        eta[b] = ea
        eta[a] = eb
        tag += (tag == b) * (d > 0) - (tag == a) * (d < 0)
        moved += d != 0
        k += 1
    return k, j, tag, moved


@njit(cache=True, nogil=True)
def small_batch_rf(eta0, tag0, rate, t_end, ex, un, counts, tags):
    """Run many replicas of a small lattice from the same start, sharing one
    buffer pair. counts[r, :] receives the final occupancy. Returns the number
    of buffer entries used, or -1 if the buffers ran out."""
    S = eta0.size
    eta = np.empty_like(eta0)
    act = np.empty(S - 1, np.int64)
    pos = np.empty(S - 1, np.int64)
    cur = np.zeros(S - 1, np.int64)
    occ = np.zeros(S)
    last = np.zeros(S)
    bact = np.zeros(S - 1)
    blast = np.zeros(S - 1)
    i = 0
    for r in range(counts.shape[0]):
        eta[:] = eta0
        na = rebuild_active(eta, act, pos)
        na, t, tag, i, done = rf_run(eta, act, pos, na, 0.0, t_end, rate, ex, un, i,
                                     cur, occ, last, bact, blast, tag0)
        if not done:
            return -1
        counts[r, :] = eta
        tags[r] = tag
    return i


@njit(cache=True, nogil=True)
def small_batch_unif(eta0, tag0, nprops, raw, counts, tags):
    """Uniformized analogue of small_batch_rf; nprops[r] is the Poisson number
    of proposals for replica r."""
    S = eta0.size
    eta = np.empty_like(eta0)
    cur = np.zeros(S - 1, np.int64)
    j = 0
    for r in range(counts.shape[0]):
        eta[:] = eta0
        k, j, tag, _ = unif_run(eta, nprops[r], raw, j, cur, tag0)
        if k < nprops[r]:
            return -1
        counts[r, :] = eta
        tags[r] = tag
    return j
