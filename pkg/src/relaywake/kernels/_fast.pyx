# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: stage-threshold backward induction and episode replay.

Mirrors kernels._pyref exactly; see that module for the contracts.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, floor

cnp.import_array()

POLICY_CODES = {
    "comdp": 0,
    "inner": 1,
    "outer": 2,
    "a-comdp": 3,
    "a-simpl": 4,
    "ff": 5,
    "mf": 6,
}

cdef double DENOM_FLOOR = 1e-12


def solve_threshold_tables(w_grid, b_grid, reward_weights, double T, double eta, int K):
    cdef double[::1] wg = np.ascontiguousarray(w_grid, dtype=np.float64)
    cdef double[::1] bg = np.ascontiguousarray(b_grid, dtype=np.float64)
    cdef double[::1] rw = np.ascontiguousarray(reward_weights, dtype=np.float64)
    cdef int nw = wg.shape[0]
    cdef int nb = bg.shape[0]
    cdef int nu = nw

    out = np.zeros((K, nw, nb), dtype=np.float64)
    cdef double[:, :, ::1] tables = out
    if K == 1:
        return out

    cdef cnp.ndarray wu_arr = np.empty(nu, dtype=np.float64)
    cdef double[::1] wu = wu_arr
    cdef cnp.ndarray tw_arr = np.empty(nu, dtype=np.float64)
    cdef double[::1] tw = tw_arr
    cdef cnp.ndarray s_arr = np.linspace(0.0, 1.0, nu)
    cdef double[::1] s = s_arr
    cdef cnp.ndarray g_arr = np.empty(nb, dtype=np.float64)
    cdef double[::1] grow = g_arr
    cdef cnp.ndarray csum_arr = np.cumsum(np.asarray(reward_weights, dtype=np.float64))
    cdef double[::1] csum = csum_arr

    cdef int ell, i, q, j, i0
    cdef double dw = wg[1] - wg[0]
    cdef double wsum, x, f, a, pw, interp, m, suffix, remain, ucost

    for q in range(nu):
        tw[q] = 1.0 / (nu - 1)
    tw[0] *= 0.5
    tw[nu - 1] *= 0.5

    cdef double[:, ::1] prev
    cdef double[:, ::1] cur

    for ell in range(1, K):
        prev = tables[ell - 1]
        cur = tables[ell]
        wsum = 0.0
        for q in range(nu):
            pw = (1.0 - s[q]) ** (ell - 1) if ell > 1 else 1.0
            wu[q] = tw[q] * ell * pw
            wsum += wu[q]
        for q in range(nu):
            wu[q] /= wsum
        with nogil:
            for i in range(nw):
                remain = T - wg[i]
                for j in range(nb):
                    grow[j] = 0.0
                for q in range(nu):
                    x = wg[i] + remain * s[q]
                    f = x / dw
                    if f < 0.0:
                        f = 0.0
                    elif f > nw - 1.0:
                        f = nw - 1.0
                    i0 = <int>floor(f)
                    if i0 > nw - 2:
                        i0 = nw - 2
                    a = f - i0
                    for j in range(nb):
                        interp = prev[i0, j] * (1.0 - a) + prev[i0 + 1, j] * a
                        m = interp if interp > bg[j] else bg[j]
                        grow[j] += wu[q] * m
                # combine over rewards: sum_q rw[q] * grow[max(j, q)]
                suffix = 0.0
                ucost = remain / ((ell + 1) * eta)
                for j in range(nb - 1, -1, -1):
                    cur[i, j] = grow[j] * csum[j] + suffix - ucost
                    suffix += rw[j] * grow[j]
    return out


cdef inline double _phi_at(const double[:, :, ::1] tables, int lev, int iw, int ib,
                           double c00, double c01, double c10, double c11) nogil:
    return (tables[lev, iw, ib] * c00 + tables[lev, iw, ib + 1] * c01
            + tables[lev, iw + 1, ib] * c10 + tables[lev, iw + 1, ib + 1] * c11)


def replay_episodes(int policy, counts, offsets, wakes, rewards, tables,
                    double w0, double dw, int nw, double b0, double db, int nb,
                    double T, int K, double eta, double alpha, int n_bar, prior):
    cdef const int[::1] cnt = np.ascontiguousarray(counts, dtype=np.int32)
    cdef const long long[::1] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef const double[::1] wk_flat = np.ascontiguousarray(wakes, dtype=np.float64)
    cdef const double[::1] rw_flat = np.ascontiguousarray(rewards, dtype=np.float64)
    cdef const double[:, :, ::1] tab = np.ascontiguousarray(tables, dtype=np.float64)
    cdef const double[::1] p0 = np.ascontiguousarray(prior, dtype=np.float64)

    cdef Py_ssize_t E = cnt.shape[0]
    delays_arr = np.empty(E, dtype=np.float64)
    rewards_arr = np.empty(E, dtype=np.float64)
    cdef double[::1] delays = delays_arr
    cdef double[::1] out_rewards = rewards_arr
    bel_arr = np.empty(K, dtype=np.float64)
    cdef double[::1] bel = bel_arr

    cdef Py_ssize_t e
    cdef int n, k, i, lev, m, stop, max_stage
    cdef long long base
    cdef double b, w_prev, wk, rk, x, lik, tot, remain
    cdef double fw, fb, aw, ab, c00, c01, c10, c11, phi, den, hull_sum, min_den, dmax
    cdef int iw, ib
    cdef bint needs_belief = policy == 1 or policy == 2

    with nogil:
        for e in range(E):
            n = cnt[e]
            base = off[e]
            b = 0.0
            w_prev = 0.0
            if needs_belief:
                for i in range(K):
                    bel[i] = p0[i]
            max_stage = n
            if policy == 3 and n_bar < n:
                max_stage = n_bar
            stop = 0
            for k in range(1, max_stage + 1):
                wk = wk_flat[base + k - 1]
                rk = rw_flat[base + k - 1]
                if needs_belief:
                    x = (T - wk) / (T - w_prev)
                    lik = 1.0
                    tot = 0.0
                    for i in range(k - 1, K):
                        bel[i] *= lik
                        tot += bel[i]
                        lik *= x * (<double>(i - k + 3)) / (<double>(i - k + 2))
                    for i in range(k - 1, K):
                        bel[i] /= tot
                if rk > b:
                    b = rk
                remain = T - wk

                if policy == 5:      # ff
                    stop = 1
                elif policy == 6:    # mf
                    stop = 1 if k == n else 0
                elif policy == 4:    # a-simpl
                    stop = 1 if b >= alpha else 0
                else:
                    # shared clamped bilinear corner setup at (wk, b)
                    fw = (wk - w0) / dw
                    if fw < 0.0:
                        fw = 0.0
                    elif fw > nw - 1.0:
                        fw = nw - 1.0
                    iw = <int>floor(fw)
                    if iw > nw - 2:
                        iw = nw - 2
                    aw = fw - iw
                    fb = (b - b0) / db
                    if fb < 0.0:
                        fb = 0.0
                    elif fb > nb - 1.0:
                        fb = nb - 1.0
                    ib = <int>floor(fb)
                    if ib > nb - 2:
                        ib = nb - 2
                    ab = fb - ib
                    c00 = (1.0 - aw) * (1.0 - ab)
                    c01 = (1.0 - aw) * ab
                    c10 = aw * (1.0 - ab)
                    c11 = aw * ab

                    if policy == 0:      # comdp
                        lev = n - k
                        phi = _phi_at(tab, lev, iw, ib, c00, c01, c10, c11) if lev > 0 else 0.0
                        stop = 1 if b >= phi else 0
                    elif policy == 3:    # a-comdp
                        lev = n_bar - k
                        phi = _phi_at(tab, lev, iw, ib, c00, c01, c10, c11) if lev > 0 else 0.0
                        stop = 1 if b >= phi else 0
                    elif policy == 1:    # inner bound membership
                        m = K - k
                        hull_sum = 0.0
                        for lev in range(1, m + 1):
                            if bel[k - 1 + lev] > 0.0:
                                phi = _phi_at(tab, lev, iw, ib, c00, c01, c10, c11)
                                den = remain - eta * (b - phi)
                                if den > DENOM_FLOOR:
                                    hull_sum += bel[k - 1 + lev] * den / remain
                        stop = 1 if hull_sum <= 1.0 else 0
                    else:                # outer bound membership
                        m = K - k
                        min_den = INFINITY
                        for lev in range(1, m + 1):
                            phi = _phi_at(tab, lev, iw, ib, c00, c01, c10, c11)
                            den = remain - eta * (b - phi)
                            if den < min_den:
                                min_den = den
                        if m == 0 or min_den <= DENOM_FLOOR:
                            stop = 1
                        else:
                            dmax = remain / min_den
                            stop = 1 if bel[k - 1] >= 1.0 - dmax else 0
                if stop:
                    delays[e] = wk
                    out_rewards[e] = b
                    break
                w_prev = wk
            if not stop:
                delays[e] = T
                out_rewards[e] = b
    return delays_arr, rewards_arr
