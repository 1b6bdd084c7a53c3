"""Pure-NumPy reference kernels.

Same contracts as the compiled module: a grid backward-induction solve for
the known-count stage thresholds, and a lockstep batch replay of one-hop
episodes under every policy kind.
"""

from __future__ import annotations

import numpy as np

POLICY_CODES = {
    "comdp": 0,
    "inner": 1,
    "outer": 2,
    "a-comdp": 3,
    "a-simpl": 4,
    "ff": 5,
    "mf": 6,
}

# treat an edge-threshold denominator at or below this as "stop everywhere"
DENOM_FLOOR = 1e-12


def solve_threshold_tables(w_grid, b_grid, reward_weights, T, eta, K):
    """Backward induction of the stage threshold tables on the (w, b) grid.

    Level l (l relays still to come) averages
        max{b, r, prev(w+u, max{b, r})} - u/eta
    over the reward law and the wait density l(T-w-u)^(l-1)/(T-w)^l.
    Rewards are integrated with the supplied weights (trapezoid x pdf on the
    b grid, normalized); waits use a trapezoid rule on a per-row fraction
    grid with the density folded in and the weights normalized to unit mass,
    which keeps the stage tables monotone in b and above b-(T-w)/eta exactly.
    The mean-wait term is analytic: (T-w)/((l+1) eta).
    """
    w_grid = np.asarray(w_grid, dtype=float)
    b_grid = np.asarray(b_grid, dtype=float)
    rw = np.asarray(reward_weights, dtype=float)
    nw, nb = w_grid.size, b_grid.size
    tables = np.zeros((K, nw, nb))
    if K == 1:
        return tables

    nu = nw
    s = np.linspace(0.0, 1.0, nu)
    tw = np.ones(nu)
    tw[0] = tw[-1] = 0.5
    tw /= nu - 1

    dw = w_grid[1] - w_grid[0]
    x = w_grid[:, None] + (T - w_grid[:, None]) * s[None, :]   # wake clock at each u node
    f = np.clip(x / dw, 0.0, nw - 1.0)
    i0 = np.minimum(f.astype(np.int64), nw - 2)
    frac = f - i0

    csum = np.cumsum(rw)
    remain = T - w_grid

    prev = tables[0]
    for ell in range(1, K):
        wu = tw * ell * (1.0 - s) ** (ell - 1)
        wu /= wu.sum()
        interp = prev[i0, :] * (1.0 - frac)[:, :, None] + prev[i0 + 1, :] * frac[:, :, None]
        best = np.maximum(interp, b_grid[None, None, :])
        g = np.einsum("q,iqj->ij", wu, best)
        gw = g * rw[None, :]
        suffix = np.zeros((nw, nb + 1))
        suffix[:, :-1] = np.cumsum(gw[:, ::-1], axis=1)[:, ::-1]
        combined = g * csum[None, :] + suffix[:, 1:]
        tables[ell] = combined - (remain / ((ell + 1) * eta))[:, None]
        prev = tables[ell]
    return tables


def _bilinear_setup(w, b, w0, dw, nw, b0, db, nb):
    """Clamped bilinear corner indices/weights shared across all levels."""
    fw = np.clip((np.asarray(w, dtype=float) - w0) / dw, 0.0, nw - 1.0)
    fb = np.clip((np.asarray(b, dtype=float) - b0) / db, 0.0, nb - 1.0)
    iw = np.minimum(fw.astype(np.int64), nw - 2)
    ib = np.minimum(fb.astype(np.int64), nb - 2)
    aw = fw - iw
    ab = fb - ib
    return iw, ib, aw, ab


def _bilinear_levels(tables, levels, iw, ib, aw, ab):
    """Gather tables[levels] at per-row points; levels broadcast against rows."""
    t00 = tables[levels, iw, ib]
    t01 = tables[levels, iw, ib + 1]
    t10 = tables[levels, iw + 1, ib]
    t11 = tables[levels, iw + 1, ib + 1]
    return (
        t00 * (1 - aw) * (1 - ab)
        + t01 * (1 - aw) * ab
        + t10 * aw * (1 - ab)
        + t11 * aw * ab
    )


def replay_episodes(policy, counts, offsets, wakes, rewards, tables,
                    w0, dw, nw, b0, db, nb, T, K, eta, alpha, n_bar, prior):
    """Replay packed episodes under one policy; returns (delays, rewards).

    Episodes advance in lockstep over stages: at stage k the still-running
    episodes whose relay count is below k wait out the cycle (delay T, best
    reward so far); the rest observe wake k, update state (and for the bound
    policies the belief), and stop or continue.
    """
    counts = np.asarray(counts)
    E = counts.size
    delays = np.empty(E)
    out_rewards = np.empty(E)
    active = np.ones(E, dtype=bool)
    b = np.zeros(E)
    w_prev = np.zeros(E)
    first_idx = offsets[:-1]

    needs_belief = policy in (POLICY_CODES["inner"], POLICY_CODES["outer"])
    if needs_belief:
        bel = np.broadcast_to(prior, (E, K)).copy()

    max_stage = K if policy != POLICY_CODES["a-comdp"] else min(K, n_bar)
    for k in range(1, max_stage + 1):
        exhausted = active & (counts == k - 1)
        if exhausted.any():
            delays[exhausted] = T
            out_rewards[exhausted] = b[exhausted]
            active[exhausted] = False
        alive = active & (counts >= k)
        if not alive.any():
            break
        idx = np.flatnonzero(alive)
        wk = wakes[first_idx[idx] + k - 1]
        rk = rewards[first_idx[idx] + k - 1]

        if needs_belief:
            x = (T - wk) / (T - w_prev[idx])
            width = K - k + 1
            powers = np.ones((idx.size, width))
            powers[:, 1:] = np.cumprod(
                np.broadcast_to(x[:, None], (idx.size, width - 1)), axis=1
            )
            lik = powers * np.arange(1, width + 1)[None, :]
            sub = bel[idx, k - 1:] * lik
            tot = sub.sum(axis=1)
            if np.any(tot <= 0.0):
                raise RuntimeError("belief update with no admissible hypothesis")
            bel[idx, k - 1:] = sub / tot[:, None]

        b[idx] = np.maximum(b[idx], rk)
        bk = b[idx]

        if policy == POLICY_CODES["ff"]:
            stop = np.ones(idx.size, dtype=bool)
        elif policy == POLICY_CODES["mf"]:
            stop = counts[idx] == k
        elif policy == POLICY_CODES["a-simpl"]:
            stop = bk >= alpha
        elif policy == POLICY_CODES["comdp"]:
            iw, ib, aw, ab = _bilinear_setup(wk, bk, w0, dw, nw, b0, db, nb)
            lev = (counts[idx] - k).astype(np.int64)
            phi = _bilinear_levels(tables, lev, iw, ib, aw, ab)
            stop = bk >= phi
        elif policy == POLICY_CODES["a-comdp"]:
            iw, ib, aw, ab = _bilinear_setup(wk, bk, w0, dw, nw, b0, db, nb)
            lev = np.full(idx.size, n_bar - k, dtype=np.int64)
            phi = _bilinear_levels(tables, lev, iw, ib, aw, ab)
            stop = bk >= phi
        else:  # inner / outer bound membership
            m = K - k
            if m == 0:
                stop = np.ones(idx.size, dtype=bool)
            else:
                iw, ib, aw, ab = _bilinear_setup(wk, bk, w0, dw, nw, b0, db, nb)
                lev = np.arange(1, m + 1)[None, :]
                phi = _bilinear_levels(
                    tables, lev, iw[:, None], ib[:, None], aw[:, None], ab[:, None]
                )
                den = (T - wk)[:, None] - eta * (bk[:, None] - phi)
                if policy == POLICY_CODES["inner"]:
                    ratio = np.where(den > DENOM_FLOOR, den, 0.0) / (T - wk)[:, None]
                    hull_sum = (bel[idx, k:] * ratio).sum(axis=1)
                    stop = hull_sum <= 1.0
                else:
                    min_den = den.min(axis=1)
                    delta_max = np.where(
                        min_den > DENOM_FLOOR, (T - wk) / np.maximum(min_den, DENOM_FLOOR), np.inf
                    )
                    stop = bel[idx, k - 1] >= 1.0 - delta_max

        stopping = idx[stop]
        delays[stopping] = wk[stop]
        out_rewards[stopping] = bk[stop]
        active[stopping] = False
        cont = idx[~stop]
        w_prev[cont] = wk[~stop]

    if active.any():
        # a-comdp past its assumed horizon, or any policy out of relays
        delays[active] = T
        out_rewards[active] = b[active]
    return delays, out_rewards
