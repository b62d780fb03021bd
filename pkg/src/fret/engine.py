"""Vectorised lockstep simulation over per-replicate counter-based streams.

All replicates advance one step per iteration; each consumes exactly one
uniform pair per step (transition+flag, sojourn) from its own Philox
stream, so a replicate's trajectory is a pure function of (master key,
replicate index).  That makes results independent of worker partitioning
and lets the first-rare-event sampler replay trajectory prefixes exactly
when a time grid requires partial sums at indices that are only known
once nu has been observed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import ReplicateStreams, philox_block, _to_unit
from .smp import MarkovRenewalKernel, MaxStepsExceeded, PathSample, _as_probs


@dataclass
class FirstRareEventBatch:
    """Arrays indexed by replicate; reduction order is replicate order."""

    nu: np.ndarray
    xi: np.ndarray
    last_sojourn: np.ndarray
    t_grid: tuple = None
    xi_grid: np.ndarray = None          # (n, len(t_grid))
    reward_total: np.ndarray = None

    @property
    def n(self) -> int:
        return self.nu.size


class _BlockCursor:
    """Hands out uniform pairs draw-by-draw, two pairs per Philox block."""

    def __init__(self, streams: ReplicateStreams):
        self.base0 = streams.base0
        self.keys1 = streams.keys1().copy()
        self.block_index = -1
        self.words = None

    def pair(self, draw: int):
        bidx, half = divmod(draw, 2)
        if bidx != self.block_index:
            self.words = philox_block(self.base0, self.keys1, bidx + 1)
            self.block_index = bidx
        w = self.words
        if half == 0:
            return _to_unit(w[0]), _to_unit(w[1])
        return _to_unit(w[2]), _to_unit(w[3])

    def compact(self, keep: np.ndarray):
        self.keys1 = self.keys1[keep]
        if self.words is not None:
            self.words = tuple(w[keep] for w in self.words)


def _initial_states(kernel, q, cursor) -> np.ndarray:
    qcum = np.cumsum(_as_probs(q, kernel.m))
    u, _ = cursor.pair(0)
    return np.minimum(
        np.searchsorted(qcum, u, side="right"), kernel.m - 1
    ).astype(np.int64)


def _step(kernel, state, u_t, u_k):
    """One lockstep transition: returns (next state, flag, sojourn)."""
    cums = kernel._cums
    rows = cums[state]
    o = np.minimum((u_t[:, None] >= rows).sum(axis=1), cums.shape[1] - 1)
    j = o >> 1
    fl = (o & 1).astype(bool)
    dists = kernel._dists
    if len(dists) == 1:
        kappa = np.asarray(dists[0].ppf_sample(u_k), dtype=float)
    else:
        did = kernel._dist_ids[state, j, o & 1]
        kappa = np.empty(u_k.size)
        for d in range(len(dists)):
            mask = did == d
            if mask.any():
                kappa[mask] = dists[d].ppf_sample(u_k[mask])
    return j, fl, kappa


def first_rare_event_batch(kernel: MarkovRenewalKernel, q,
                           streams: ReplicateStreams, t_grid=None,
                           reward=None, max_steps: int = 10 ** 9
                           ) -> FirstRareEventBatch:
    """Sample (nu, xi, last sojourn) for every replicate, plus extras.

    ``reward`` is an optional per-state vector accumulated as
    f(state before the step) over steps 1..nu.  ``t_grid`` requests
    xi(t) = partial sums at floor(t * nu); those indices need nu, so the
    sampler replays each trajectory from its stream once nu is known.
    """
    if kernel.rare_event_probs().probs.max() == 0.0:
        raise ValueError("rare event unreachable: every flag probability is 0")
    n = streams.n
    rew_vec = None
    if reward is not None:
        rew_vec = np.asarray(reward, dtype=float)
        if rew_vec.shape != (kernel.m,):
            raise ValueError("reward must be one value per state")
    cursor = _BlockCursor(streams)
    state = _initial_states(kernel, q, cursor)
    alive = np.arange(n)
    acc = np.zeros(n)
    rew = np.zeros(n) if rew_vec is not None else None
    nu = np.zeros(n, dtype=np.int64)
    xi = np.zeros(n)
    last = np.zeros(n)
    rew_out = np.zeros(n) if rew_vec is not None else None
    step = 0
    while alive.size:
        step += 1
        if step > max_steps:
            raise MaxStepsExceeded(
                f"{alive.size} replicates without a rare event after "
                f"{max_steps} steps"
            )
        u_t, u_k = cursor.pair(step)
        j, fl, kappa = _step(kernel, state, u_t, u_k)
        acc += kappa
        if rew is not None:
            rew += rew_vec[state]
        if fl.any():
            done = alive[fl]
            nu[done] = step
            xi[done] = acc[fl]
            last[done] = kappa[fl]
            if rew is not None:
                rew_out[done] = rew[fl]
            keep = ~fl
            alive = alive[keep]
            state = j[keep]
            acc = acc[keep]
            if rew is not None:
                rew = rew[keep]
            cursor.compact(keep)
        else:
            state = j
    batch = FirstRareEventBatch(nu=nu, xi=xi, last_sojourn=last,
                                reward_total=rew_out)
    if t_grid is not None:
        ts = tuple(float(t) for t in t_grid)
        if any(t < 0 for t in ts):
            raise ValueError("t_grid must be nonnegative")
        batch.t_grid = ts
        batch.xi_grid = _replay_partial_sums(kernel, q, streams, nu, ts,
                                             max_steps)
    return batch


def _replay_partial_sums(kernel, q, streams, nu, ts, max_steps) -> np.ndarray:
    """Second pass: partial sojourn sums at floor(t * nu) per replicate."""
    n = streams.n
    order = np.argsort(ts, kind="stable")
    targets = np.empty((n, len(ts)), dtype=np.int64)
    for col, g in enumerate(order):
        targets[:, col] = np.floor(ts[g] * nu).astype(np.int64)
    out_sorted = np.zeros((n, len(ts)))
    ptr = np.zeros(n, dtype=np.int64)
    # targets of 0 are empty sums
    for col in range(len(ts)):
        fill = (ptr == col) & (targets[:, col] == 0)
        ptr[fill] += 1
    cursor = _BlockCursor(streams)
    state = _initial_states(kernel, q, cursor)
    acc = np.zeros(n)
    alive = np.arange(n)
    live = ptr < len(ts)
    if not live.all():
        alive = alive[live]
        state = state[live]
        acc = acc[live]
        ptr = ptr[live]
        cursor.compact(live)
    step = 0
    ncols = len(ts)
    while alive.size:
        step += 1
        if step > max_steps:
            raise MaxStepsExceeded(
                f"replay beyond {max_steps} steps"
            )
        u_t, u_k = cursor.pair(step)
        j, _fl, kappa = _step(kernel, state, u_t, u_k)
        acc += kappa
        state = j
        cur = targets[alive, np.minimum(ptr, ncols - 1)]
        hit = (ptr < ncols) & (cur == step)
        while hit.any():
            out_sorted[alive[hit], ptr[hit]] = acc[hit]
            ptr[hit] += 1
            cur = targets[alive, np.minimum(ptr, ncols - 1)]
            hit = (ptr < ncols) & (cur == step)
        live = ptr < ncols
        if not live.all():
            alive = alive[live]
            state = state[live]
            acc = acc[live]
            ptr = ptr[live]
            cursor.compact(live)
    out = np.empty_like(out_sorted)
    out[:, order] = out_sorted
    return out


def fixed_horizon_batch(kernel: MarkovRenewalKernel, q,
                        streams: ReplicateStreams, n_steps: int,
                        checkpoints=(), record: bool = False):
    """Run every replicate for exactly ``n_steps`` steps.

    Returns (checkpoint partial sums (n, len(checkpoints)), step of the
    first flag per replicate with 0 meaning "none within the horizon",
    recorded path arrays or None).  Checkpoint entries are step counts;
    0 yields the empty sum.
    """
    n = streams.n
    cps = np.asarray(checkpoints, dtype=np.int64)
    if cps.size and (cps.min() < 0 or cps.max() > n_steps):
        raise ValueError("checkpoints must lie in [0, n_steps]")
    cursor = _BlockCursor(streams)
    state = _initial_states(kernel, q, cursor)
    acc = np.zeros(n)
    first_flag = np.zeros(n, dtype=np.int64)
    sums = np.zeros((n, cps.size))
    rec_states = rec_soj = rec_flags = None
    if record:
        rec_states = np.empty((n, n_steps + 1), dtype=np.int16)
        rec_soj = np.empty((n, n_steps))
        rec_flags = np.empty((n, n_steps), dtype=np.int8)
        rec_states[:, 0] = state + 1
    for col in np.flatnonzero(cps == 0):
        sums[:, col] = 0.0
    for step in range(1, n_steps + 1):
        u_t, u_k = cursor.pair(step)
        j, fl, kappa = _step(kernel, state, u_t, u_k)
        acc += kappa
        newly = fl & (first_flag == 0)
        if newly.any():
            first_flag[newly] = step
        if record:
            rec_states[:, step] = j + 1
            rec_soj[:, step - 1] = kappa
            rec_flags[:, step - 1] = fl
        for col in np.flatnonzero(cps == step):
            sums[:, col] = acc
        state = j
    paths = None
    if record:
        paths = (rec_states, rec_soj, rec_flags)
    return sums, first_flag, paths


def simulate_paths(kernel: MarkovRenewalKernel, q, n_steps: int,
                   streams: ReplicateStreams) -> list:
    """Batch of PathSample objects simulated in lockstep."""
    _, _, rec = fixed_horizon_batch(kernel, q, streams, n_steps, record=True)
    states, soj, flags = rec
    return [
        PathSample.from_steps(states[r], soj[r], flags[r])
        for r in range(streams.n)
    ]


def first_rare_event_samples(kernel, q, master_seed: int, n: int, *,
                             labels=("fre",), t_grid=None, reward=None,
                             max_steps: int = 10 ** 9) -> FirstRareEventBatch:
    """Convenience wrapper building the stream family from a seed."""
    streams = ReplicateStreams(master_seed, *labels, n=n)
    return first_rare_event_batch(kernel, q, streams, t_grid=t_grid,
                                  reward=reward, max_steps=max_steps)
