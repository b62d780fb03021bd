"""Markov renewal / semi-Markov model and first-rare-event functionals.

The model is a homogeneous Markov chain of triples (state, sojourn, flag):
given the current state i, a step draws (next state j, flag) from the
joint law p_{ij,flag} and then a sojourn time from the conditional
distribution attached to (i, j, flag).  The first step whose flag is 1 is
the rare event; nu counts the steps up to and including it and xi is the
accumulated sojourn time.

Single-realization operations take a ``numpy.random.Generator``.  Batch
sampling lives in :mod:`fret.engine` and is driven by per-replicate
counter-based streams so results are independent of worker partitioning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import dist as dist_mod
from .chain import ProbabilityVector, StochasticMatrix

DEFAULT_MAX_STEPS = 10 ** 9


class MaxStepsExceeded(Exception):
    """The rare event did not occur within the step budget."""


class PathTooShort(Exception):
    """A stored path does not cover the requested reward horizon."""


@dataclass(frozen=True, eq=False)
class RareEventProbs:
    """Per-state probability that a single step raises the flag."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if np.any(p < 0) or np.any(p > 1):
            raise ValueError("rare-event probabilities must lie in [0, 1]")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    def max(self) -> float:
        return float(self.probs.max())


@dataclass(frozen=True, eq=False)
class MarkovRenewalKernel:
    """Joint one-step law of (next state, flag, sojourn time).

    ``joint_probs[i, j, fl]`` is the probability of moving i+1 -> j+1 with
    flag ``fl`` (0-based array over 1-based states); ``sojourns`` maps
    1-based ``(i, j, flag)`` to the conditional sojourn distribution.
    Triples with zero probability may be omitted.
    """

    joint_probs: np.ndarray
    sojourns: dict

    def __post_init__(self):
        jp = np.array(self.joint_probs, dtype=float)
        if jp.ndim != 3 or jp.shape[0] != jp.shape[1] or jp.shape[2] != 2:
            raise ValueError("joint_probs must have shape (m, m, 2)")
        if np.any(jp < 0):
            raise ValueError("joint probabilities must be nonnegative")
        sums = jp.reshape(jp.shape[0], -1).sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-12):
            raise ValueError("per-state joint probabilities must sum to 1")
        jp.setflags(write=False)
        object.__setattr__(self, "joint_probs", jp)
        m = jp.shape[0]
        zero = dist_mod.Deterministic(0.0)
        grid = np.empty((m, m, 2), dtype=object)
        for i in range(m):
            for j in range(m):
                for fl in (0, 1):
                    d = self.sojourns.get((i + 1, j + 1, fl))
                    if d is None:
                        if jp[i, j, fl] > 0:
                            raise ValueError(
                                f"missing sojourn law for transition "
                                f"({i + 1},{j + 1},{fl}) with positive "
                                f"probability"
                            )
                        d = zero
                    grid[i, j, fl] = d
        object.__setattr__(self, "sojourns", dict(self.sojourns))
        object.__setattr__(self, "_grid", grid)
        # engine tables: cumulative outcome rows (last column pinned to 1)
        # and integer distribution ids for vectorised dispatch
        cums = np.cumsum(jp.reshape(m, 2 * m), axis=1)
        cums[:, -1] = 1.0
        cums.setflags(write=False)
        uniq: list = []
        ids = np.empty((m, m, 2), dtype=np.int32)
        for i in range(m):
            for j in range(m):
                for fl in (0, 1):
                    d = grid[i, j, fl]
                    try:
                        k = uniq.index(d)
                    except ValueError:
                        uniq.append(d)
                        k = len(uniq) - 1
                    ids[i, j, fl] = k
        ids.setflags(write=False)
        object.__setattr__(self, "_cums", cums)
        object.__setattr__(self, "_dist_ids", ids)
        object.__setattr__(self, "_dists", tuple(uniq))

    @property
    def m(self) -> int:
        return self.joint_probs.shape[0]

    def sojourn(self, i: int, j: int, flag: int) -> dist_mod.SojournDistribution:
        return self._grid[i - 1, j - 1, flag]

    def embedded_matrix(self) -> StochasticMatrix:
        return StochasticMatrix(self.joint_probs.sum(axis=2))

    def rare_event_probs(self) -> RareEventProbs:
        return RareEventProbs(self.joint_probs[:, :, 1].sum(axis=1))

    def survival_matrix(self) -> np.ndarray:
        """Substochastic matrix of flagless transitions p_{ij,0}."""
        return self.joint_probs[:, :, 0].copy()

    def laplace_table(self, s: float) -> np.ndarray:
        """Laplace transform of each conditional sojourn law, shape (m,m,2)."""
        m = self.m
        out = np.empty((m, m, 2))
        cache: dict = {}
        for i in range(m):
            for j in range(m):
                for fl in (0, 1):
                    d = self._grid[i, j, fl]
                    key = id(d)
                    if key not in cache:
                        cache[key] = d.laplace(s)
                    out[i, j, fl] = cache[key]
        return out

    def state_laplace(self, i: int, s: float) -> float:
        """E_i e^{-s kappa_1}: transform of the state-i sojourn mixture."""
        jp = self.joint_probs[i - 1]
        g = self._grid[i - 1]
        return float(sum(jp[j, fl] * g[j, fl].laplace(s)
                         for j in range(self.m) for fl in (0, 1)
                         if jp[j, fl] > 0))

    def state_tail(self, i: int, u: float) -> float:
        jp = self.joint_probs[i - 1]
        g = self._grid[i - 1]
        return float(sum(jp[j, fl] * g[j, fl].tail(u)
                         for j in range(self.m) for fl in (0, 1)
                         if jp[j, fl] > 0))

    def state_truncated_mean(self, i: int, u: float) -> float:
        jp = self.joint_probs[i - 1]
        g = self._grid[i - 1]
        return float(sum(jp[j, fl] * g[j, fl].truncated_mean(u)
                         for j in range(self.m) for fl in (0, 1)
                         if jp[j, fl] > 0))

    def to_json(self) -> dict:
        soj = {}
        for i in range(self.m):
            for j in range(self.m):
                for fl in (0, 1):
                    if self.joint_probs[i, j, fl] > 0:
                        soj[f"{i + 1},{j + 1},{fl}"] = \
                            self._grid[i, j, fl].to_json()
        return {
            "m": self.m,
            "joint_probs": self.joint_probs.tolist(),
            "sojourn": soj,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MarkovRenewalKernel":
        jp = np.asarray(obj["joint_probs"], dtype=float)
        soj = {}
        for key, val in obj.get("sojourn", {}).items():
            i, j, fl = (int(x) for x in key.split(","))
            soj[(i, j, fl)] = dist_mod.from_json(val)
        return cls(jp, soj)

    @classmethod
    def from_flag_probs(cls, P, flag_probs, sojourn_by_state=None,
                        sojourn_by_state_flag=None) -> "MarkovRenewalKernel":
        """Common special case: flag independent of (j, kappa) given i.

        ``P`` is the embedded matrix, ``flag_probs[i]`` the per-state flag
        probability.  Sojourn laws may depend on the state alone
        (``sojourn_by_state``) or on (state, flag)
        (``sojourn_by_state_flag[i][flag]``); exactly one must be given.
        """
        rows = P.rows if isinstance(P, StochasticMatrix) else \
            StochasticMatrix(np.asarray(P, dtype=float)).rows
        m = rows.shape[0]
        p = np.asarray(flag_probs, dtype=float)
        if p.shape != (m,) or np.any(p < 0) or np.any(p > 1):
            raise ValueError("flag_probs must be m probabilities")
        if (sojourn_by_state is None) == (sojourn_by_state_flag is None):
            raise ValueError("give exactly one sojourn specification")
        jp = np.empty((m, m, 2))
        jp[:, :, 0] = rows * (1.0 - p)[:, None]
        jp[:, :, 1] = rows * p[:, None]
        soj = {}
        for i in range(m):
            for j in range(m):
                for fl in (0, 1):
                    if sojourn_by_state is not None:
                        soj[(i + 1, j + 1, fl)] = sojourn_by_state[i]
                    else:
                        soj[(i + 1, j + 1, fl)] = sojourn_by_state_flag[i][fl]
        return cls(jp, soj)


@dataclass(frozen=True, eq=False)
class PathSample:
    """A simulated trajectory: states, sojourns, flags, and jump moments."""

    states: np.ndarray       # eta_0..eta_n, 1-based labels
    sojourns: np.ndarray     # kappa_1..kappa_n
    flags: np.ndarray        # zeta_1..zeta_n in {0, 1}
    jump_moments: np.ndarray  # tau_0 = 0, tau_k = kappa_1 + .. + kappa_k

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.int64)
        soj = np.asarray(self.sojourns, dtype=float)
        flags = np.asarray(self.flags, dtype=np.int8)
        tau = np.asarray(self.jump_moments, dtype=float)
        n = soj.size
        if states.size != n + 1 or flags.size != n or tau.size != n + 1:
            raise ValueError("inconsistent path component lengths")
        if tau[0] != 0.0 or np.any(np.diff(tau) < 0):
            raise ValueError("jump moments must start at 0 and be nondecreasing")
        for arr in (states, soj, flags, tau):
            arr.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "sojourns", soj)
        object.__setattr__(self, "flags", flags)
        object.__setattr__(self, "jump_moments", tau)

    @property
    def n_steps(self) -> int:
        return self.sojourns.size

    @classmethod
    def from_steps(cls, states, sojourns, flags) -> "PathSample":
        soj = np.asarray(sojourns, dtype=float)
        tau = np.concatenate(([0.0], np.cumsum(soj)))
        return cls(np.asarray(states), soj, np.asarray(flags), tau)


@dataclass(frozen=True)
class FirstRareEventSample:
    """One realization of (nu, xi, last sojourn) and optionally xi(t)."""

    nu: int
    xi: float
    last_sojourn: float
    t_grid: tuple = None
    xi_grid: np.ndarray = None

    def __post_init__(self):
        if self.nu < 1:
            raise ValueError("nu counts at least one transition")
        if (self.t_grid is None) != (self.xi_grid is None):
            raise ValueError("t_grid and xi_grid must be given together")


def _as_probs(q, m: int) -> np.ndarray:
    if isinstance(q, ProbabilityVector):
        probs = q.probs
    else:
        probs = ProbabilityVector(np.asarray(q, dtype=float)).probs
    if probs.size != m:
        raise ValueError("initial distribution has wrong length")
    return probs


def _draw_outcome(kernel, state0, u):
    """0-based (next state, flag) from one uniform via the outcome rows."""
    row = kernel._cums[state0]
    o = min(int(np.searchsorted(row, u, side="right")), row.size - 1)
    return o >> 1, o & 1


def simulate_path(kernel: MarkovRenewalKernel, q, n_steps: int,
                  rng: np.random.Generator) -> PathSample:
    """Simulate eta_0..eta_n with sojourns and flags; eta_0 ~ q."""
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    probs = _as_probs(q, kernel.m)
    qcum = np.cumsum(probs)
    state = min(int(np.searchsorted(qcum, rng.random(), side="right")),
                kernel.m - 1)
    states = np.empty(n_steps + 1, dtype=np.int64)
    states[0] = state + 1
    soj = np.empty(n_steps)
    flags = np.empty(n_steps, dtype=np.int8)
    for k in range(n_steps):
        j, fl = _draw_outcome(kernel, state, rng.random())
        kappa = float(kernel._grid[state, j, fl].ppf_sample(rng.random()))
        states[k + 1] = j + 1
        soj[k] = kappa
        flags[k] = fl
        state = j
    return PathSample.from_steps(states, soj, flags)


def sample_first_rare_event(kernel: MarkovRenewalKernel, q,
                            rng: np.random.Generator, t_grid=None,
                            max_steps: int = DEFAULT_MAX_STEPS
                            ) -> FirstRareEventSample:
    """Run until the first flagged step; optionally evaluate xi(t) on a grid.

    xi(t) sums the first floor(t * nu) sojourns, so values of t above 1
    require the trajectory to continue past the rare event; the sampler
    extends the path as needed.  Raises MaxStepsExceeded rather than
    truncating silently.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    if kernel.rare_event_probs().probs.max() == 0.0:
        raise ValueError("rare event unreachable: every flag probability is 0")
    probs = _as_probs(q, kernel.m)
    qcum = np.cumsum(probs)
    state = min(int(np.searchsorted(qcum, rng.random(), side="right")),
                kernel.m - 1)
    kappas = []
    acc = 0.0
    nu = None
    step = 0
    while True:
        step += 1
        if step > max_steps:
            raise MaxStepsExceeded(
                f"no rare event within {max_steps} steps"
            )
        j, fl = _draw_outcome(kernel, state, rng.random())
        kappa = float(kernel._grid[state, j, fl].ppf_sample(rng.random()))
        acc += kappa
        kappas.append(kappa)
        state = j
        if fl == 1:
            nu = step
            break
    xi = acc
    last = kappas[-1]
    if t_grid is None:
        return FirstRareEventSample(nu=nu, xi=xi, last_sojourn=last)
    t_grid = tuple(float(t) for t in t_grid)
    if any(t < 0 for t in t_grid):
        raise ValueError("t_grid must be nonnegative")
    need = max((math.floor(t * nu) for t in t_grid), default=0)
    while len(kappas) < need:
        step += 1
        if step > max_steps:
            raise MaxStepsExceeded(
                f"path extension beyond {max_steps} steps"
            )
        j, fl = _draw_outcome(kernel, state, rng.random())
        kappas.append(float(kernel._grid[state, j, fl].ppf_sample(rng.random())))
        state = j
    cum = np.concatenate(([0.0], np.cumsum(kappas)))
    xi_grid = np.array([cum[math.floor(t * nu)] for t in t_grid])
    return FirstRareEventSample(nu=nu, xi=xi, last_sojourn=last,
                                t_grid=t_grid, xi_grid=xi_grid)


def deterministic_reward_to_rare_event(kernel: MarkovRenewalKernel, q, f,
                                       rng: np.random.Generator,
                                       max_steps: int = DEFAULT_MAX_STEPS
                                       ) -> float:
    """Accumulate f(state before each step) over the steps 1..nu."""
    f = np.asarray(f, dtype=float)
    if f.shape != (kernel.m,) or np.any(f < 0):
        raise ValueError("f must be m nonnegative per-state values")
    if kernel.rare_event_probs().probs.max() == 0.0:
        raise ValueError("rare event unreachable: every flag probability is 0")
    probs = _as_probs(q, kernel.m)
    qcum = np.cumsum(probs)
    state = min(int(np.searchsorted(qcum, rng.random(), side="right")),
                kernel.m - 1)
    total = 0.0
    for step in range(1, max_steps + 1):
        j, fl = _draw_outcome(kernel, state, rng.random())
        kernel._grid[state, j, fl].ppf_sample(rng.random())
        total += f[state]
        state = j
        if fl == 1:
            return total
    raise MaxStepsExceeded(f"no rare event within {max_steps} steps")


def reward_process_grid(path: PathSample, v: float, t_grid) -> np.ndarray:
    """Partial sojourn sums kappa(t) = sum of the first floor(t v) sojourns."""
    if v <= 0:
        raise ValueError("v must be positive")
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid < 0):
        raise ValueError("t_grid must be nonnegative")
    counts = np.array([math.floor(t * v) for t in t_grid], dtype=np.int64)
    if counts.max(initial=0) > path.n_steps:
        raise PathTooShort(
            f"path has {path.n_steps} steps, horizon needs "
            f"{int(counts.max())}"
        )
    cum = np.concatenate(([0.0], np.cumsum(path.sojourns)))
    return cum[counts]


def hitting_decomposition_check(path: PathSample, v: float, t_grid):
    """Check the regrouping of kappa(t) by the state each sojourn leaves.

    The sojourn following the n-th visit to state i is recovered through
    the hitting times of i, and the per-state partial sums (up to the
    occupation count at floor(t v)) are added state by state.  Returns
    (all grid points agree within 1e-9, maximum absolute discrepancy).
    """
    from .chain import hitting_times, occupation_counts

    direct = reward_process_grid(path, v, t_grid)
    t_grid = np.asarray(t_grid, dtype=float)
    counts = np.array([math.floor(t * v) for t in t_grid], dtype=np.int64)
    m = int(path.states.max())
    regrouped = np.zeros_like(direct)
    for i in range(1, m + 1):
        taus = hitting_times(path.states, i)
        taus = taus[taus + 1 <= path.n_steps]
        by_visit = path.sojourns[taus]          # kappa_{i,n} in visit order
        visit_cum = np.concatenate(([0.0], np.cumsum(by_visit)))
        mu = occupation_counts(path.states, i)
        regrouped += visit_cum[np.minimum(mu[counts], by_visit.size)]
    gaps = np.abs(regrouped - direct)
    worst = float(gaps.max(initial=0.0))
    return worst <= 1e-9, worst
