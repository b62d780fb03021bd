"""Limit laws: cumulants, subordinators, and the exponential time change.

A nonnegative infinitely divisible limit is represented by its cumulant
A(s) = g s + sum_k w_k (1 - e^{-s v_k}): a drift plus a finite list of
jump atoms (v_k, w_k).  The associated subordinator has
E e^{-s theta(t)} = e^{-t A(s)}; composing it with an independent unit
exponential time gives the first-rare-event limit, whose marginal at
t = 1 has transform 1 / (1 + A(s)).

Finite atom lists cover every shipped target exactly; infinite-activity
measures (stable laws) are handled by atom discretisation with an
explicit truncation error, which is an approximation and is flagged as
such wherever it is used.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Cumulant:
    """Drift g plus jump atoms ((v_1, w_1), ...) of the limiting measure."""

    g: float
    atoms: tuple = ()

    def __post_init__(self):
        if self.g < 0:
            raise ValueError("drift must be nonnegative")
        atoms = tuple((float(v), float(w)) for v, w in self.atoms)
        for v, w in atoms:
            if v <= 0 or w <= 0:
                raise ValueError("atoms need positive size and weight")
        mass = self.g + sum(w * v / (1.0 + v) for v, w in atoms)
        if mass <= 0:
            raise ValueError("degenerate limit: drift and jump mass are zero")
        object.__setattr__(self, "atoms", atoms)

    def to_json(self) -> dict:
        return {"g": self.g, "atoms": [list(a) for a in self.atoms]}

    @classmethod
    def from_json(cls, obj: dict) -> "Cumulant":
        return cls(float(obj["g"]),
                   tuple((float(v), float(w)) for v, w in obj.get("atoms", [])))

    @classmethod
    def stable_approximation(cls, alpha: float, scale: float = 1.0,
                             v_min: float = 1e-6, v_max: float = 1e6,
                             n_atoms: int = 400) -> "Cumulant":
        """Atom discretisation of the measure with tail scale * u^{-alpha}.

        Valid for alpha in (0, 1).  Cells are geometric; each carries the
        cell's exact mass at its log-midpoint.  Truncation drops
        s * scale * alpha * v_min^{1-alpha} / (1-alpha) below and
        scale * v_max^{-alpha} of mass above, so the approximated cumulant
        is accurate only to those terms.  This is a stated approximation,
        not an exact representation.
        """
        if not 0 < alpha < 1:
            raise ValueError("stable approximation needs alpha in (0, 1)")
        edges = np.geomspace(v_min, v_max, n_atoms + 1)
        mass = scale * (edges[:-1] ** -alpha - edges[1:] ** -alpha)
        mids = np.sqrt(edges[:-1] * edges[1:])
        atoms = tuple((float(v), float(w)) for v, w in zip(mids, mass)
                      if w > 0)
        return cls(0.0, atoms)


def cumulant_eval(c: Cumulant, s) -> np.ndarray | float:
    """A(s) = g s + sum_k w_k (1 - e^{-s v_k}); A(0) = 0 by construction."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0):
        raise ValueError("s must be nonnegative")
    out = c.g * s_arr
    for v, w in c.atoms:
        out = out + w * (-np.expm1(-s_arr * v))
    return float(out) if np.isscalar(s) else out


def limit_laplace_theta(c: Cumulant, t: float, s: float) -> float:
    """E e^{-s theta(t)} = e^{-t A(s)}."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return float(np.exp(-t * cumulant_eval(c, float(s))))


def limit_laplace_xi(c: Cumulant, s: float) -> float:
    """Transform of the time-changed limit at t = 1: 1 / (1 + A(s))."""
    return float(1.0 / (1.0 + cumulant_eval(c, float(s))))


def _jump_sums(c: Cumulant, rates, rng: np.random.Generator) -> np.ndarray:
    """Total jump size over intervals with the given Poisson intensities."""
    rates = np.asarray(rates, dtype=float)
    if not c.atoms:
        return np.zeros(rates.shape)
    sizes = np.array([v for v, _ in c.atoms])
    weights = np.array([w for _, w in c.atoms])
    total = weights.sum()
    counts = rng.poisson(total * rates)
    flat = counts.reshape(-1)
    picks = rng.multinomial(flat, weights / total)
    return (picks @ sizes).reshape(rates.shape)


def sample_subordinator_grid(c: Cumulant, t_grid, rng: np.random.Generator
                             ) -> np.ndarray:
    """One subordinator path on the grid: drift plus compound Poisson jumps."""
    return sample_subordinator_grid_batch(c, t_grid, rng, 1)[0]


def sample_subordinator_grid_batch(c: Cumulant, t_grid,
                                   rng: np.random.Generator,
                                   n: int) -> np.ndarray:
    """(n, len(t_grid)) array of independent subordinator paths."""
    t = np.asarray(t_grid, dtype=float)
    if np.any(t < 0) or np.any(np.diff(t) < 0):
        raise ValueError("t_grid must be nonnegative and nondecreasing")
    increments = np.diff(np.concatenate(([0.0], t)))
    jumps = _jump_sums(c, np.broadcast_to(increments, (n, t.size)), rng)
    return c.g * t[None, :] + np.cumsum(jumps, axis=1)


def sample_xi0(c: Cumulant, t_grid, rng: np.random.Generator):
    """One draw of (nu0, the time-changed path theta(t * nu0)).

    nu0 is a unit exponential drawn first (before any path randomness) and
    the subordinator is then sampled on the rescaled grid, preserving the
    independence of the time change from the path.
    """
    nu0, paths = sample_xi0_batch(c, t_grid, rng, 1)
    return float(nu0[0]), paths[0]


def sample_xi0_batch(c: Cumulant, t_grid, rng: np.random.Generator, n: int):
    """(nu0 (n,), xi0 values (n, len(t_grid))) for n independent draws."""
    t = np.asarray(t_grid, dtype=float)
    if np.any(t < 0) or np.any(np.diff(t) < 0):
        raise ValueError("t_grid must be nonnegative and nondecreasing")
    nu0 = rng.exponential(1.0, n)
    increments = np.diff(np.concatenate(([0.0], t)))
    scaled = nu0[:, None] * increments[None, :]
    jumps = _jump_sums(c, scaled, rng)
    values = c.g * nu0[:, None] * t[None, :] + np.cumsum(jumps, axis=1)
    return nu0, values
