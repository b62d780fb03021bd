"""Sojourn-time distribution family.

Each distribution is an immutable value object supporting exact sampling,
the Laplace transform E e^{-sX}, the upper tail P{X > u}, and the
truncated first moment over (0, u].  These are the scalar ingredients of
the averaged tail / truncated-moment convergence statistics, so closed
forms are used wherever they exist; only the shifted Pareto transform
requires quadrature.

``ppf_sample(u)`` maps a single uniform to a draw (quantile transform,
with nested inversion for mixtures).  The lockstep simulation engine
relies on this one-uniform-per-draw property for counter-based replay.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import gammainc, gammaincc, gammaincinv

_TAIL_MASS = 1e-12  # quadrature tail truncation: remaining mass below this
_QUAD_ABS_TOL = 1e-10


class QuadratureFailure(Exception):
    """Raised when the Pareto transform cannot reach the target accuracy."""


class SojournDistribution:
    """Base class; subclasses are frozen dataclasses with closed-form ops."""

    kind: str = ""

    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    def ppf_sample(self, u):
        raise NotImplementedError

    def laplace(self, s: float) -> float:
        raise NotImplementedError

    def tail(self, u: float) -> float:
        """P{X > u} for the right-continuous distribution function."""
        raise NotImplementedError

    def truncated_mean(self, u: float) -> float:
        """Integral of v over (0, u] with respect to the law of X."""
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Deterministic(SojournDistribution):
    value: float
    kind = "det"

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("deterministic sojourn must be >= 0")

    def sample(self, rng, size=None):
        return self.value if size is None else np.full(size, self.value)

    def ppf_sample(self, u):
        return np.full(np.shape(u), self.value)

    def laplace(self, s):
        return float(np.exp(-s * self.value))

    def tail(self, u):
        return 1.0 if u < self.value else 0.0

    def truncated_mean(self, u):
        return self.value if 0.0 < self.value <= u else 0.0

    def mean(self):
        return self.value

    def to_json(self):
        return {"kind": "det", "v": self.value}


@dataclass(frozen=True)
class Exponential(SojournDistribution):
    mean_value: float
    kind = "exp"

    def __post_init__(self):
        if self.mean_value <= 0:
            raise ValueError("exponential mean must be > 0")

    def sample(self, rng, size=None):
        return rng.exponential(self.mean_value, size)

    def ppf_sample(self, u):
        return -self.mean_value * np.log1p(-np.asarray(u))

    def laplace(self, s):
        return 1.0 / (1.0 + self.mean_value * s)

    def tail(self, u):
        return float(np.exp(-u / self.mean_value))

    def truncated_mean(self, u):
        m = self.mean_value
        return m - float(np.exp(-u / m)) * (u + m)

    def mean(self):
        return self.mean_value

    def to_json(self):
        return {"kind": "exp", "mean": self.mean_value}


@dataclass(frozen=True)
class Atom(SojournDistribution):
    """Mass ``prob`` at ``value`` > 0 and mass 1 - prob at zero."""

    value: float
    prob: float
    kind = "atom"

    def __post_init__(self):
        if self.value <= 0:
            raise ValueError("atom location must be > 0")
        if not 0.0 <= self.prob <= 1.0:
            raise ValueError("atom probability must be in [0, 1]")

    def sample(self, rng, size=None):
        u = rng.random(size)
        return np.where(u < self.prob, self.value, 0.0) if size is not None \
            else (self.value if u < self.prob else 0.0)

    def ppf_sample(self, u):
        return np.where(np.asarray(u) < self.prob, self.value, 0.0)

    def laplace(self, s):
        return 1.0 - self.prob + self.prob * float(np.exp(-s * self.value))

    def tail(self, u):
        return self.prob if u < self.value else 0.0

    def truncated_mean(self, u):
        return self.prob * self.value if self.value <= u else 0.0

    def mean(self):
        return self.prob * self.value

    def to_json(self):
        return {"kind": "atom", "v": self.value, "q": self.prob}


@dataclass(frozen=True)
class Gamma(SojournDistribution):
    shape: float
    scale: float
    kind = "gamma"

    def __post_init__(self):
        if self.shape <= 0 or self.scale <= 0:
            raise ValueError("gamma shape and scale must be > 0")

    def sample(self, rng, size=None):
        return rng.gamma(self.shape, self.scale, size)

    def ppf_sample(self, u):
        return self.scale * gammaincinv(self.shape, np.asarray(u))

    def laplace(self, s):
        return float((1.0 + self.scale * s) ** (-self.shape))

    def tail(self, u):
        return float(gammaincc(self.shape, u / self.scale))

    def truncated_mean(self, u):
        # integral of v dF over (0, u] equals mean * P{Gamma(shape+1) <= u}
        return self.shape * self.scale * float(
            gammainc(self.shape + 1.0, u / self.scale)
        )

    def mean(self):
        return self.shape * self.scale

    def to_json(self):
        return {"kind": "gamma", "k": self.shape, "theta": self.scale}


@dataclass(frozen=True)
class Pareto(SojournDistribution):
    """Pareto with index ``alpha`` and scale ``xm``, shifted to [0, inf).

    Tail P{X > u} = (1 + u/xm)^{-alpha}.  The mean is xm/(alpha-1) for
    alpha > 1 and infinite otherwise.
    """

    alpha: float
    xm: float
    kind = "pareto"

    def __post_init__(self):
        if self.alpha <= 0 or self.xm <= 0:
            raise ValueError("pareto index and scale must be > 0")

    def sample(self, rng, size=None):
        # numpy's pareto() already samples the shifted (Lomax) form at xm=1
        return self.xm * rng.pareto(self.alpha, size)

    def ppf_sample(self, u):
        return self.xm * np.expm1(-np.log1p(-np.asarray(u)) / self.alpha)

    def laplace(self, s):
        if s == 0.0:
            return 1.0
        # Substituting y = log(1 + u/xm) turns the transform into
        # alpha * int_0^Y exp(-alpha*y - s*xm*(e^y - 1)) dy with a single
        # decay scale; Y truncates where the remaining mass is < 1e-12.
        a, c = self.alpha, self.xm
        y_max = -np.log(_TAIL_MASS) / a

        def integrand(y):
            return a * np.exp(-a * y - s * c * np.expm1(y))

        val, err = integrate.quad(
            integrand, 0.0, y_max, epsabs=_QUAD_ABS_TOL * 0.1,
            epsrel=1e-13, limit=400,
        )
        if err > _QUAD_ABS_TOL:
            # conservative estimate on one panel; split at the knee where
            # the exponential factor takes over from the power decay
            knee = np.log(max(a / (s * c), 2.0))
            knee = min(max(knee, y_max * 0.01), y_max * 0.99)
            v1, e1 = integrate.quad(integrand, 0.0, knee,
                                    epsabs=_QUAD_ABS_TOL * 0.05,
                                    epsrel=1e-13, limit=400)
            v2, e2 = integrate.quad(integrand, knee, y_max,
                                    epsabs=_QUAD_ABS_TOL * 0.05,
                                    epsrel=1e-13, limit=400)
            if e1 + e2 > _QUAD_ABS_TOL:
                raise QuadratureFailure(
                    f"pareto transform error estimate {max(err, e1 + e2):.2e}"
                    f" above target"
                )
            val = v1 + v2
        # the truncated tail contributes at most _TAIL_MASS, inside budget
        return float(min(val, 1.0))

    def tail(self, u):
        return float((1.0 + u / self.xm) ** (-self.alpha))

    def truncated_mean(self, u):
        a, c = self.alpha, self.xm
        y = u / c
        if a == 1.0:
            return c * (np.log1p(y) - y / (1.0 + y))
        first = (np.expm1((1.0 - a) * np.log1p(y))) / (1.0 - a)
        second = -(np.expm1(-a * np.log1p(y))) / a
        return float(c * a * (first - second))

    def mean(self):
        return self.xm / (self.alpha - 1.0) if self.alpha > 1 else np.inf

    def to_json(self):
        return {"kind": "pareto", "alpha": self.alpha, "xm": self.xm}


@dataclass(frozen=True)
class FiniteMixture(SojournDistribution):
    weights: tuple
    components: tuple
    kind = "mix"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.size != len(self.components) or w.size == 0:
            raise ValueError("weights and components must match and be nonempty")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must form a probability vector")
        object.__setattr__(self, "weights", tuple(float(x) for x in w))
        object.__setattr__(self, "components", tuple(self.components))

    def _cum(self):
        return np.cumsum(self.weights)

    def sample(self, rng, size=None):
        if size is None:
            k = rng.choice(len(self.components), p=self.weights)
            return self.components[k].sample(rng)
        ks = rng.choice(len(self.components), p=self.weights, size=size)
        out = np.empty(size, dtype=float)
        for k, comp in enumerate(self.components):
            mask = ks == k
            if mask.any():
                out[mask] = comp.sample(rng, int(mask.sum()))
        return out

    def ppf_sample(self, u):
        # nested inversion: the uniform picks the component, its remainder
        # (rescaled to [0,1)) drives the component's own quantile transform
        u = np.asarray(u, dtype=float)
        cum = self._cum()
        lo = np.concatenate(([0.0], cum[:-1]))
        ks = np.minimum(np.searchsorted(cum, u, side="right"),
                        len(self.components) - 1)
        out = np.empty(u.shape, dtype=float)
        for k, comp in enumerate(self.components):
            mask = ks == k
            if mask.any():
                w = self.weights[k]
                rescaled = (u[mask] - lo[k]) / w if w > 0 else u[mask]
                out[mask] = comp.ppf_sample(np.clip(rescaled, 0.0, 1.0 - 1e-16))
        return out

    def laplace(self, s):
        return float(sum(w * c.laplace(s)
                         for w, c in zip(self.weights, self.components)))

    def tail(self, u):
        return float(sum(w * c.tail(u)
                         for w, c in zip(self.weights, self.components)))

    def truncated_mean(self, u):
        return float(sum(w * c.truncated_mean(u)
                         for w, c in zip(self.weights, self.components)))

    def mean(self):
        return float(sum(w * c.mean()
                         for w, c in zip(self.weights, self.components)))

    def to_json(self):
        return {
            "kind": "mix",
            "weights": list(self.weights),
            "components": [c.to_json() for c in self.components],
        }


def from_json(obj: dict) -> SojournDistribution:
    """Rebuild a distribution from its JSON form (see each ``to_json``)."""
    kind = obj.get("kind")
    if kind == "det":
        return Deterministic(float(obj["v"]))
    if kind == "exp":
        return Exponential(float(obj["mean"]))
    if kind == "atom":
        return Atom(float(obj["v"]), float(obj["q"]))
    if kind == "gamma":
        return Gamma(float(obj["k"]), float(obj["theta"]))
    if kind == "pareto":
        return Pareto(float(obj["alpha"]), float(obj["xm"]))
    if kind == "mix":
        return FiniteMixture(
            tuple(float(w) for w in obj["weights"]),
            tuple(from_json(c) for c in obj["components"]),
        )
    raise ValueError(f"unknown distribution kind: {kind!r}")
