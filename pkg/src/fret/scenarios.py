"""Built-in model families: worked limit-law examples and failure fixtures.

Each scenario fixes an epsilon-indexed kernel family, the limiting
cumulant it should converge to (where one exists), default grids, a
sample budget, and a master seed.  The healthy scenarios exercise pure
drift, pure jump, mixed drift+jump on two states, and a heavy-tailed
(stable-domain) case whose target cumulant is an atom discretisation and
therefore approximate.  The *known-fail* fixtures each violate exactly
the condition named in their label, so checker verdicts can be asserted
in tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chain import ProbabilityVector
from .conditions import EpsilonFamily
from .dist import Atom, Deterministic, Exponential, Pareto
from .levy import Cumulant
from .smp import MarkovRenewalKernel

DEFAULT_EPS_GRID = (1e-2, 1e-3, 1e-4)
DEFAULT_S_GRID = (0.5, 1.0, 2.0)
DEFAULT_T_GRID = (0.5, 1.0, 2.0)
DEFAULT_U_GRID = (0.5, 1.0, 2.0)
DEFAULT_SEED = 4242
DEFAULT_SAMPLES = 20_000


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    family: EpsilonFamily
    target: Cumulant = None
    s_grid: tuple = DEFAULT_S_GRID
    t_grid: tuple = DEFAULT_T_GRID
    u_grid: tuple = DEFAULT_U_GRID
    n_samples: int = DEFAULT_SAMPLES
    master_seed: int = DEFAULT_SEED
    expected_conditions: dict = field(default_factory=dict)
    notes: tuple = ()


def _drift_kernel(eps: float) -> MarkovRenewalKernel:
    return MarkovRenewalKernel.from_flag_probs(
        [[1.0]], [eps], sojourn_by_state=[Exponential(eps)]
    )


def _geometric_kernel(eps: float) -> MarkovRenewalKernel:
    return MarkovRenewalKernel.from_flag_probs(
        [[1.0]], [eps], sojourn_by_state=[Atom(1.0, eps)]
    )


_TWO_STATE_P = ((0.5, 0.5), (0.7, 0.3))
_TWO_STATE_PI = (7.0 / 12.0, 5.0 / 12.0)


def _two_state_kernel(eps: float) -> MarkovRenewalKernel:
    # stationary distribution (7/12, 5/12); averaged flag prob 17 eps / 12.
    # a = 12/7 and q = 12/5 put unit weight on the drift and the unit jump.
    if eps > 0.25:
        raise ValueError("two-state scenario requires eps <= 0.25")
    p_eps = (17.0 / 12.0) * eps
    return MarkovRenewalKernel.from_flag_probs(
        _TWO_STATE_P,
        [eps, 2.0 * eps],
        sojourn_by_state=[
            Exponential((12.0 / 7.0) * p_eps),
            Atom(1.0, (12.0 / 5.0) * p_eps),
        ],
    )


_PARETO_ALPHA = 0.5


def _pareto_kernel(eps: float) -> MarkovRenewalKernel:
    # sojourns shrink like v_eps^{-1/alpha} = eps^{1/alpha}; the scaled
    # tail v_eps * P{kappa > u} then converges to u^{-alpha}
    scale = eps ** (1.0 / _PARETO_ALPHA)
    return MarkovRenewalKernel.from_flag_probs(
        [[1.0]], [eps], sojourn_by_state=[Pareto(_PARETO_ALPHA, scale)]
    )


def _no_decay_kernel(eps: float) -> MarkovRenewalKernel:
    return MarkovRenewalKernel.from_flag_probs(
        [[1.0]], [0.3], sojourn_by_state=[Exponential(0.3)]
    )


def _vanishing_coupling_kernel(eps: float) -> MarkovRenewalKernel:
    P = [[1.0 - eps, eps], [eps, 1.0 - eps]]
    return MarkovRenewalKernel.from_flag_probs(
        P, [eps, eps],
        sojourn_by_state=[Exponential(eps), Exponential(eps)],
    )


def _fat_flag_kernel(eps: float) -> MarkovRenewalKernel:
    # the sojourn on the flagged step stays order one: the last summand
    # of the rare-event time never becomes negligible
    return MarkovRenewalKernel.from_flag_probs(
        [[1.0]], [eps],
        sojourn_by_state_flag=[(Exponential(eps), Deterministic(1.0))],
    )


def _unscaled_kernel(eps: float) -> MarkovRenewalKernel:
    # unit sojourns without eps-scaling: the scaled transform deficit
    # v_eps (1 - phi(s)) diverges
    return MarkovRenewalKernel.from_flag_probs(
        [[1.0]], [eps],
        sojourn_by_state_flag=[(Deterministic(1.0), Deterministic(0.0))],
    )


def builtin_scenarios() -> dict:
    """Registry of built-in scenarios keyed by name."""
    point = ProbabilityVector(np.array([1.0]))
    healthy = {c: "pass" for c in ("A", "B", "C", "D1", "D2", "G")}
    reg = {}
    reg["drift"] = ScenarioSpec(
        name="drift",
        family=EpsilonFamily(DEFAULT_EPS_GRID, _drift_kernel, "drift",
                             initial=point),
        target=Cumulant(1.0),
        expected_conditions=dict(healthy),
        notes=("xi is exactly unit exponential at every eps",),
    )
    reg["geometric"] = ScenarioSpec(
        name="geometric",
        family=EpsilonFamily(DEFAULT_EPS_GRID, _geometric_kernel, "geometric",
                             initial=point),
        target=Cumulant(0.0, ((1.0, 1.0),)),
        expected_conditions=dict(healthy),
        notes=("limit of xi(1) is geometric on {0, 1, ...} with mean 1",),
    )
    reg["two_state"] = ScenarioSpec(
        name="two_state",
        family=EpsilonFamily(DEFAULT_EPS_GRID, _two_state_kernel, "two_state"),
        target=Cumulant(1.0, ((1.0, 1.0),)),
        expected_conditions=dict(healthy),
        notes=("mixed drift + unit jump; stationary law (7/12, 5/12)",),
    )
    reg["pareto_stable"] = ScenarioSpec(
        name="pareto_stable",
        family=EpsilonFamily(DEFAULT_EPS_GRID, _pareto_kernel,
                             "pareto_stable", initial=point),
        target=Cumulant.stable_approximation(_PARETO_ALPHA),
        expected_conditions=dict(healthy),
        notes=(
            "target cumulant is an atom discretisation of the stable "
            "measure; comparisons against it carry its truncation error "
            "and use looser tolerances",
        ),
    )
    reg["no_decay_A"] = ScenarioSpec(
        name="no_decay_A",
        family=EpsilonFamily(DEFAULT_EPS_GRID, _no_decay_kernel, "no_decay_A",
                             initial=point),
        expected_conditions={"A": "fail"},
        notes=("flag probability stays at 0.3: no rare-event decay",),
    )
    reg["vanishing_coupling_B"] = ScenarioSpec(
        name="vanishing_coupling_B",
        family=EpsilonFamily(DEFAULT_EPS_GRID, _vanishing_coupling_kernel,
                             "vanishing_coupling_B"),
        expected_conditions={"B": "fail"},
        notes=("cross-state transition probabilities vanish with eps",),
    )
    reg["fat_flag_C"] = ScenarioSpec(
        name="fat_flag_C",
        family=EpsilonFamily(DEFAULT_EPS_GRID, _fat_flag_kernel, "fat_flag_C",
                             initial=point),
        expected_conditions={"A": "pass", "B": "pass", "C": "fail"},
        notes=("sojourn on the flagged step is a unit constant",),
    )
    reg["unscaled_D"] = ScenarioSpec(
        name="unscaled_D",
        family=EpsilonFamily(DEFAULT_EPS_GRID, _unscaled_kernel, "unscaled_D",
                             initial=point),
        expected_conditions={"A": "pass", "B": "pass", "C": "pass",
                             "D1": "fail"},
        notes=("unit sojourns without eps-scaling: scaled deficit diverges",),
    )
    return reg


def lookup(name: str) -> ScenarioSpec:
    reg = builtin_scenarios()
    if name not in reg:
        raise KeyError(
            f"unknown scenario {name!r}; available: {', '.join(sorted(reg))}"
        )
    return reg[name]


def floor_steps(t: float, v_eps: float) -> int:
    """floor(t * v_eps), the step horizon used throughout the verifiers."""
    return int(math.floor(t * v_eps))
