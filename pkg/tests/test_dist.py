"""Sojourn distributions: transforms, tails, truncated moments, sampling."""

import numpy as np
import pytest
from scipy import integrate

from fret import dist
from fret.rng import scoped_generator

ALL_KINDS = [
    dist.Deterministic(2.5),
    dist.Exponential(1.0),
    dist.Atom(1.0, 0.3),
    dist.Gamma(2.0, 0.5),
    dist.Pareto(1.5, 1.0),
    dist.FiniteMixture((0.25, 0.75), (dist.Deterministic(1.0),
                                      dist.Exponential(2.0))),
]


def test_deterministic_sampling_and_laplace():
    d = dist.Deterministic(2.5)
    rng = scoped_generator(1, "det")
    assert d.sample(rng) == 2.5
    assert np.all(d.sample(rng, 10) == 2.5)
    assert d.laplace(0.0) == 1.0


def test_atom_degenerate_probability_zero():
    d = dist.Atom(1.0, 0.0)
    rng = scoped_generator(1, "atom0")
    assert np.all(d.sample(rng, 100) == 0.0)
    assert d.ppf_sample(np.array([0.1, 0.9])).tolist() == [0.0, 0.0]


def test_exponential_sample_mean_lln():
    rng = scoped_generator(1, "expmean")
    x = dist.Exponential(1.0).sample(rng, 1_000_000)
    assert abs(x.mean() - 1.0) < 0.01


def test_exponential_laplace_closed_form():
    d = dist.Exponential(1.0)
    assert d.laplace(1.0) == pytest.approx(0.5, abs=1e-15)
    assert dist.Exponential(2.0).laplace(3.0) == pytest.approx(1 / 7, abs=1e-15)


def test_atom_laplace_closed_form():
    eps = 0.01
    d = dist.Atom(1.0, eps)
    s = 1.3
    assert d.laplace(s) == pytest.approx(1 - eps + eps * np.exp(-s), abs=1e-15)


def test_pareto_laplace_against_monte_carlo():
    d = dist.Pareto(1.5, 1.0)
    rng = scoped_generator(2, "paretomc")
    x = d.sample(rng, 10_000_000)
    y = np.exp(-x)
    mc = y.mean()
    stderr = y.std(ddof=1) / np.sqrt(y.size)
    assert abs(d.laplace(1.0) - mc) < 3 * stderr


def test_pareto_laplace_small_scale_against_gamma_identity():
    # independent closed form through the upper incomplete gamma function
    from scipy.special import gammaincc, gamma as gamma_fn

    alpha, xm, s = 0.5, 1e-8, 2.0
    z = s * xm
    closed = 1.0 - np.exp(z) * z ** alpha * gamma_fn(1 - alpha) * \
        gammaincc(1 - alpha, z)
    got = dist.Pareto(alpha, xm).laplace(s)
    assert abs(got - closed) < 1e-9


def test_tail_and_truncated_mean_examples():
    assert dist.Deterministic(2.0).tail(1.0) == 1.0
    assert dist.Deterministic(2.0).truncated_mean(1.0) == 0.0
    a = dist.Atom(1.0, 0.3)
    assert a.tail(2.0) == 0.0
    assert a.truncated_mean(2.0) == pytest.approx(0.3)
    e = dist.Exponential(1.0)
    assert e.tail(1.0) == pytest.approx(np.exp(-1.0), abs=1e-15)
    # by-hand integral of v e^{-v} over (0, 1] plus a quadrature oracle
    assert e.truncated_mean(1.0) == pytest.approx(1 - 2 * np.exp(-1.0),
                                                  abs=1e-14)
    oracle, _ = integrate.quad(lambda v: v * np.exp(-v), 0.0, 1.0)
    assert e.truncated_mean(1.0) == pytest.approx(oracle, abs=1e-12)


@pytest.mark.parametrize("d", ALL_KINDS, ids=lambda d: d.kind)
def test_truncated_mean_matches_quadrature(d):
    if d.kind == "det":
        return
    u = 1.7

    def stieltjes(grid_tail):
        # integral of v dF over (0, u] by integrating the tail by parts:
        # int v dF = -[v tail(v)] + int tail(v) dv on (0, u]
        val, _ = integrate.quad(lambda v: d.tail(v), 0.0, u, limit=300,
                                points=[1.0])
        return val - u * d.tail(u)

    assert d.truncated_mean(u) == pytest.approx(stieltjes(None), abs=1e-9)


@pytest.mark.parametrize("d", ALL_KINDS, ids=lambda d: d.kind)
def test_laplace_basics_and_monotonicity(d):
    assert d.laplace(0.0) == pytest.approx(1.0, abs=1e-12)
    vals = [d.laplace(s) for s in (0.5, 1.0, 2.0, 4.0)]
    assert all(0 < v <= 1 for v in vals)
    assert all(b < a for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("d", ALL_KINDS, ids=lambda d: d.kind)
def test_laplace_derivative_at_zero_is_mean(d):
    if not np.isfinite(d.mean()):
        return
    if d.kind == "pareto":
        # infinite second moment: the difference quotient converges only
        # like h^(alpha-1), so the tight tolerance is out of reach
        h = 1e-6
        deriv = (d.laplace(0.0) - d.laplace(h)) / h
        assert abs(deriv - d.mean()) < 20.0 * h ** (d.alpha - 1.0)
        return
    # second-order one-sided difference; remaining bias is O(h^2 E X^3)
    h = 1e-4
    deriv = (-3 * d.laplace(0.0) + 4 * d.laplace(h) - d.laplace(2 * h)) / \
        (-2 * h)
    assert abs(deriv - d.mean()) < 1e-6 * (1 + d.mean())


@pytest.mark.parametrize("d", ALL_KINDS, ids=lambda d: d.kind)
def test_tail_monotone_truncated_mean_monotone(d):
    us = (0.25, 0.5, 1.0, 2.0, 5.0)
    tails = [d.tail(u) for u in us]
    tms = [d.truncated_mean(u) for u in us]
    assert all(b <= a + 1e-15 for a, b in zip(tails, tails[1:]))
    assert all(b >= a - 1e-15 for a, b in zip(tms, tms[1:]))
    if np.isfinite(d.mean()):
        assert d.truncated_mean(1e9) <= d.mean() + 1e-9


@pytest.mark.parametrize("d", ALL_KINDS, ids=lambda d: d.kind)
def test_ppf_sample_matches_law(d):
    rng = scoped_generator(3, "ppf", d.kind)
    u = rng.random(200_000)
    x = d.ppf_sample(u)
    if np.isfinite(d.mean()):
        se = np.std(x) / np.sqrt(x.size) + 1e-9
        assert abs(x.mean() - d.mean()) < 5 * se + 1e-12
    # tail at a few points
    for uu in (0.5, 1.5):
        emp = (x > uu).mean()
        assert abs(emp - d.tail(uu)) < 5 * np.sqrt(0.25 / x.size) + 1e-12


@pytest.mark.parametrize("d", ALL_KINDS, ids=lambda d: d.kind)
def test_json_round_trip(d):
    assert dist.from_json(d.to_json()) == d


def test_from_json_rejects_unknown_kind():
    with pytest.raises(ValueError):
        dist.from_json({"kind": "cauchy"})


def test_parameter_validation():
    with pytest.raises(ValueError):
        dist.Exponential(0.0)
    with pytest.raises(ValueError):
        dist.Atom(1.0, 1.5)
    with pytest.raises(ValueError):
        dist.Pareto(-1.0, 1.0)
    with pytest.raises(ValueError):
        dist.FiniteMixture((0.5, 0.6), (dist.Deterministic(1.0),
                                        dist.Deterministic(2.0)))
