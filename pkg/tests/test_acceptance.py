"""Acceptance suite: one test per criterion, at the stated tolerances.

Each test prints one ``ACCEPTANCE <n> PASS/FAIL`` line (visible with
``pytest -s`` or in captured output) including its runtime, and enforces
the stated runtime budget on this machine.  Monte Carlo criteria are
seed-pinned: the asserted tolerances hold for the recorded seeds and
reruns are bit-identical.
"""

import json
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from fret import analytic
from fret import verify as V
from fret.chain import StochasticMatrix, stationary_distribution
from fret.cli import main as cli_main
from fret.conditions import (averaged_rare_prob, check_condition_A,
                             check_condition_B, check_condition_C,
                             check_condition_D1, check_condition_D2,
                             EpsilonFamily)
from fret.engine import (first_rare_event_batch, fixed_horizon_batch,
                         simulate_paths)
from fret.levy import (Cumulant, cumulant_eval, limit_laplace_xi,
                       sample_subordinator_grid_batch, sample_xi0_batch)
from fret.rng import ReplicateStreams, scoped_generator
from fret.scenarios import builtin_scenarios
from fret.smp import PathSample, hitting_decomposition_check
from fret.verify import ks_statistic, trend_check

REG = builtin_scenarios()
SEED = 20_240_809


@contextmanager
def criterion(number: int, budget_s: float, label: str):
    t0 = time.monotonic()
    info = {}
    try:
        yield info
    except BaseException:
        print(f"ACCEPTANCE {number} FAIL ({time.monotonic() - t0:.1f}s): "
              f"{label}")
        raise
    dt = time.monotonic() - t0
    detail = f" [{info['detail']}]" if "detail" in info else ""
    print(f"ACCEPTANCE {number} PASS ({dt:.1f}s): {label}{detail}")
    assert dt < budget_s, f"runtime {dt:.1f}s exceeds budget {budget_s}s"


def _power_oracle(rows, iters=500_000, tol=1e-15):
    pi = np.full(rows.shape[0], 1.0 / rows.shape[0])
    lazy = 0.5 * (rows + np.eye(rows.shape[0]))
    for _ in range(iters):
        nxt = pi @ lazy
        nxt /= nxt.sum()
        if np.abs(nxt - pi).max() < tol:
            break
        pi = nxt
    return pi


def test_criterion_01_stationary_solver():
    with criterion(1, 1.0, "stationary solver: 100 random ergodic 5-state "
                           "matrices, residual < 1e-12, oracle gap < 1e-10"):
        rng = scoped_generator(SEED, "c1")
        worst_resid = worst_gap = 0.0
        for _ in range(100):
            rows = rng.gamma(1.0, 1.0, (5, 5)) + 1e-3
            rows /= rows.sum(axis=1, keepdims=True)
            pi = stationary_distribution(StochasticMatrix(rows)).probs
            worst_resid = max(worst_resid, np.abs(pi @ rows - pi).max())
            worst_gap = max(worst_gap,
                            np.abs(pi - _power_oracle(rows)).max())
        assert worst_resid < 1e-12
        assert worst_gap < 1e-10


def test_criterion_02_exact_theorem1_drift_collapse():
    with criterion(2, 1.0, "exact transform of xi collapses to 1/(1+s) on "
                           "drift, 1e-12"):
        fam = REG["drift"].family
        for eps in (1e-1, 1e-2, 1e-3):
            k = fam.builder(eps)
            for s in (0.5, 1.0, 2.0):
                got = analytic.exact_laplace_xi(k, [1.0], s)
                assert abs(got - 1.0 / (1.0 + s)) < 1e-12


def test_criterion_03_monte_carlo_theorem1_drift():
    with criterion(3, 60.0, "KS of 1e5 xi samples vs Exp(1) on drift at "
                            "eps=1e-3 below 0.006") as info:
        k = REG["drift"].family.kernel(1e-3)
        streams = ReplicateStreams(SEED, "c3", n=100_000)
        batch = first_rare_event_batch(k, [1.0], streams)
        ks = ks_statistic(batch.xi, lambda x: -np.expm1(-x))
        info["detail"] = f"KS={ks:.5f}"
        assert ks < 0.006


def test_criterion_04_theorem1_geometric():
    with criterion(4, 120.0, "geometric: exact within 0.02/0.002 of "
                             "1/(2-e^-s); empirical within 3 stderr "
                             "at n=1e5") as info:
        fam = REG["geometric"].family
        for eps, tol in ((1e-2, 0.02), (1e-3, 0.002)):
            k = fam.kernel(eps)
            for s in (0.5, 1.0, 2.0):
                exact = analytic.exact_laplace_xi(k, [1.0], s)
                assert abs(exact - 1.0 / (2.0 - math.exp(-s))) <= tol
        k = fam.kernel(1e-3)
        batch = first_rare_event_batch(
            k, [1.0], ReplicateStreams(SEED, "c4", n=100_000))
        gaps = []
        for s in (0.5, 1.0, 2.0):
            est = V.empirical_laplace(batch.xi, s)
            exact = analytic.exact_laplace_xi(k, [1.0], s)
            gaps.append(abs(est.value - exact) / est.stderr)
            assert abs(est.value - exact) <= 3.0 * est.stderr
        info["detail"] = "max |emp-exact|/stderr = " + \
            f"{max(gaps):.2f}"


def test_criterion_05_lemma7_exact_survival_and_trend():
    with criterion(5, 60.0, "survival of nu at floor(t v) within 0.01 of "
                            "e^-t at eps=1e-3; exact-route trend improving"):
        for name in ("drift", "two_state"):
            fam = REG[name].family
            devs = []
            for eps in (1e-2, 1e-3, 1e-4):
                k = fam.kernel(eps)
                q = fam.q(eps)
                _, v_eps = averaged_rare_prob(k)
                dev = max(
                    abs(analytic.survival_nu_exact(
                        k, q, math.floor(t * v_eps)) - math.exp(-t))
                    for t in (0.5, 1.0, 2.0)
                )
                devs.append(dev)
                if eps == 1e-3:
                    assert dev < 0.01, (name, dev)
            assert trend_check(devs, [1e-14] * 3) == "improving", name


def test_criterion_06_theorem2_geometric():
    with criterion(6, 120.0, "partial-sum transform within 0.01 of "
                             "e^-(1-1/e) at eps=1e-3; empirical within "
                             "3 stderr at n=1e5") as info:
        eps = 1e-3
        fam = REG["geometric"].family
        k = fam.kernel(eps)
        _, v_eps = averaged_rare_prob(k)
        n = math.floor(v_eps)
        exact = analytic.exact_laplace_kappa(k, [1.0], 1.0, n)
        assert abs(exact - math.exp(-(1.0 - math.exp(-1.0)))) <= 0.01
        sums, _, _ = fixed_horizon_batch(
            k, [1.0], ReplicateStreams(SEED, "c6", n=100_000), n, [n])
        est = V.empirical_laplace(sums[:, 0], 1.0)
        info["detail"] = f"|emp-exact|/stderr = " \
            f"{abs(est.value - exact) / est.stderr:.2f}"
        assert abs(est.value - exact) <= 3.0 * est.stderr


def test_criterion_07_lemma9_product_form():
    with criterion(7, 60.0, "joint survival-transform within 0.01 of "
                            "e^-t(1+A(s)) on drift; s->0 row matches the "
                            "survival row to 1e-9"):
        eps = 1e-3
        k = REG["drift"].family.kernel(eps)
        _, v_eps = averaged_rare_prob(k)
        n = math.floor(1.0 * v_eps)
        joint = analytic.joint_survival_transform(k, [1.0], 1.0, n)
        assert abs(joint - math.exp(-2.0)) <= 0.01
        for t in (0.5, 1.0, 2.0):
            n_t = math.floor(t * v_eps)
            s0 = analytic.joint_survival_transform(k, [1.0], 0.0, n_t)
            sv = analytic.survival_nu_exact(k, [1.0], n_t)
            assert abs(s0 - sv) < 1e-9


def test_criterion_08_hitting_decomposition():
    with criterion(8, 60.0, "path-identity regrouping exact to 1e-9 on "
                            "1e4 two_state paths of 1e4 steps") as info:
        eps = 1e-2
        fam = REG["two_state"].family
        k = fam.kernel(eps)
        q = fam.q(eps)
        _, v_eps = averaged_rare_prob(k)
        t_grid = (0.5, 1.0, 10.0, 100.0)
        n_paths, n_steps, batch_size = 10_000, 10_000, 2_000
        worst = 0.0
        for start in range(0, n_paths, batch_size):
            streams = ReplicateStreams(SEED, "c8", n=batch_size,
                                       offset=start)
            _, _, rec = fixed_horizon_batch(k, q, streams, n_steps,
                                            record=True)
            states, soj, flags = rec
            for r in range(batch_size):
                path = PathSample.from_steps(states[r], soj[r], flags[r])
                ok, gap = hitting_decomposition_check(path, v_eps, t_grid)
                worst = max(worst, gap)
                assert ok, gap
        info["detail"] = f"worst gap {worst:.2e}"


def test_criterion_09_lemma8_normalised_functional():
    with criterion(9, 60.0, "additive functional with f = flag probs: KS "
                            "vs Exp(1) below 0.01 at eps=1e-3, n=1e5") as i:
        eps = 1e-3
        fam = REG["drift"].family
        k = fam.kernel(eps)
        f = k.rare_event_probs().probs
        batch = first_rare_event_batch(
            k, fam.q(eps), ReplicateStreams(SEED, "c9", n=100_000), reward=f)
        # f equals the flag probabilities, so the normalisation is exactly 1
        ks = ks_statistic(batch.reward_total, lambda x: -np.expm1(-x))
        i["detail"] = f"KS={ks:.5f}"
        assert ks < 0.01


def test_criterion_10_limit_law_samplers():
    with criterion(10, 60.0, "subordinator and time-changed samplers match "
                             "their transforms within 3 stderr at 1e5 "
                             "draws; geometric marginal atoms match"):
        n = 100_000
        for label, cum in (("unit-drift", Cumulant(1.0)),
                           ("unit-jump", Cumulant(0.0, ((1.0, 1.0),)))):
            rng = scoped_generator(SEED, "c10", label)
            theta = sample_subordinator_grid_batch(cum, (1.0,), rng, n)[:, 0]
            nu0, xi_paths = sample_xi0_batch(
                cum, (1.0,), scoped_generator(SEED, "c10xi", label), n)
            xi = xi_paths[:, 0]
            for s in (0.5, 1.0, 2.0):
                y = np.exp(-s * theta)
                se = y.std(ddof=1) / math.sqrt(n)
                # pure drift gives a deterministic path: floor the band
                # at machine precision so round-off cannot fail it
                assert abs(y.mean() - math.exp(-cumulant_eval(cum, s))) \
                    <= 3 * se + 1e-12
                z = np.exp(-s * xi)
                se = z.std(ddof=1) / math.sqrt(n)
                assert abs(z.mean() - limit_laplace_xi(cum, s)) \
                    <= 3 * se + 1e-12
            if label == "unit-jump":
                for kk in range(6):
                    emp = (xi == kk).mean()
                    p = 2.0 ** -(kk + 1)
                    se = math.sqrt(p * (1 - p) / n)
                    assert abs(emp - p) <= 3 * se


def test_criterion_11_condition_checker_fixtures():
    with criterion(11, 60.0, "healthy scenarios pass A,B,C,D1,D2; each "
                             "fixture fails its condition with the "
                             "registered exit status"):
        for name in ("drift", "geometric", "two_state"):
            spec = REG[name]
            fam = spec.family
            assert check_condition_A(fam).verdict == "pass", name
            assert check_condition_B(fam).verdict == "pass", name
            assert check_condition_C(fam).verdict == "pass", name
            assert check_condition_D1(fam, spec.s_grid).verdict == "pass"
            assert check_condition_D2(fam, spec.u_grid).verdict == "pass"
            code = cli_main(["check", name, "--conditions", "A,B,C,D1,D2"])
            assert code == 0, name
        for name, cond in (("no_decay_A", "A"),
                           ("vanishing_coupling_B", "B"),
                           ("fat_flag_C", "C"),
                           ("unscaled_D", "D1")):
            assert REG[name].expected_conditions[cond] == "fail"
            code = cli_main(["check", name, "--conditions", cond])
            assert code == 1, name


def test_criterion_12_determinism_across_workers(tmp_path, monkeypatch,
                                                 capsys):
    """Every artifact pipeline used above, rerun with the same seed under
    a different worker count, must produce byte-identical files."""
    with criterion(12, 300.0, "byte-identical artifacts across worker "
                              "counts"):
        commands = [
            ["verify", "lemma7", "drift", "--eps-grid", "1e-2,1e-3",
             "-n", "1500", "--seed", "971"],
            ["verify", "theorem1", "geometric", "--eps-grid", "1e-2,1e-3",
             "-n", "1500", "--seed", "971", "--t", "0.5,1.0"],
            ["verify", "theorem2", "geometric", "--eps-grid", "1e-2,1e-3",
             "-n", "1500", "--seed", "971", "--t", "0.5,1.0"],
            ["verify", "lemma8", "drift", "--eps-grid", "1e-2,1e-3",
             "-n", "1500", "--seed", "971"],
            # lemma9's D1 precondition needs at least two grid gaps to
            # stabilise, so this one runs on the scenario's full grid
            ["verify", "lemma9", "drift", "-n", "800", "--seed", "971",
             "--t", "0.5,1.0"],
            ["simulate", "two_state", "--eps", "1e-2", "-n", "1500",
             "--seed", "971", "--t", "0.5,1.0"],
            ["check", "two_state", "--conditions", "A,B,C,D1,D2"],
        ]
        for idx, cmd in enumerate(commands):
            outputs = []
            for workers in ("1", "4"):
                monkeypatch.setenv("FRET_THREADS", workers)
                out = tmp_path / f"{idx}_{workers}.out"
                code = cli_main(cmd + ["--out", str(out)])
                capsys.readouterr()
                assert code == 0, cmd
                outputs.append(out.read_bytes())
            assert outputs[0] == outputs[1], cmd
        # raw engine criteria rerun bit-identically with the same seed
        k = REG["drift"].family.kernel(1e-3)
        a = first_rare_event_batch(
            k, [1.0], ReplicateStreams(SEED, "c12", n=5_000))
        b = first_rare_event_batch(
            k, [1.0], ReplicateStreams(SEED, "c12", n=5_000))
        assert np.array_equal(a.xi, b.xi) and np.array_equal(a.nu, b.nu)
