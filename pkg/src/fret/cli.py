"""Command-line front end.

Subcommands: ``stationary`` (solve pi = pi P from a matrix file),
``check`` (run condition checkers on a scenario or model file),
``simulate`` (dump first-rare-event samples as CSV), ``verify`` (run a
limit-theorem verifier and emit JSON/CSV reports), and ``scenario list``.

Every artifact is reproducible byte-for-byte from the command line and
the seed: no wall-clock seeding, canonical JSON, fixed row order.  The
environment variable FRET_THREADS caps the worker count; it affects
speed only, never results.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import verify as verify_mod
from .chain import NotErgodic, StochasticMatrix, stationary_distribution
from .conditions import (EpsilonFamily, check_condition_A, check_condition_B,
                         check_condition_C, check_condition_D1,
                         check_condition_D2, check_condition_G)
from .engine import first_rare_event_batch
from .rng import ReplicateStreams
from .scenarios import ScenarioSpec, builtin_scenarios
from .smp import MarkovRenewalKernel
from .verify import PreconditionFailed

_CONDITION_CHECKS = ("A", "B", "C", "D1", "D2", "G")
_VERIFIERS = {
    "theorem1": verify_mod.verify_theorem1,
    "theorem2": verify_mod.verify_theorem2,
    "lemma7": verify_mod.verify_lemma7,
    "lemma8": verify_mod.verify_lemma8,
    "lemma9": verify_mod.verify_lemma9,
}


def _parse_floats(text: str) -> tuple:
    try:
        vals = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise SystemExit(f"error: malformed float list {text!r}: {exc}")
    if not vals:
        raise SystemExit(f"error: empty float list {text!r}")
    return vals


def _load_matrix(path: str) -> StochasticMatrix:
    p = Path(path)
    if not p.exists():
        raise SystemExit(f"error: no such file: {path}")
    try:
        if p.suffix == ".csv":
            rows = np.loadtxt(p, delimiter=",", ndmin=2)
            return StochasticMatrix(rows)
        obj = json.loads(p.read_text())
        return StochasticMatrix.from_json(obj)
    except (ValueError, KeyError) as exc:
        raise SystemExit(
            f"error: malformed matrix file (expected JSON with fields "
            f'"m", "rows" or plain CSV rows): {exc}'
        )


def _resolve_scenario(name_or_path: str) -> ScenarioSpec:
    reg = builtin_scenarios()
    if name_or_path in reg:
        return reg[name_or_path]
    p = Path(name_or_path)
    if p.exists():
        try:
            kernel = MarkovRenewalKernel.from_json(json.loads(p.read_text()))
        except (ValueError, KeyError) as exc:
            raise SystemExit(
                f"error: malformed model file (expected JSON with fields "
                f'"m", "joint_probs", "sojourn"): {exc}'
            )
        family = EpsilonFamily((1.0,), lambda eps: kernel, p.stem)
        return ScenarioSpec(name=p.stem, family=family)
    raise SystemExit(
        f"error: unknown scenario {name_or_path!r}; available: "
        f"{', '.join(sorted(reg))}"
    )


def _with_eps_grid(spec: ScenarioSpec, eps_grid) -> ScenarioSpec:
    if eps_grid is None:
        return spec
    family = EpsilonFamily(eps_grid, spec.family.builder, spec.family.label,
                           initial=spec.family.initial)
    return ScenarioSpec(
        name=spec.name, family=family, target=spec.target,
        s_grid=spec.s_grid, t_grid=spec.t_grid, u_grid=spec.u_grid,
        n_samples=spec.n_samples, master_seed=spec.master_seed,
        expected_conditions=spec.expected_conditions, notes=spec.notes,
    )


def _cmd_stationary(args) -> int:
    P = _load_matrix(args.matrix)
    try:
        pi = stationary_distribution(P)
    except NotErgodic as exc:
        print(f"error: not ergodic: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(pi.to_json(), sort_keys=True))
    return 0


def _cmd_check(args) -> int:
    spec = _with_eps_grid(_resolve_scenario(args.scenario), args.eps_grid)
    requested = tuple(args.conditions.split(",")) if args.conditions \
        else _CONDITION_CHECKS
    for c in requested:
        if c not in _CONDITION_CHECKS:
            raise SystemExit(
                f"error: unknown condition {c!r}; choose from "
                f"{','.join(_CONDITION_CHECKS)}"
            )
    fam = spec.family
    reports = {}
    for c in requested:
        if c == "A":
            reports[c] = check_condition_A(fam)
        elif c == "B":
            reports[c] = check_condition_B(fam)
        elif c == "C":
            reports[c] = check_condition_C(fam)
        elif c == "D1":
            reports[c] = check_condition_D1(fam, spec.s_grid,
                                            target=spec.target)
        elif c == "D2":
            reports[c] = check_condition_D2(fam, spec.u_grid)
        elif c == "G":
            reports[c] = check_condition_G(
                fam, lambda k: k.rare_event_probs().probs)
    all_pass = True
    for c in requested:
        rep = reports[c]
        print(f"{spec.name}: condition {c}: {rep.verdict}")
        if not rep.passed:
            all_pass = False
    if args.out:
        payload = {
            "scenario": spec.name,
            "conditions": {c: reports[c].to_json() for c in requested},
        }
        Path(args.out).write_text(
            json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return 0 if all_pass else 1


def _cmd_simulate(args) -> int:
    spec = _resolve_scenario(args.scenario)
    eps = float(args.eps)
    kernel = spec.family.builder(eps)
    q = spec.family.initial.probs if spec.family.initial is not None \
        else np.full(kernel.m, 1.0 / kernel.m)
    seed = spec.master_seed if args.seed is None else args.seed
    t_grid = _parse_floats(args.t) if args.t else None
    streams = ReplicateStreams(seed, spec.name, "simulate", repr(eps),
                               n=args.n)
    batch = first_rare_event_batch(kernel, q, streams, t_grid=t_grid)
    cols = ["replicate", "nu", "xi", "last_sojourn"]
    if t_grid is not None:
        cols += [f"xi_t_{t!r}" for t in t_grid]
    lines = [",".join(cols)]
    for r in range(batch.n):
        row = [str(r), str(int(batch.nu[r])), repr(float(batch.xi[r])),
               repr(float(batch.last_sojourn[r]))]
        if t_grid is not None:
            row += [repr(float(x)) for x in batch.xi_grid[r]]
        lines.append(",".join(row))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_verify(args) -> int:
    spec = _with_eps_grid(_resolve_scenario(args.scenario), args.eps_grid)
    fam = spec.family
    seed = spec.master_seed if args.seed is None else args.seed
    n = spec.n_samples if args.n is None else args.n
    s_grid = _parse_floats(args.s) if args.s else spec.s_grid
    t_grid = _parse_floats(args.t) if args.t else spec.t_grid
    fn = _VERIFIERS[args.theorem]
    kwargs = {"n_samples": n, "seed": seed, "force": args.force}
    try:
        if args.theorem == "lemma7":
            report = fn(fam, t_grid=t_grid, **kwargs)
        elif args.theorem == "lemma8":
            report = fn(fam, **kwargs)
        else:
            if spec.target is None:
                raise SystemExit(
                    f"error: scenario {spec.name!r} declares no target "
                    f"cumulant; {args.theorem} needs one"
                )
            report = fn(fam, spec.target, s_grid=s_grid, t_grid=t_grid,
                        **kwargs)
    except PreconditionFailed as exc:
        print(f"error: {exc} (use --force to run anyway)", file=sys.stderr)
        return 3
    if args.out:
        Path(args.out).write_text(report.to_json_str())
    else:
        sys.stdout.write(report.to_json_str())
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    print(f"{args.theorem} on {spec.name}: trend {report.trend}",
          file=sys.stderr)
    return 0 if report.exit_ok() else 1


def _cmd_scenario(args) -> int:
    if args.action == "list":
        reg = builtin_scenarios()
        for name in sorted(reg):
            spec = reg[name]
            target = "approximate target" if any(
                "approx" in n for n in spec.notes) else (
                "exact target" if spec.target is not None else "no target")
            expect = ",".join(
                f"{c}={v}" for c, v in sorted(spec.expected_conditions.items())
            )
            print(f"{name}: m={spec.family.kernel(spec.family.eps_grid[0]).m},"
                  f" {target}; expected: {expect}")
            for note in spec.notes:
                print(f"    {note}")
        return 0
    raise SystemExit(f"error: unknown scenario action {args.action!r}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="fret",
        description="first-rare-event times for perturbed semi-Markov "
                    "models: exact transforms, condition checkers, and "
                    "Monte Carlo verification of the limit laws",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stationary", help="solve pi = pi P for a matrix file")
    p.add_argument("matrix", help="JSON {m, rows} or CSV matrix file")
    p.set_defaults(fn=_cmd_stationary)

    p = sub.add_parser("check", help="run condition checkers")
    p.add_argument("scenario", help="builtin scenario name or model JSON file")
    p.add_argument("--conditions", default=None,
                   help="comma list from A,B,C,D1,D2,G (default: all)")
    p.add_argument("--eps-grid", type=_parse_floats, default=None)
    p.add_argument("--out", default=None, help="write JSON report here")
    p.set_defaults(fn=_cmd_check)

    p = sub.add_parser("simulate", help="dump first-rare-event samples")
    p.add_argument("scenario")
    p.add_argument("--eps", required=True, type=float)
    p.add_argument("-n", type=int, required=True, help="replicate count")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--t", default=None,
                   help="comma list of t values for xi(t) columns")
    p.add_argument("--out", default=None, help="CSV output path")
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("verify", help="run a limit-theorem verifier")
    p.add_argument("theorem", choices=sorted(_VERIFIERS))
    p.add_argument("scenario")
    p.add_argument("--eps-grid", type=_parse_floats, default=None)
    p.add_argument("--s", default=None, help="comma list of s values")
    p.add_argument("--t", default=None, help="comma list of t values")
    p.add_argument("-n", type=int, default=None, help="replicate count")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="JSON report path")
    p.add_argument("--csv", default=None, help="flat CSV path for plotting")
    p.add_argument("--force", action="store_true",
                   help="run even when precondition checkers fail "
                        "(report is watermarked)")
    p.set_defaults(fn=_cmd_verify)

    p = sub.add_parser("scenario", help="scenario registry operations")
    p.add_argument("action", choices=["list"])
    p.set_defaults(fn=_cmd_scenario)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
