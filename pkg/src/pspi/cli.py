"""Command-line harness: ``pspi gen | solve | online | verify | compare``.

Exit codes: 0 success, 1 validation or usage error, 2 internal invariant breach.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import re
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import EnumerationCapError, InvalidModelError, InvariantError, PspiError
from .fixtures import NAMES as FIXTURE_NAMES
from .formats import (
    DocumentError,
    dumps_model,
    emit_trace,
    load_model,
    loads_model,
    report_to_dict,
    save_model,
)
from .generators import generate_communicating_mdp, generate_random_mdp
from .mdp import (
    MdpModel,
    brute_force_optimal,
    check_policy,
    decode_policy,
    encode_policy,
    enumeration_cap,
    is_communicating,
    lex_policy,
    num_policies,
    random_policy,
    validate_model,
)
from .offline import DELTA_STRATEGIES, SOLVERS, STATE_SELECTIONS, SolverConfig
from .online import ALGORITHMS, MODES, run_online
from .rollout import SELECTORS, RolloutConfig, truncation_horizon

EXIT_OK, EXIT_USAGE, EXIT_INVARIANT = 0, 1, 2


class UsageError(PspiError, ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _fmt(v: float) -> str:
    return format(float(v), ".12g")


def _vec(v) -> str:
    return " ".join(_fmt(x) for x in v)


def resolve_model(arg: str) -> MdpModel:
    """A path to a model document, or the name of a shipped fixture."""
    path = Path(arg)
    if path.exists():
        return load_model(path)
    if arg in FIXTURE_NAMES:
        text = resources.files("pspi").joinpath("data", f"{arg}.json").read_text(encoding="utf-8")
        return loads_model(text, arg)
    raise UsageError(f"model {arg!r} is neither a file nor a fixture ({', '.join(FIXTURE_NAMES)})")


def parse_pi0(arg: str, model: MdpModel):
    if arg == "lex":
        return lex_policy(model)
    m = re.fullmatch(r"random:(\d+)", arg)
    if m:
        return random_policy(model, np.random.default_rng(int(m.group(1))))
    path = Path(arg)
    text = path.read_text(encoding="utf-8").strip() if path.exists() else arg
    try:
        pol = json.loads(text) if text.startswith("[") else decode_policy(text)
    except ValueError as exc:
        raise UsageError(f"cannot parse initial policy {arg!r}") from exc
    try:
        return check_policy(model, pol)
    except ValueError as exc:
        raise UsageError(f"initial policy {arg!r}: {exc}") from exc


@dataclass
class ExperimentConfig:
    """Everything one CLI run needs, checked against the model before running."""

    model: MdpModel
    algorithm: str
    pi0: tuple
    seeds: list[int] = field(default_factory=lambda: [0])
    solver: SolverConfig | None = None
    rollout: RolloutConfig | None = None
    steps: int = 1
    x0: int = 0
    out: Path | None = None

    def validate(self):
        if self.steps < 1:
            raise UsageError("--steps must be >= 1")
        if not 0 <= self.x0 < self.model.num_states:
            raise UsageError(f"--x0 {self.x0} is not a state of a {self.model.num_states}-state model")
        if not self.seeds:
            raise UsageError("at least one seed is required")
        if self.out is not None and not self.out.parent.exists():
            raise UsageError(f"output directory {self.out.parent} does not exist")
        return self


def cmd_gen(args) -> int:
    gen = generate_communicating_mdp if args.communicating else generate_random_mdp
    try:
        model = gen(args.states, args.actions, args.branching or args.states,
                    (args.reward_low, args.reward_high), args.gamma, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.out:
        save_model(model, args.out)
    else:
        sys.stdout.write(dumps_model(model))
    return EXIT_OK


def cmd_solve(args) -> int:
    model = resolve_model(args.model)
    seq = tuple(int(s) for s in args.state_sequence.split(",")) if args.state_sequence else ()
    try:
        solver = SolverConfig(max_iterations=args.max_iterations, seed=args.seed,
                              delta_strategy=args.delta_strategy, state_selection=args.state_selection,
                              state_sequence=seq, delta_k=args.delta_k)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    cfg = ExperimentConfig(model, args.algo, parse_pi0(args.pi0, model), [args.seed], solver,
                           out=Path(args.out) if args.out else None).validate()
    trace = SOLVERS[cfg.algorithm](model, cfg.pi0, cfg.solver)
    if cfg.out:
        emit_trace(trace, cfg.out, args.format, run=cfg.algorithm, full_values=args.full_values,
                   num_states=model.num_states)
    print(f"algorithm: {cfg.algorithm}")
    print(f"iterations: {trace.improvements}")
    print(f"policy: {encode_policy(trace.final_policy)}")
    print(f"values: {_vec(trace.final_values)}")
    print(f"optimal: {str(trace.optimal).lower()}")
    return EXIT_OK


def _rollout_config(args, model: MdpModel) -> RolloutConfig:
    horizon = args.horizon
    if args.eps is not None:
        horizon = truncation_horizon(model.gamma, model.rmax, args.eps) if model.rmax > 0 else 1
    try:
        return RolloutConfig(horizon=horizon, replications=args.reps, seed=args.seed, crn=args.crn,
                             tie_tol=args.tie_tol, selector=args.selector,
                             racing_delta=args.racing_delta, racing_batch=args.racing_batch)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_online(args) -> int:
    model = resolve_model(args.model)
    rollout = _rollout_config(args, model)
    cfg = ExperimentConfig(model, args.algo, parse_pi0(args.pi0, model), [args.seed],
                           rollout=rollout, steps=args.steps, x0=args.x0,
                           out=Path(args.out) if args.out else None).validate()
    traj, report = run_online(model, cfg.pi0, cfg.x0, cfg.algorithm, cfg.steps, args.mode,
                              cfg.rollout, args.seed, args.settle_window)
    run_id = f"{cfg.algorithm}-{args.seed}"
    if cfg.out:
        emit_trace(traj, cfg.out, args.format, run=run_id,
                   full_values=args.full_values and args.mode == "exact", num_states=model.num_states)
    summary = report_to_dict(report, traj)
    if args.report:
        Path(args.report).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"run: {run_id}")
    print(f"changes: {traj.num_changes}")
    print(f"final policy: {summary['final_policy']}")
    print(f"k_prime: {summary['k_prime']}")
    print(f"settled: {str(summary['settled']).lower()}")
    print(f"chi: {' '.join(str(x) for x in summary['chi'])}")
    print(f"closed: {str(report.closed).lower()}")
    print(f"locally optimal: {str(report.locally_optimal).lower()}")
    print(f"globally optimal: {str(report.globally_optimal).lower()}")
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        model = resolve_model(args.model)
    except InvalidModelError as exc:
        print("valid: false")
        for v in exc.violations:
            print(f"violation: {v}")
        return EXIT_USAGE
    assert not validate_model(model)
    print("valid: true")
    print(f"states: {model.num_states}")
    print(f"policies: {num_policies(model)}")
    print(f"communicating: {str(is_communicating(model)).lower()}")
    try:
        pol, vstar = brute_force_optimal(model)
    except EnumerationCapError:
        print(f"optimal: skipped (more than {enumeration_cap()} policies)")
    else:
        print(f"optimal policy: {encode_policy(pol)}")
        print(f"optimal value: {_vec(vstar)}")
    return EXIT_OK


COMPARE_HEADER = ("seed", "algo", "steps", "changes", "k_prime", "settled", "closed",
                  "locally_optimal", "gap_to_vstar")


def cmd_compare(args) -> int:
    model = resolve_model(args.model)
    cfg = ExperimentConfig(model, "compare", parse_pi0(args.pi0, model), list(range(args.seeds)),
                           steps=args.steps, x0=args.x0,
                           out=Path(args.out) if args.out else None).validate()
    try:
        _, vstar = brute_force_optimal(model)
    except EnumerationCapError:
        vstar = None
    rows = []
    for seed in cfg.seeds:
        for algo in ALGORITHMS:
            traj, rep = run_online(model, cfg.pi0, cfg.x0, algo, cfg.steps, "exact", seed=seed)
            st = traj.stabilization
            gap = "" if vstar is None else format(float(np.max(np.abs(vstar - traj.steps[-1].values))), ".6e")
            rows.append([seed, algo, len(traj.steps), traj.num_changes,
                         "" if st.k_prime is None else st.k_prime, str(st.settled).lower(),
                         str(rep.closed).lower(), str(rep.locally_optimal).lower(), gap])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COMPARE_HEADER)
    w.writerows(rows)
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pspi", description="Policy iteration with policy switching on finite MDPs.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a random model document")
    g.add_argument("--states", type=int, required=True)
    g.add_argument("--actions", type=int, required=True)
    g.add_argument("--branching", type=int, default=None, help="successors per row (default: all states)")
    g.add_argument("--gamma", type=float, default=0.9)
    g.add_argument("--reward-low", type=float, default=0.0)
    g.add_argument("--reward-high", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--communicating", action="store_true")
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="run an off-line solver")
    s.add_argument("--model", required=True)
    s.add_argument("--algo", choices=sorted(SOLVERS), required=True)
    s.add_argument("--pi0", default="lex", help="lex | random:SEED | FILE | encoded policy")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--delta-strategy", choices=DELTA_STRATEGIES, default="parallel-pi")
    s.add_argument("--delta-k", type=int, default=3)
    s.add_argument("--state-selection", choices=STATE_SELECTIONS, default="random")
    s.add_argument("--state-sequence", default="", help="comma-separated states for given-sequence")
    s.add_argument("--max-iterations", type=int, default=10_000)
    s.add_argument("--out")
    s.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    s.add_argument("--full-values", action="store_true")
    s.set_defaults(func=cmd_solve)

    o = sub.add_parser("online", help="run an on-line algorithm along one trajectory")
    o.add_argument("--model", required=True)
    o.add_argument("--algo", choices=ALGORITHMS, required=True)
    o.add_argument("--mode", choices=MODES, default="exact")
    o.add_argument("--steps", type=int, default=100)
    o.add_argument("--x0", type=int, default=0)
    o.add_argument("--pi0", default="lex")
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--horizon", type=int, default=50)
    o.add_argument("--reps", type=int, default=32)
    o.add_argument("--crn", action=argparse.BooleanOptionalAction, default=True)
    o.add_argument("--selector", choices=SELECTORS, default="saa")
    o.add_argument("--eps", type=float, default=None, help="set the horizon from this tail bound")
    o.add_argument("--tie-tol", type=float, default=1e-6)
    o.add_argument("--racing-delta", type=float, default=0.05)
    o.add_argument("--racing-batch", type=int, default=8)
    o.add_argument("--settle-window", type=int, default=None)
    o.add_argument("--out")
    o.add_argument("--report", help="write the local-MDP report as JSON")
    o.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    o.add_argument("--full-values", action="store_true")
    o.set_defaults(func=cmd_online)

    v = sub.add_parser("verify", help="validate a model and print its optimum")
    v.add_argument("--model", required=True)
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("compare", help="run opi and pspi on shared environment seeds")
    c.add_argument("--model", required=True)
    c.add_argument("--steps", type=int, default=100)
    c.add_argument("--seeds", type=int, default=10)
    c.add_argument("--x0", type=int, default=0)
    c.add_argument("--pi0", default="lex")
    c.add_argument("--out")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except InvariantError as exc:
        print(f"invariant breach: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (UsageError, DocumentError, InvalidModelError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PspiError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
