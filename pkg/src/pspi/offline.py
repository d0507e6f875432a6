"""Off-line policy iteration: Howard, Simplex, Newton and policy-switching variants.

Every solver evaluates each policy exactly, stops when the improvable-state
set is empty, and returns an :class:`IterationTrace` starting at ``pi0``.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InvariantError, IterationLimitError, MonotonicityError
from .mdp import (
    EPS_IMPROVE,
    AnalysisReport,
    MdpModel,
    Policy,
    analyze,
    check_model,
    check_policy,
    encode_policy,
    evaluate_exact,
)
from .switching import PolicySet, in_better_set, local_neighborhood, policy_switch

STATE_SELECTIONS = ("random", "round-robin", "given-sequence")
DELTA_STRATEGIES = ("howard-greedy", "parallel-pi", "random-k")
MONOTONE_TOL = 1e-9


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 10_000
    seed: int = 0
    delta_strategy: str = "parallel-pi"
    state_selection: str = "random"
    state_sequence: tuple[int, ...] = ()
    delta_k: int = 3
    eps_improve: float = EPS_IMPROVE

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.state_selection not in STATE_SELECTIONS:
            raise ValueError(f"unknown state selection {self.state_selection!r}")
        if isinstance(self.delta_strategy, str) and self.delta_strategy not in DELTA_STRATEGIES:
            raise ValueError(f"unknown delta strategy {self.delta_strategy!r}")
        if self.state_selection == "given-sequence" and not self.state_sequence:
            raise ValueError("given-sequence selection needs a nonempty state_sequence")
        if self.delta_k < 1:
            raise ValueError("delta_k must be >= 1")

    def snapshot(self) -> dict:
        d = asdict(self)
        if not isinstance(self.delta_strategy, str):
            d["delta_strategy"] = getattr(self.delta_strategy, "__name__", "custom")
        d["state_sequence"] = list(self.state_sequence)
        return d


@dataclass(frozen=True)
class StepRecord:
    iteration: int
    policy: Policy
    values: np.ndarray = field(repr=False)
    improvable: tuple[int, ...]
    switched: tuple[int, ...]
    wall_time: float = field(compare=False)
    delta: tuple[Policy, ...] = ()


@dataclass
class IterationTrace:
    algorithm: str
    config: dict
    steps: list[StepRecord] = field(default_factory=list)

    @property
    def final_policy(self) -> Policy:
        return self.steps[-1].policy

    @property
    def final_values(self) -> np.ndarray:
        return self.steps[-1].values

    @property
    def optimal(self) -> bool:
        return bool(self.steps) and not self.steps[-1].improvable

    @property
    def improvements(self) -> int:
        return len(self.steps) - 1

    @property
    def policies(self) -> list[Policy]:
        return [s.policy for s in self.steps]


class StateSelector:
    """Picks one state out of an improvable set, reproducibly."""

    def __init__(self, rule: str, num_states: int, seed: int = 0, sequence: Sequence[int] = ()):
        self.rule = rule
        self.num_states = num_states
        self.rng = np.random.default_rng(seed)
        self.sequence = tuple(int(s) for s in sequence)
        self._pos = 0

    def choose(self, improvable: Sequence[int]) -> int:
        improvable = sorted(improvable)
        if self.rule == "random":
            return int(improvable[self.rng.integers(len(improvable))])
        if self.rule == "round-robin":
            for i in range(self.num_states):
                x = (self._pos + i) % self.num_states
                if x in improvable:
                    self._pos = x + 1
                    return x
        elif self.rule == "given-sequence":
            # consume the sequence cyclically, skipping entries that are not improvable
            for _ in range(len(self.sequence)):
                x = self.sequence[self._pos % len(self.sequence)]
                self._pos += 1
                if x in improvable:
                    return x
            return improvable[0]
        raise ValueError(f"unknown state selection {self.rule!r}")


def switch_at(policy: Policy, x: int, a: int) -> Policy:
    return policy[:x] + (int(a),) + policy[x + 1:]


def howard_improvement(report: AnalysisReport) -> Policy:
    return report.greedy


def simplex_state(report: AnalysisReport) -> int:
    imp = list(report.improvable)
    return imp[int(np.argmax(report.advantages[imp]))]


def _single_switch(policy: Policy, report: AnalysisReport, x: int) -> Policy:
    return switch_at(policy, x, report.greedy[x])


def _diff(a: Policy, b: Policy) -> tuple[int, ...]:
    return tuple(x for x in range(len(a)) if a[x] != b[x])


def _run(model: MdpModel, pi0: Sequence[int], config: SolverConfig, name: str,
         improve: Callable[[Policy, AnalysisReport], tuple[Policy, tuple]]) -> IterationTrace:
    check_model(model)
    policy = check_policy(model, pi0)
    trace = IterationTrace(name, config.snapshot())
    prev, delta, t0 = None, (), time.perf_counter()
    for n in range(config.max_iterations + 1):
        values = evaluate_exact(model, policy)
        report = analyze(model, policy, values, eps=config.eps_improve)
        if prev is not None:
            gain = values - prev.values
            if np.any(gain < -MONOTONE_TOL) or not np.any(gain > 0):
                raise MonotonicityError(
                    f"{name}: iteration {n} does not strictly improve "
                    f"{encode_policy(prev.policy)} -> {encode_policy(policy)}")
        switched = () if prev is None else _diff(prev.policy, policy)
        rec = StepRecord(n, policy, values, report.improvable, switched,
                         time.perf_counter() - t0, delta)
        trace.steps.append(rec)
        if not report.improvable:
            return trace
        if n == config.max_iterations:
            break
        t0 = time.perf_counter()
        prev = rec
        policy, delta = improve(policy, report)
    raise IterationLimitError(f"{name} exceeded {config.max_iterations} iterations", trace=trace)


def howard_pi(model: MdpModel, pi0: Sequence[int], config: SolverConfig = SolverConfig()) -> IterationTrace:
    """Greedy improvement at all states each iteration."""
    return _run(model, pi0, config, "howard", lambda p, r: (howard_improvement(r), ()))


def simplex_pi(model: MdpModel, pi0: Sequence[int], config: SolverConfig = SolverConfig()) -> IterationTrace:
    """Switch only the improvable state with the largest advantage (lowest index on ties)."""
    return _run(model, pi0, config, "simplex",
                lambda p, r: (_single_switch(p, r, simplex_state(r)), ()))


def newton_pi(model: MdpModel, pi0: Sequence[int], config: SolverConfig = SolverConfig()) -> IterationTrace:
    """Greedy switch at one improvable state chosen by ``config.state_selection``."""
    sel = StateSelector(config.state_selection, model.num_states, config.seed, config.state_sequence)
    return _run(model, pi0, config, "newton",
                lambda p, r: (_single_switch(p, r, sel.choose(r.improvable)), ()))


def build_delta(model: MdpModel, pi: Sequence[int], strategy="parallel-pi", rng=None,
                k: int = 3, report: AnalysisReport | None = None,
                eps: float = EPS_IMPROVE) -> tuple[PolicySet, bool]:
    """Candidate policies for one synchronous policy-switching step.

    Returns ``(delta, optimal)``; ``delta`` is empty and ``optimal`` is True
    when ``pi`` has no improvable state. ``strategy`` is one of
    ``DELTA_STRATEGIES`` or a callable ``(model, pi, report, rng) -> policies``.
    """
    pi = check_policy(model, pi)
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    report = report or analyze(model, pi, eps=eps)
    if not report.improvable:
        return PolicySet(()), True
    if callable(strategy):
        members = list(strategy(model, pi, report, rng))
    elif strategy == "howard-greedy":
        members = [howard_improvement(report)]
    elif strategy == "parallel-pi":
        newton_x = int(report.improvable[rng.integers(len(report.improvable))])
        members = [howard_improvement(report),
                   _single_switch(pi, report, simplex_state(report)),
                   _single_switch(pi, report, newton_x)]
    elif strategy == "random-k":
        pairs = [(x, a) for x in report.improvable for a in report.switchable[x]]
        picks = rng.choice(len(pairs), size=min(k, len(pairs)), replace=False)
        members = [switch_at(pi, *pairs[i]) for i in sorted(int(j) for j in picks)]
    else:
        raise ValueError(f"unknown delta strategy {strategy!r}")
    return PolicySet.of(members), False


def pspi_sync(model: MdpModel, pi0: Sequence[int], config: SolverConfig = SolverConfig()) -> IterationTrace:
    """Next policy = policy switching over the strategy's candidates plus the current policy."""
    rng = np.random.default_rng(config.seed)

    def improve(p, r):
        delta, _ = build_delta(model, p, config.delta_strategy, rng, config.delta_k, r,
                               config.eps_improve)
        if not any(in_better_set(model, m, p, config.eps_improve, r) for m in delta):
            raise InvariantError(f"delta for {encode_policy(p)} contains no policy improvement")
        full = delta.with_incumbent(p)
        return policy_switch(model, full, eps=config.eps_improve).policy, full.members

    return _run(model, pi0, config, "pspi-sync", improve)


def pspi_async(model: MdpModel, pi0: Sequence[int], config: SolverConfig = SolverConfig()) -> IterationTrace:
    """At one chosen improvable state, adopt the action picked by switching over
    the local neighborhood of the current policy."""
    sel = StateSelector(config.state_selection, model.num_states, config.seed, config.state_sequence)

    def improve(p, r):
        x = sel.choose(r.improvable)
        nb = local_neighborhood(model, p, x)
        out = policy_switch(model, nb, eps=config.eps_improve)
        return switch_at(p, x, out.policy[x]), nb.members

    return _run(model, pi0, config, "pspi-async", improve)


SOLVERS = {
    "howard": howard_pi,
    "simplex": simplex_pi,
    "newton": newton_pi,
    "pspi-sync": pspi_sync,
    "pspi-async": pspi_async,
}
