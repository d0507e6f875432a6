"""On-line policy iteration along a single simulated trajectory.

At time k only the action at the current state x_k may change. Bertsekas-style
OPI switches greedily against the current policy's value; on-line PSPI switches
over the local neighborhood of the current policy at x_k.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import EvaluatorError, InadmissibleActionError, MonotonicityError
from .mdp import (
    EPS_IMPROVE,
    MdpModel,
    Policy,
    check_model,
    check_policy,
    encode_policy,
    evaluate_exact,
    is_optimal,
    q_values,
    transition_graph,
)
from .offline import SolverConfig, howard_pi, switch_at
from .rollout import (
    RolloutConfig,
    env_generator,
    estimate_q,
    racing_select,
    saa_select,
)
from .switching import PolicySet, local_neighborhood, select_member

ALGORITHMS = ("opi", "pspi")
MODES = ("exact", "rollout")
MONOTONE_TOL = 1e-9

# (model, candidates, x) -> index of the chosen member
Selector = Callable[[MdpModel, PolicySet, int], int]


def next_state(row: np.ndarray, u: float) -> int:
    """Inverse-CDF sample from a probability row with one uniform in [0, 1)."""
    row = np.asarray(row, dtype=float)
    cdf = np.cumsum(row)
    return min(int(np.searchsorted(cdf, u, side="right")), int(np.flatnonzero(row > 0)[-1]))


def env_step(model: MdpModel, x: int, a: int, rng: np.random.Generator) -> int:
    """Sample the successor of ``(x, a)`` using one uniform from ``rng``."""
    if not 0 <= a < model.num_actions(x):
        raise InadmissibleActionError(f"action {a} not admissible at state {x}")
    return next_state(model.transitions[x][a], float(rng.random()))


class ExactEvaluator:
    """Exact policy values, memoized per policy."""

    def __init__(self, model: MdpModel):
        self.model = model
        self._cache: dict[Policy, np.ndarray] = {}

    def __call__(self, policy: Sequence[int]) -> np.ndarray:
        policy = tuple(policy)
        v = self._cache.get(policy)
        if v is None:
            v = self._cache[policy] = evaluate_exact(self.model, policy)
        return v


def exact_select(evaluate: Callable[[Policy], np.ndarray] | None = None,
                 eps: float = EPS_IMPROVE) -> Selector:
    def select(model, candidates, x):
        ev = evaluate or ExactEvaluator(model)
        return value_select(lambda p, s, i: float(ev(p)[s]), eps)(model, candidates, x)
    return select


def value_select(estimate: Callable[[Policy, int, int], float], tol: float) -> Selector:
    """Selector from a per-candidate estimate ``(policy, x, index) -> value at x``."""
    def select(model, candidates, x):
        vals = []
        for i, m in enumerate(candidates):
            try:
                vals.append(float(estimate(m, x, i)))
            except Exception as exc:
                raise EvaluatorError(f"evaluating candidate {encode_policy(m)} failed: {exc}", m) from exc
        return select_member(vals, candidates.incumbent, tol)
    return select


def rollout_select(config: RolloutConfig, time: int = 0, reports: list | None = None) -> Selector:
    """Selector backed by SAA or racing estimates; appends each EstimateReport to ``reports``."""
    def select(model, candidates, x):
        fn = racing_select if config.selector == "racing" else saa_select
        _, rep = fn(model, candidates, x, config, time)
        if reports is not None:
            reports.append(rep)
        return rep.chosen_index
    return select


def opi_step(model: MdpModel, pi: Sequence[int], x: int, eps: float = EPS_IMPROVE,
             evaluate: Callable[[Policy], np.ndarray] | None = None) -> Policy:
    """Greedy switch at ``x`` against V^pi; keeps pi(x) when it is within eps of the max."""
    check_model(model)
    pi = check_policy(model, pi)
    v = evaluate(pi) if evaluate else evaluate_exact(model, pi)
    q = q_values(model, v, x)
    best = int(np.argmax(q))
    if q[best] - v[x] <= eps:
        return pi
    return switch_at(pi, x, best)


def pspi_step(model: MdpModel, pi: Sequence[int], x: int, select: Selector | None = None) -> Policy:
    """Adopt at ``x`` the action of the neighborhood member chosen by ``select``."""
    return pspi_step_extended(model, pi, x, (), select)


def pspi_step_extended(model: MdpModel, pi: Sequence[int], x: int, extra: Iterable[Sequence[int]],
                       select: Selector | None = None) -> Policy:
    """As :func:`pspi_step` with extra candidate policies added to the neighborhood."""
    check_model(model)
    pi = check_policy(model, pi)
    nb = local_neighborhood(model, pi, x)
    extra = [check_policy(model, e) for e in extra]
    cands = PolicySet.of(list(nb.members) + extra, incumbent=pi) if extra else nb
    idx = (select or exact_select())(model, cands, x)
    return switch_at(pi, x, cands.members[idx][x])


def _opi_rollout(model, pi, x, config, time):
    ests = [estimate_q(model, pi, x, a, config, a, time) for a in range(model.num_actions(x))]
    return switch_at(pi, x, select_member([e.mean for e in ests], pi[x], config.tie_tol))


@dataclass(frozen=True)
class OnlineStep:
    k: int
    state: int
    policy: Policy
    action: int
    changed: bool
    values: np.ndarray | None = field(default=None, repr=False)
    estimate: float | None = None


@dataclass(frozen=True)
class Stabilization:
    k_prime: int | None
    chi: frozenset[int]
    settled: bool
    window: int

    @property
    def unsettled(self) -> bool:
        return not self.settled


@dataclass
class Trajectory:
    algo: str
    mode: str
    seed: int
    pi0: Policy
    x0: int
    steps: list[OnlineStep] = field(default_factory=list)
    final_state: int | None = None
    stabilization: Stabilization | None = None

    @property
    def final_policy(self) -> Policy:
        return self.steps[-1].policy if self.steps else self.pi0

    @property
    def num_changes(self) -> int:
        return sum(s.changed for s in self.steps)


@dataclass(frozen=True)
class LocalMdpReport:
    chi: frozenset[int]
    closed: bool
    locally_optimal: bool
    final_policy: Policy
    globally_optimal: bool | None = None
    improvements_needed: int | None = None
    exits: tuple[tuple[int, int], ...] = ()


def default_settle_window(model: MdpModel) -> int:
    return 10 * model.num_states


def detect_stabilization(trajectory: Trajectory, settle_window: int | None = None,
                         num_states: int | None = None) -> Stabilization:
    """Last change time k' and the states visited after it.

    The final state reached after the last step counts as visited. A run is
    settled when at least ``settle_window`` steps follow k' (default
    10 * number of states).
    """
    steps = trajectory.steps
    if settle_window is None:
        n = num_states if num_states is not None else len(trajectory.pi0)
        settle_window = 10 * n
    changed = [s.k for s in steps if s.changed]
    k_prime = changed[-1] if changed else None
    after = [s.state for s in steps if k_prime is None or s.k > k_prime]
    if trajectory.final_state is not None:
        after.append(trajectory.final_state)
    follow = len(steps) - (0 if k_prime is None else k_prime + 1)
    return Stabilization(k_prime, frozenset(after), follow >= settle_window, settle_window)


def local_model(model: MdpModel, policy: Sequence[int], chi: Iterable[int]) -> tuple[MdpModel, Policy]:
    """Restrict actions off ``chi`` to the policy's choice; returns the model and the mapped policy."""
    policy = check_policy(model, policy)
    chi = set(chi)
    rewards, transitions, names, local_pol = [], [], [], []
    for x in range(model.num_states):
        if x in chi:
            rewards.append(model.rewards[x])
            transitions.append(model.transitions[x])
            names.append(model.action_names[x])
            local_pol.append(policy[x])
        else:
            a = policy[x]
            rewards.append(model.rewards[x][[a]])
            transitions.append(model.transitions[x][[a]])
            names.append((model.action_names[x][a],))
            local_pol.append(0)
    return MdpModel(rewards, transitions, model.gamma, model.state_names, names), tuple(local_pol)


def verify_local_optimality(model: MdpModel, final_policy: Sequence[int],
                            chi: Iterable[int]) -> LocalMdpReport:
    check_model(model)
    final_policy = check_policy(model, final_policy)
    chi = frozenset(int(x) for x in chi)
    if not chi:
        raise ValueError("chi must be nonempty")
    adj = transition_graph(model, final_policy)
    exits = tuple((x, int(y)) for x in sorted(chi) for y in np.flatnonzero(adj[x]) if y not in chi)
    glob = is_optimal(model, final_policy)
    if exits:
        return LocalMdpReport(chi, False, False, final_policy, glob, None, exits)
    lm, lp = local_model(model, final_policy, chi)
    trace = howard_pi(lm, lp, SolverConfig())
    return LocalMdpReport(chi, True, trace.improvements == 0, final_policy, glob, trace.improvements)


def run_online(model: MdpModel, pi0: Sequence[int], x0: int, algo: str = "pspi", steps: int = 100,
               mode: str = "exact", config: RolloutConfig | None = None, seed: int = 0,
               settle_window: int | None = None, eps: float = EPS_IMPROVE,
               extra: Callable[[int, Policy, int], Iterable[Sequence[int]]] | None = None,
               ) -> tuple[Trajectory, LocalMdpReport]:
    """Run ``steps`` decision epochs from ``x0``.

    Each epoch updates the action at the current state, then moves by the
    updated policy's action. In exact mode every step is checked for
    componentwise monotonicity (skipped when ``extra`` candidates are
    supplied, since adopting a foreign member's action carries no guarantee).
    ``extra(k, policy, x)`` yields additional PSPI candidates.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if algo not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algo!r}")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    check_model(model)
    pi = check_policy(model, pi0)
    if not 0 <= x0 < model.num_states:
        raise ValueError(f"x0={x0} is not a state")
    config = config or RolloutConfig(seed=seed)
    evaluate = ExactEvaluator(model)
    env = env_generator(seed)
    traj = Trajectory(algo, mode, seed, pi, int(x0))
    exact = mode == "exact"
    v_prev = evaluate(pi) if exact else None
    x = int(x0)
    for k in range(steps):
        est = None
        if exact:
            sel = exact_select(evaluate, eps)
            if algo == "opi":
                new = opi_step(model, pi, x, eps, evaluate)
            else:
                new = pspi_step_extended(model, pi, x, extra(k, pi, x) if extra else (), sel)
        else:
            reports = []
            if algo == "opi":
                new = _opi_rollout(model, pi, x, config, k)
            else:
                new = pspi_step_extended(model, pi, x, extra(k, pi, x) if extra else (),
                                         rollout_select(config, k, reports))
                est = reports[-1].candidates[reports[-1].chosen_index].mean
        values = None
        if exact:
            values = evaluate(new)
            if extra is None and np.any(values < v_prev - MONOTONE_TOL):
                raise MonotonicityError(
                    f"step {k}: value decreased from {encode_policy(pi)} to {encode_policy(new)}")
            est = float(values[x])
            v_prev = values
        a = new[x]
        traj.steps.append(OnlineStep(k, x, new, a, new != pi, values, est))
        pi = new
        x = env_step(model, x, a, env)
    traj.final_state = x
    traj.stabilization = detect_stabilization(traj, settle_window, model.num_states)
    return traj, verify_local_optimality(model, pi, traj.stabilization.chi)
