"""Finite discounted MDPs: model, Bellman operators, evaluation and analysis.

Actions are identified by their index into each state's admissible list, so a
policy is a tuple of small integers, one per state.
"""

from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    DimensionError,
    EnumerationCapError,
    EvaluationError,
    InadmissibleActionError,
    InvalidModelError,
    IterationLimitError,
)

EPS_IMPROVE = 1e-9
ROW_SUM_TOL = 1e-9
DEFAULT_ENUM_CAP = 10**6
ENUM_CAP_ENV = "PSPI_ENUM_CAP"

Policy = tuple[int, ...]


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MdpModel:
    """A finite MDP with per-state admissible action lists.

    ``rewards[x][a]`` is R(x, a) and ``transitions[x][a, y]`` is the
    probability of moving to ``y`` when ``a`` is taken at ``x``. The
    constructor only coerces arrays; use :func:`validate_model` to check the
    probabilistic invariants.
    """

    rewards: tuple
    transitions: tuple
    gamma: float
    state_names: tuple = None
    action_names: tuple = None

    def __post_init__(self):
        rewards = tuple(_frozen(np.array(r, dtype=float).reshape(-1)) for r in self.rewards)
        transitions = tuple(_frozen(np.atleast_2d(np.array(p, dtype=float))) for p in self.transitions)
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "transitions", transitions)
        object.__setattr__(self, "gamma", float(self.gamma))
        n = len(rewards)
        names = self.state_names
        if names is None:
            names = tuple(f"s{x}" for x in range(n))
        object.__setattr__(self, "state_names", tuple(str(s) for s in names))
        anames = self.action_names
        if anames is None:
            anames = tuple(tuple(f"a{a}" for a in range(len(r))) for r in rewards)
        object.__setattr__(self, "action_names", tuple(tuple(str(a) for a in row) for row in anames))

    @property
    def num_states(self) -> int:
        return len(self.rewards)

    def num_actions(self, x: int) -> int:
        return len(self.rewards[x])

    @property
    def admissible_actions(self) -> tuple[range, ...]:
        return tuple(range(len(r)) for r in self.rewards)

    @cached_property
    def rmax(self) -> float:
        return max((float(np.max(np.abs(r))) for r in self.rewards if r.size), default=0.0)

    @cached_property
    def violations(self) -> list:
        return validate_model(self)

    def __eq__(self, other):
        if not isinstance(other, MdpModel):
            return NotImplemented
        return (
            self.gamma == other.gamma
            and self.state_names == other.state_names
            and self.action_names == other.action_names
            and len(self.rewards) == len(other.rewards)
            and all(np.array_equal(a, b) for a, b in zip(self.rewards, other.rewards))
            and all(np.array_equal(a, b) for a, b in zip(self.transitions, other.transitions))
        )

    __hash__ = object.__hash__


@dataclass(frozen=True)
class Violation:
    message: str
    state: int | None = None
    action: int | None = None

    def __str__(self):
        where = []
        if self.state is not None:
            where.append(f"state {self.state}")
        if self.action is not None:
            where.append(f"action {self.action}")
        return f"{' '.join(where)}: {self.message}" if where else self.message


def validate_model(model: MdpModel) -> list[Violation]:
    """Return every violated model invariant; an empty list means valid."""
    out = []
    g = model.gamma
    if not (0.0 < g < 1.0) or not math.isfinite(g):
        out.append(Violation(f"gamma {g:g} not in (0,1)"))
    n = model.num_states
    if n < 1:
        out.append(Violation("model has no states"))
    if len(model.transitions) != n:
        out.append(Violation(f"{len(model.transitions)} transition blocks for {n} states"))
        return out
    if len(model.action_names) != n or len(model.state_names) != n:
        out.append(Violation("name lists do not match the number of states"))
    for x in range(n):
        r, p = model.rewards[x], model.transitions[x]
        if r.size == 0:
            out.append(Violation("no admissible actions", state=x))
            continue
        if x < len(model.action_names) and len(model.action_names[x]) != r.size:
            out.append(Violation("action name count differs from reward count", state=x))
        if p.shape != (r.size, n):
            out.append(Violation(f"transition block shape {p.shape} != ({r.size}, {n})", state=x))
            continue
        for a in range(r.size):
            if not math.isfinite(r[a]):
                out.append(Violation("reward is not finite", state=x, action=a))
            row = p[a]
            if not np.all(np.isfinite(row)):
                out.append(Violation("transition row has non-finite entries", state=x, action=a))
                continue
            if np.any(row < 0):
                out.append(Violation("transition row has negative entries", state=x, action=a))
            s = float(row.sum())
            if abs(s - 1.0) > ROW_SUM_TOL:
                out.append(Violation(f"row sum {s:.12g} ≠ 1", state=x, action=a))
    return out


def check_model(model: MdpModel) -> None:
    if model.violations:
        raise InvalidModelError(model.violations)


def check_policy(model: MdpModel, policy: Sequence[int]) -> Policy:
    """Return ``policy`` as a tuple after checking length and admissibility."""
    pol = tuple(int(a) for a in policy)
    if len(pol) != model.num_states:
        raise DimensionError(f"policy has {len(pol)} entries for {model.num_states} states")
    for x, a in enumerate(pol):
        if not 0 <= a < model.num_actions(x):
            raise InadmissibleActionError(f"action {a} not admissible at state {x}")
    return pol


def _check_vector(model: MdpModel, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (model.num_states,):
        raise DimensionError(f"value vector has shape {u.shape}, expected ({model.num_states},)")
    return u


def encode_policy(policy: Sequence[int]) -> str:
    return "-".join(str(int(a)) for a in policy)


def decode_policy(text: str) -> Policy:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(t) for t in text.split("-"))


def lex_policy(model: MdpModel) -> Policy:
    return (0,) * model.num_states


def random_policy(model: MdpModel, rng: np.random.Generator) -> Policy:
    return tuple(int(rng.integers(model.num_actions(x))) for x in range(model.num_states))


def q_value(model: MdpModel, u, x: int, a: int) -> float:
    """R(x,a) + gamma * sum_y P(y|x,a) u(y)."""
    u = _check_vector(model, u)
    if not 0 <= a < model.num_actions(x):
        raise InadmissibleActionError(f"action {a} not admissible at state {x}")
    return float(model.rewards[x][a] + model.gamma * (model.transitions[x][a] @ u))


def q_values(model: MdpModel, u, x: int) -> np.ndarray:
    """One-step lookahead values of every admissible action at ``x``."""
    return model.rewards[x] + model.gamma * (model.transitions[x] @ u)


def policy_matrices(model: MdpModel, policy: Policy) -> tuple[np.ndarray, np.ndarray]:
    """The transition matrix and reward vector induced by ``policy``."""
    p = np.stack([model.transitions[x][a] for x, a in enumerate(policy)])
    r = np.array([model.rewards[x][a] for x, a in enumerate(policy)])
    return p, r


def policy_backup(model: MdpModel, policy: Sequence[int], u) -> np.ndarray:
    check_model(model)
    policy = check_policy(model, policy)
    u = _check_vector(model, u)
    p, r = policy_matrices(model, policy)
    return r + model.gamma * (p @ u)


def bellman_backup(model: MdpModel, u) -> tuple[np.ndarray, Policy]:
    """Apply the optimality operator; the greedy policy breaks ties to the lowest index."""
    check_model(model)
    u = _check_vector(model, u)
    values = np.empty(model.num_states)
    greedy = []
    for x in range(model.num_states):
        q = q_values(model, u, x)
        a = int(np.argmax(q))
        greedy.append(a)
        values[x] = q[a]
    return values, tuple(greedy)


def evaluate_exact(model: MdpModel, policy: Sequence[int]) -> np.ndarray:
    """Solve (I - gamma P_pi) V = R_pi directly."""
    check_model(model)
    policy = check_policy(model, policy)
    p, r = policy_matrices(model, policy)
    a = np.eye(model.num_states) - model.gamma * p
    try:
        v = np.linalg.solve(a, r)
    except np.linalg.LinAlgError as exc:
        raise EvaluationError(f"linear solve failed for policy {encode_policy(policy)}") from exc
    if not np.all(np.isfinite(v)):
        raise EvaluationError(f"non-finite value for policy {encode_policy(policy)}")
    return v


def evaluate_iterative(model: MdpModel, policy: Sequence[int], tol: float = 1e-9,
                       max_iters: int = 100_000) -> np.ndarray:
    """Fixed-point iteration of the policy operator from zero.

    Stops once successive iterates differ by at most ``tol*(1-gamma)/gamma``
    in sup norm, which bounds the distance to the true value by ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    check_model(model)
    policy = check_policy(model, policy)
    p, r = policy_matrices(model, policy)
    g = model.gamma
    threshold = tol * (1.0 - g) / g
    u = np.zeros(model.num_states)
    residual = math.inf
    for _ in range(max_iters):
        nxt = r + g * (p @ u)
        residual = float(np.max(np.abs(nxt - u)))
        u = nxt
        if residual <= threshold:
            return u
    raise IterationLimitError(
        f"policy evaluation did not converge in {max_iters} iterations (residual {residual:g})",
        iterate=u, residual=residual,
    )


@dataclass(frozen=True)
class AnalysisReport:
    switchable: tuple[tuple[int, ...], ...]
    improvable: tuple[int, ...]
    advantages: np.ndarray
    greedy: Policy
    values: np.ndarray = field(repr=False)


def analyze(model: MdpModel, policy: Sequence[int], values=None,
            eps: float = EPS_IMPROVE) -> AnalysisReport:
    """Switchable actions, improvable states and advantages of ``policy``.

    An action is switchable at x when its lookahead against the policy value
    beats V(x) by more than ``eps``. ``greedy`` is the consistent greedy
    policy: the current action is kept at non-improvable states.
    """
    check_model(model)
    policy = check_policy(model, policy)
    v = evaluate_exact(model, policy) if values is None else _check_vector(model, values)
    switchable, improvable, greedy = [], [], []
    adv = np.empty(model.num_states)
    for x in range(model.num_states):
        q = q_values(model, v, x)
        s = tuple(int(a) for a in np.flatnonzero(q - v[x] > eps))
        switchable.append(s)
        best = int(np.argmax(q))
        adv[x] = max(float(q[best] - v[x]), 0.0)
        if s:
            improvable.append(x)
            greedy.append(best)
        else:
            greedy.append(policy[x])
    return AnalysisReport(tuple(switchable), tuple(improvable), adv, tuple(greedy), v)


def is_optimal(model: MdpModel, policy: Sequence[int], eps: float = EPS_IMPROVE) -> bool:
    return not analyze(model, policy, eps=eps).improvable


def num_policies(model: MdpModel) -> int:
    return math.prod(model.num_actions(x) for x in range(model.num_states))


def enumerate_policies(model: MdpModel) -> Iterator[Policy]:
    """All deterministic policies in lexicographic order."""
    return itertools.product(*model.admissible_actions)


def enumeration_cap() -> int:
    raw = os.environ.get(ENUM_CAP_ENV)
    return int(raw) if raw else DEFAULT_ENUM_CAP


def brute_force_optimal(model: MdpModel, cap: int | None = None) -> tuple[Policy, np.ndarray]:
    """Oracle: evaluate every policy, take the componentwise max.

    Returns the lexicographically first policy whose value matches the max at
    every state (up to a relative 1e-9 slack for rounding).
    """
    check_model(model)
    cap = enumeration_cap() if cap is None else cap
    total = num_policies(model)
    if total > cap:
        raise EnumerationCapError(f"{total} policies exceed the enumeration cap {cap}")
    policies = list(enumerate_policies(model))
    values = np.array([evaluate_exact(model, p) for p in policies])
    vstar = values.max(axis=0)
    slack = 1e-9 * max(1.0, float(np.max(np.abs(vstar))))
    for p, v in zip(policies, values):
        if np.all(v >= vstar - slack):
            return p, vstar
    raise EvaluationError("no policy attains the componentwise maximum")  # pragma: no cover


def transition_graph(model: MdpModel, policy: Sequence[int] | None = None) -> np.ndarray:
    """Adjacency of positive-probability moves, under ``policy`` or any action."""
    n = model.num_states
    adj = np.zeros((n, n), dtype=bool)
    for x in range(n):
        block = model.transitions[x] if policy is None else model.transitions[x][[policy[x]]]
        adj[x] = np.any(block > 0, axis=0)
    return adj


def is_communicating(model: MdpModel) -> bool:
    check_model(model)
    n_comp, _ = connected_components(csr_matrix(transition_graph(model)), directed=True,
                                     connection="strong")
    return n_comp == 1
