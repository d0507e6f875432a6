"""Policy switching over a set of policies, and the improvement predicates around it."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import EmptyPolicySetError
from .mdp import (
    EPS_IMPROVE,
    MdpModel,
    Policy,
    analyze,
    check_model,
    check_policy,
    encode_policy,
    evaluate_exact,
)

DOMINANCE_TOL = 1e-9


@dataclass(frozen=True)
class PolicySet:
    """An ordered set of policies with an optional designated incumbent."""

    members: tuple[Policy, ...]
    incumbent: int | None = None

    def __post_init__(self):
        members = tuple(tuple(int(a) for a in m) for m in self.members)
        object.__setattr__(self, "members", members)
        if self.incumbent is not None and not 0 <= self.incumbent < len(members):
            raise IndexError(f"incumbent index {self.incumbent} out of range")

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    @classmethod
    def of(cls, members, incumbent: Sequence[int] | None = None) -> PolicySet:
        """Deduplicate ``members`` (order kept) and designate ``incumbent``, appending it if absent."""
        seen = {}
        for m in members:
            seen.setdefault(tuple(int(a) for a in m), None)
        out = list(seen)
        if incumbent is None:
            return cls(tuple(out))
        inc = tuple(int(a) for a in incumbent)
        if inc not in seen:
            out.append(inc)
        return cls(tuple(out), out.index(inc))

    def with_incumbent(self, policy: Sequence[int]) -> PolicySet:
        return PolicySet.of(self.members, incumbent=policy)

    @property
    def incumbent_policy(self) -> Policy | None:
        return None if self.incumbent is None else self.members[self.incumbent]


@dataclass(frozen=True)
class SwitchOutcome:
    policy: Policy
    source_index: tuple[int, ...]
    member_values: tuple[np.ndarray, ...] = field(repr=False)


def select_member(values_at_state: Sequence[float], incumbent: int | None = None,
                  tol: float = EPS_IMPROVE) -> int:
    """Index of a maximizing member; the incumbent wins ties within ``tol``,
    otherwise the lowest index wins."""
    vals = np.asarray(values_at_state, dtype=float)
    best = int(np.argmax(vals))
    if incumbent is not None and vals[incumbent] >= vals[best] - tol:
        return incumbent
    return best


def policy_switch(model: MdpModel, delta: PolicySet,
                  evaluate: Callable[[Policy], np.ndarray] | None = None,
                  eps: float = EPS_IMPROVE) -> SwitchOutcome:
    """Per state, take the action of the member whose value is highest there."""
    check_model(model)
    if len(delta) == 0:
        raise EmptyPolicySetError("policy switching needs a nonempty policy set")
    members = [check_policy(model, m) for m in delta.members]
    evaluate = evaluate or (lambda p: evaluate_exact(model, p))
    member_values = tuple(np.asarray(evaluate(m), dtype=float) for m in members)
    table = np.stack(member_values)
    source = tuple(select_member(table[:, x], delta.incumbent, eps) for x in range(model.num_states))
    policy = tuple(members[i][x] for x, i in enumerate(source))
    return SwitchOutcome(policy, source, member_values)


def local_neighborhood(model: MdpModel, policy: Sequence[int], x: int) -> PolicySet:
    """The policies that agree with ``policy`` everywhere except possibly at ``x``,
    ordered by the action at ``x``; ``policy`` itself is the incumbent."""
    policy = check_policy(model, policy)
    members = tuple(policy[:x] + (a,) + policy[x + 1:] for a in range(model.num_actions(x)))
    return PolicySet(members, policy[x])


def strictly_improves(model: MdpModel, candidate: Sequence[int], base: Sequence[int],
                      eps: float = EPS_IMPROVE) -> bool:
    vc = evaluate_exact(model, candidate)
    vb = evaluate_exact(model, base)
    return bool(np.all(vc >= vb - DOMINANCE_TOL) and np.any(vc > vb + eps))


def in_better_set(model: MdpModel, candidate: Sequence[int], base: Sequence[int],
                  eps: float = EPS_IMPROVE, report=None) -> bool:
    """Whether ``candidate`` is a policy improvement of ``base``: it differs on a
    nonempty set of improvable states, using switchable actions only.

    ``report`` may pass a precomputed analysis of ``base``.
    """
    candidate = check_policy(model, candidate)
    base = check_policy(model, base)
    diff = [x for x in range(model.num_states) if candidate[x] != base[x]]
    if not diff:
        return False
    report = report or analyze(model, base, eps=eps)
    return all(candidate[x] in report.switchable[x] for x in diff)


@dataclass
class ImprovementCheck:
    """Outcome of checking multi-policy improvement on one (model, delta, base)."""

    switched: Policy
    hypothesis: bool
    witness: Policy | None
    strict: bool
    dominates: bool
    worst_gap: float
    undominated: list[Policy]

    @property
    def passed(self) -> bool:
        # strict improvement is only claimed when the hypothesis holds
        return self.dominates and (self.strict or not self.hypothesis)

    def lines(self) -> list[str]:
        return [
            f"(i) member in improvement set: {'pass' if self.hypothesis else 'fail'}"
            + (f" witness={encode_policy(self.witness)}" if self.witness else ""),
            f"(ii) switched policy strictly improves base: {'pass' if self.strict else 'fail'}"
            + ("" if self.hypothesis else " (not asserted)"),
            f"(iii) switched policy dominates every member: {'pass' if self.dominates else 'fail'}"
            f" worst_gap={self.worst_gap:.3e}",
        ]


def verify_multi_policy_improvement(model: MdpModel, delta: PolicySet, base: Sequence[int],
                                    tol: float = 1e-7, eps: float = EPS_IMPROVE) -> ImprovementCheck:
    base = check_policy(model, base)
    report = analyze(model, base, eps=eps)
    witness = next((m for m in delta.members if in_better_set(model, m, base, eps, report)), None)
    outcome = policy_switch(model, delta, eps=eps)
    v_ps = evaluate_exact(model, outcome.policy)
    gaps = [float(np.min(v_ps - v)) for v in outcome.member_values]
    undominated = [m for m, g in zip(delta.members, gaps) if g < -tol]
    return ImprovementCheck(
        switched=outcome.policy,
        hypothesis=witness is not None,
        witness=witness,
        strict=strictly_improves(model, outcome.policy, base, eps),
        dominates=not undominated,
        worst_gap=min(gaps),
        undominated=undominated,
    )
