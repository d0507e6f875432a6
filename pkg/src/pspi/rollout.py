"""Simulation-based value estimates at a single state.

Each (candidate, replication) sample path reads uniforms from its own keyed
Philox stream, so results never depend on evaluation order. With common random
numbers the candidate index is left out of the key and all candidates see the
same noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .mdp import MdpModel, Policy, check_model, check_policy
from .switching import PolicySet, select_member

SELECTORS = ("saa", "racing")
_TAG_SHARED = 0
_TAG_PER_CANDIDATE = 1
_TAG_ENV = 2


@dataclass(frozen=True)
class RolloutConfig:
    horizon: int = 50
    replications: int = 32
    seed: int = 0
    crn: bool = True
    tie_tol: float = 1e-6
    selector: str = "saa"
    racing_delta: float = 0.05
    racing_batch: int = 8

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.selector not in SELECTORS:
            raise ValueError(f"unknown selector {self.selector!r}")
        if not 0.0 < self.racing_delta < 1.0:
            raise ValueError("racing_delta must lie in (0,1)")
        if self.racing_batch < 1:
            raise ValueError("racing_batch must be >= 1")


@dataclass(frozen=True)
class RngStreamKey:
    """Key of one independent uniform stream.

    ``candidate=None`` marks a stream shared by all candidates (CRN).
    ``time`` separates the decision epochs of an on-line run.
    """

    seed: int
    candidate: int | None
    replication: int
    time: int = 0

    def entropy(self) -> list[int]:
        if self.candidate is None:
            return [self.seed, _TAG_SHARED, self.time, self.replication]
        return [self.seed, _TAG_PER_CANDIDATE, self.time, self.candidate, self.replication]

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(self.entropy())))


def stream_key(config: RolloutConfig, candidate: int, replication: int, time: int = 0) -> RngStreamKey:
    return RngStreamKey(config.seed, None if config.crn else candidate, replication, time)


def env_generator(seed: int) -> np.random.Generator:
    """Stream that drives the environment of an on-line run."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, _TAG_ENV])))


def truncation_horizon(gamma: float, rmax: float, eps: float) -> int:
    """Smallest H >= 1 with gamma**H * rmax / (1 - gamma) <= eps."""
    if not 0 < gamma < 1 or rmax <= 0 or eps <= 0:
        raise ValueError("need 0 < gamma < 1, rmax > 0, eps > 0")

    def tail(h):
        return gamma**h * rmax / (1.0 - gamma)

    h = max(1, math.ceil(math.log(eps * (1.0 - gamma) / rmax) / math.log(gamma)))
    # the closed form can land one off when the ratio is an exact power of gamma
    while h > 1 and tail(h - 1) <= eps:
        h -= 1
    while tail(h) > eps:
        h += 1
    return h


def truncation_bound(model: MdpModel, horizon: int) -> float:
    return model.gamma**horizon * model.rmax / (1.0 - model.gamma)


def _sample_next(cdf_row: np.ndarray, last: int, u: float) -> int:
    return min(int(np.searchsorted(cdf_row, u, side="right")), last)


def rollout_return(model: MdpModel, pi: Sequence[int], x: int, horizon: int,
                   stream, first_action: int | None = None) -> float:
    """Discounted reward of one simulated path of ``pi`` over ``horizon`` steps.

    Exactly ``horizon`` uniforms are drawn from ``stream`` (a Generator or an
    :class:`RngStreamKey`), one per step. ``first_action`` overrides the action
    taken at the first step only.
    """
    pi = check_policy(model, pi)
    rng = stream.generator() if isinstance(stream, RngStreamKey) else stream
    us = rng.random(horizon)
    total, disc, s = 0.0, 1.0, x
    for t in range(horizon):
        a = first_action if (t == 0 and first_action is not None) else pi[s]
        total += disc * model.rewards[s][a]
        row = model.transitions[s][a]
        s = _sample_next(np.cumsum(row), int(np.flatnonzero(row > 0)[-1]), us[t])
        disc *= model.gamma
    return total


class _PathTable:
    """Reward vector and row CDFs of a policy, for vectorized path simulation."""

    def __init__(self, model: MdpModel, pi: Policy):
        rows = np.stack([model.transitions[x][a] for x, a in enumerate(pi)])
        self.reward = np.array([model.rewards[x][a] for x, a in enumerate(pi)])
        self.cdf = np.cumsum(rows, axis=1)
        self.last = np.array([np.flatnonzero(r > 0)[-1] for r in rows])

    @staticmethod
    def step(cdf, last, u):
        nxt = np.sum(cdf <= u[:, None], axis=1)
        return np.minimum(nxt, last)


def _path_returns(model: MdpModel, pi: Policy, x: int, us: np.ndarray,
                  first_action: int | None = None) -> np.ndarray:
    """Returns of ``len(us)`` paths at once; row i of ``us`` drives path i.

    Accumulates in the same order as :func:`rollout_return`, so each entry is
    bit-identical to the scalar version.
    """
    table = _PathTable(model, pi)
    n, horizon = us.shape
    s = np.full(n, x)
    total = np.zeros(n)
    disc = 1.0
    for t in range(horizon):
        if t == 0 and first_action is not None:
            row = model.transitions[x][first_action]
            total += disc * model.rewards[x][first_action]
            cdf = np.broadcast_to(np.cumsum(row), (n, row.size))
            last = np.full(n, np.flatnonzero(row > 0)[-1])
        else:
            total += disc * table.reward[s]
            cdf, last = table.cdf[s], table.last[s]
        s = _PathTable.step(cdf, last, us[:, t])
        disc *= model.gamma
    return total


@dataclass(frozen=True)
class CandidateEstimate:
    mean: float
    std: float
    n: int
    returns: np.ndarray = field(repr=False, compare=False)


@dataclass(frozen=True)
class EstimateReport:
    candidates: tuple[CandidateEstimate, ...]
    chosen_index: int
    chosen_action: int
    truncation_bound: float
    rounds: int = 1
    survivors: tuple[int, ...] = ()


def _stats(returns: np.ndarray) -> CandidateEstimate:
    n = returns.size
    std = float(np.std(returns, ddof=1)) if n > 1 else 0.0
    return CandidateEstimate(float(np.mean(returns)), std, n, returns)


def sample_returns(model: MdpModel, pi: Sequence[int], x: int, config: RolloutConfig,
                   candidate_index: int, time: int = 0, start: int = 0, count: int | None = None,
                   first_action: int | None = None) -> np.ndarray:
    """Returns for replications ``start .. start+count-1`` of one candidate."""
    pi = check_policy(model, pi)
    count = config.replications if count is None else count
    us = np.stack([stream_key(config, candidate_index, r, time).generator().random(config.horizon)
                   for r in range(start, start + count)])
    return _path_returns(model, pi, x, us, first_action)


def estimate_value(model: MdpModel, pi: Sequence[int], x: int, config: RolloutConfig,
                   candidate_index: int = 0, time: int = 0) -> CandidateEstimate:
    """Sample-average estimate of the value of ``pi`` at ``x`` from truncated returns."""
    check_model(model)
    return _stats(sample_returns(model, pi, x, config, candidate_index, time))


def saa_select(model: MdpModel, neighborhood: PolicySet, x: int, config: RolloutConfig,
               time: int = 0) -> tuple[int, EstimateReport]:
    """Pick the candidate with the largest mean estimate; the incumbent keeps ties within tie_tol."""
    check_model(model)
    ests = tuple(estimate_value(model, m, x, config, i, time) for i, m in enumerate(neighborhood))
    idx = select_member([e.mean for e in ests], neighborhood.incumbent, config.tie_tol)
    action = neighborhood.members[idx][x]
    return action, EstimateReport(ests, idx, action, truncation_bound(model, config.horizon),
                                  1, tuple(range(len(ests))))


def racing_radius(vmax: float, k: int, r: int, n: int, delta: float) -> float:
    return vmax * math.sqrt(math.log(4.0 * k * r * r / delta) / (2.0 * n))


def racing_select(model: MdpModel, neighborhood: PolicySet, x: int, config: RolloutConfig,
                  time: int = 0) -> tuple[int, EstimateReport]:
    """Successive elimination over the candidates.

    Each round adds ``racing_batch`` replications to every survivor and drops
    candidates whose upper confidence bound falls below the best lower bound.
    The total per-candidate budget is ``config.replications``; if it runs
    out with several survivors the SAA rule decides among them.
    """
    check_model(model)
    k = len(neighborhood)
    bound = truncation_bound(model, config.horizon)
    samples = [np.empty(0) for _ in range(k)]
    alive = list(range(k))
    vmax = model.rmax / (1.0 - model.gamma)
    used, rounds = 0, 0
    while len(alive) > 1 and used < config.replications:
        rounds += 1
        batch = min(config.racing_batch, config.replications - used)
        for i in alive:
            new = sample_returns(model, neighborhood.members[i], x, config, i, time, used, batch)
            samples[i] = np.concatenate([samples[i], new])
        used += batch
        rad = racing_radius(vmax, k, rounds, used, config.racing_delta)
        means = {i: float(np.mean(samples[i])) for i in alive}
        best_lower = max(means.values()) - rad
        alive = [i for i in alive if means[i] + rad >= best_lower]
    if k == 1 or used == 0:
        idx = alive[0]
    else:
        vals = np.full(k, -np.inf)
        for i in alive:
            vals[i] = np.mean(samples[i])
        inc = neighborhood.incumbent if neighborhood.incumbent in alive else None
        idx = select_member(vals, inc, config.tie_tol)
    ests = tuple(_stats(s) if s.size else CandidateEstimate(math.nan, math.nan, 0, s) for s in samples)
    action = neighborhood.members[idx][x]
    return action, EstimateReport(ests, idx, action, bound, rounds, tuple(alive))


def estimate_q(model: MdpModel, pi: Sequence[int], x: int, a: int, config: RolloutConfig,
               candidate_index: int, time: int = 0) -> CandidateEstimate:
    """Estimate of taking ``a`` at ``x`` once and following ``pi`` afterwards."""
    return _stats(sample_returns(model, pi, x, config, candidate_index, time, first_action=a))
