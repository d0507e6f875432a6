"""Garnet-style random MDP generators."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .mdp import MdpModel

CYCLE_WEIGHT = 0.1


def _check_params(num_states, num_actions, branching, reward_range, gamma):
    if num_states < 1 or num_actions < 1:
        raise ValueError("num_states and num_actions must be >= 1")
    if not 1 <= branching <= num_states:
        raise ValueError(f"branching must lie in [1, {num_states}], got {branching}")
    lo, hi = reward_range
    if not lo <= hi:
        raise ValueError("reward_range must be (low, high) with low <= high")
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0,1)")


def generate_random_mdp(num_states: int, num_actions: int, branching: int,
                        reward_range: Sequence[float] = (0.0, 1.0), gamma: float = 0.9,
                        seed: int = 0) -> MdpModel:
    """Every (x, a) moves to ``branching`` distinct successors with normalized
    uniform weights; rewards are uniform over ``reward_range``."""
    _check_params(num_states, num_actions, branching, reward_range, gamma)
    rng = np.random.default_rng(seed)
    lo, hi = reward_range
    rewards, transitions = [], []
    for _ in range(num_states):
        block = np.zeros((num_actions, num_states))
        for a in range(num_actions):
            succ = rng.choice(num_states, size=branching, replace=False)
            w = 1.0 - rng.random(branching)  # in (0, 1], never zero
            block[a, succ] = w / w.sum()
        transitions.append(block)
        rewards.append(rng.uniform(lo, hi, size=num_actions))
    return MdpModel(rewards, transitions, gamma)


def generate_communicating_mdp(num_states: int, num_actions: int, branching: int,
                               reward_range: Sequence[float] = (0.0, 1.0), gamma: float = 0.9,
                               seed: int = 0) -> MdpModel:
    """As :func:`generate_random_mdp`, with action 0 at each x blended toward
    x+1 (mod n) so a positive-probability cycle visits every state."""
    base = generate_random_mdp(num_states, num_actions, branching, reward_range, gamma, seed)
    transitions = []
    for x, block in enumerate(base.transitions):
        block = block.copy()
        edge = np.zeros(num_states)
        edge[(x + 1) % num_states] = 1.0
        block[0] = (1.0 - CYCLE_WEIGHT) * block[0] + CYCLE_WEIGHT * edge
        transitions.append(block)
    return MdpModel(base.rewards, transitions, gamma)


def corpus_params(seed: int) -> dict:
    """Mixed generator parameters drawn reproducibly from ``seed``:
    2..5 states, 2 or 3 actions, any branching, gamma in {0.5, 0.9, 0.95}."""
    rng = np.random.default_rng([seed, 7919])
    n = int(rng.integers(2, 6))
    return dict(
        num_states=n,
        num_actions=int(rng.integers(2, 4)),
        branching=int(rng.integers(1, n + 1)),
        reward_range=(0.0, 1.0),
        gamma=float(rng.choice([0.5, 0.9, 0.95])),
        seed=seed,
    )


def corpus_model(seed: int, communicating: bool = False) -> MdpModel:
    gen = generate_communicating_mdp if communicating else generate_random_mdp
    return gen(**corpus_params(seed))
