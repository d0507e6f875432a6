import numpy as np
import pytest
from hypothesis import strategies as st

from pspi.fixtures import absorb2 as _absorb2
from pspi.fixtures import det2 as _det2
from pspi.generators import generate_random_mdp
from pspi.mdp import MdpModel, analyze

A, B = 0, 1


@pytest.fixture
def det2():
    return _det2()


@pytest.fixture
def absorb2():
    return _absorb2()


@st.composite
def small_models(draw, max_states=6, max_actions=3):
    """Random models, including ones with uneven action counts per state."""
    n = draw(st.integers(1, max_states))
    seed = draw(st.integers(0, 2**32 - 1))
    gamma = draw(st.sampled_from([0.5, 0.8, 0.9, 0.95]))
    rng = np.random.default_rng(seed)
    rewards, transitions = [], []
    for _ in range(n):
        k = int(rng.integers(1, max_actions + 1))
        block = rng.random((k, n)) * (rng.random((k, n)) < 0.6)
        block[np.arange(k), rng.integers(n, size=k)] += 0.1
        transitions.append(block / block.sum(axis=1, keepdims=True))
        rewards.append(rng.uniform(-1, 1, size=k))
    return MdpModel(rewards, transitions, gamma)


@st.composite
def garnet_models(draw, max_states=6, max_actions=3):
    n = draw(st.integers(1, max_states))
    return generate_random_mdp(n, draw(st.integers(1, max_actions)), draw(st.integers(1, n)),
                               (0.0, 1.0), draw(st.sampled_from([0.5, 0.9, 0.95])),
                               draw(st.integers(0, 10**6)))


def policies_for(model):
    return st.tuples(*[st.integers(0, model.num_actions(x) - 1) for x in range(model.num_states)])


def single_action_model():
    return MdpModel([[1.0], [0.5], [-2.0]],
                    [[[0.2, 0.8, 0.0]], [[0.0, 0.0, 1.0]], [[0.5, 0.5, 0.0]]], 0.8)


def sample_better_policy(model, base, rng, report=None):
    """A random member of the improvement set of ``base`` (None if base is optimal)."""
    report = report or analyze(model, base)
    imp = list(report.improvable)
    if not imp:
        return None
    size = int(rng.integers(1, len(imp) + 1))
    chosen = rng.choice(imp, size=size, replace=False)
    out = list(base)
    for x in chosen:
        s = report.switchable[int(x)]
        out[int(x)] = int(s[rng.integers(len(s))])
    return tuple(out)
