"""Hand-checkable fixture models.

``det2``: two states, actions ``a`` (self-loop) and ``b`` (cross), gamma 0.9,
R(0,a)=1, R(0,b)=0, R(1,a)=2, R(1,b)=0.

``absorb2``: state 0 as in ``det2``; state 1 self-loops under both actions,
so nothing ever leaves it.
"""

from __future__ import annotations

from .mdp import MdpModel

NAMES = ("det2", "absorb2")


def det2() -> MdpModel:
    return MdpModel(
        rewards=[[1.0, 0.0], [2.0, 0.0]],
        transitions=[[[1.0, 0.0], [0.0, 1.0]], [[0.0, 1.0], [1.0, 0.0]]],
        gamma=0.9,
        state_names=("s0", "s1"),
        action_names=(("a", "b"), ("a", "b")),
    )


def absorb2() -> MdpModel:
    return MdpModel(
        rewards=[[1.0, 0.0], [2.0, 0.0]],
        transitions=[[[1.0, 0.0], [0.0, 1.0]], [[0.0, 1.0], [0.0, 1.0]]],
        gamma=0.9,
        state_names=("s0", "s1"),
        action_names=(("a", "b"), ("a", "b")),
    )


def named(name: str) -> MdpModel:
    try:
        return {"det2": det2, "absorb2": absorb2}[name]()
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; expected one of {NAMES}") from None
