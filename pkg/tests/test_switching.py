import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import A, B, policies_for, sample_better_policy, single_action_model, small_models
from pspi.errors import EmptyPolicySetError, InadmissibleActionError
from pspi.mdp import bellman_backup, evaluate_exact, is_optimal, policy_backup
from pspi.switching import (
    PolicySet,
    in_better_set,
    local_neighborhood,
    policy_switch,
    select_member,
    strictly_improves,
    verify_multi_policy_improvement,
)


class TestPolicySwitch:
    def test_incumbent_keeps_tie(self, det2):
        out = policy_switch(det2, PolicySet(((A, A), (B, A)), incumbent=0))
        assert out.policy == (B, A)
        assert out.source_index == (1, 0)

    def test_singleton(self, det2):
        assert policy_switch(det2, PolicySet(((A, B),))).policy == (A, B)

    def test_tie_at_state0(self, det2):
        out = policy_switch(det2, PolicySet(((A, A), (A, B)), incumbent=0))
        assert out.policy == (A, A)
        np.testing.assert_allclose(out.member_values[1], [10, 9])

    def test_lowest_index_without_incumbent(self, det2):
        # both members are worth 20 at state 1; member 0 wins
        out = policy_switch(det2, PolicySet(((B, A), (A, A))))
        assert out.source_index[1] == 0

    def test_errors(self, det2):
        with pytest.raises(EmptyPolicySetError):
            policy_switch(det2, PolicySet(()))
        with pytest.raises(InadmissibleActionError):
            policy_switch(det2, PolicySet(((A, 2),)))

    def test_injected_evaluator(self, det2):
        fake = {(A, A): np.array([0.0, 5.0]), (B, B): np.array([1.0, 0.0])}
        out = policy_switch(det2, PolicySet(((A, A), (B, B))), evaluate=fake.__getitem__)
        assert out.policy == (B, A)

    def test_select_member(self):
        assert select_member([1.0, 3.0, 3.0]) == 1
        assert select_member([1.0, 3.0, 3.0], incumbent=2) == 2
        assert select_member([3.0 - 1e-12, 3.0], incumbent=0) == 0
        assert select_member([2.0, 3.0], incumbent=0) == 1

    @settings(max_examples=80, deadline=None)
    @given(small_models(), st.data())
    def test_source_attains_max(self, m, data):
        members = data.draw(st.lists(policies_for(m), min_size=1, max_size=5))
        out = policy_switch(m, PolicySet(tuple(members)))
        table = np.stack(out.member_values)
        for x, i in enumerate(out.source_index):
            assert table[i, x] >= table[:, x].max() - 1e-9


class TestPolicySet:
    def test_of_dedupes_and_appends_incumbent(self):
        s = PolicySet.of([(0, 1), (0, 1), (1, 1)], incumbent=(0, 0))
        assert s.members == ((0, 1), (1, 1), (0, 0))
        assert s.incumbent == 2 and s.incumbent_policy == (0, 0)
        assert PolicySet.of([(0, 1), (1, 1)], incumbent=(1, 1)).incumbent == 1

    def test_bad_incumbent(self):
        with pytest.raises(IndexError):
            PolicySet(((0,),), incumbent=1)


class TestNeighborhood:
    def test_examples(self, det2):
        nb = local_neighborhood(det2, (A, A), 0)
        assert nb.members == ((A, A), (B, A)) and nb.incumbent_policy == (A, A)
        nb = local_neighborhood(det2, (B, A), 1)
        assert nb.members == ((B, A), (B, B)) and nb.incumbent_policy == (B, A)

    def test_singleton_action(self):
        nb = local_neighborhood(single_action_model(), (0, 0, 0), 1)
        assert nb.members == ((0, 0, 0),)


class TestPredicates:
    def test_strictly_improves(self, det2):
        assert strictly_improves(det2, (B, A), (A, A))
        assert not strictly_improves(det2, (A, A), (A, A))
        assert not strictly_improves(det2, (A, B), (A, A))

    def test_in_better_set(self, det2):
        assert in_better_set(det2, (B, A), (A, A))
        assert not in_better_set(det2, (A, A), (A, A))
        assert not in_better_set(det2, (A, B), (A, A))

    @settings(max_examples=60, deadline=None)
    @given(small_models(), st.integers(0, 2**32 - 1))
    def test_better_set_members_strictly_improve(self, m, seed):
        rng = np.random.default_rng(seed)
        base = tuple(int(rng.integers(m.num_actions(x))) for x in range(m.num_states))
        cand = sample_better_policy(m, base, rng)
        if cand is None:
            assert is_optimal(m, base)
            return
        assert in_better_set(m, cand, base)
        assert strictly_improves(m, cand, base)


class TestVerify:
    def test_det2_passes(self, det2):
        chk = verify_multi_policy_improvement(det2, PolicySet(((A, A), (B, A))), (A, A))
        assert chk.hypothesis and chk.strict and chk.dominates and chk.passed
        assert chk.witness == (B, A)
        np.testing.assert_allclose(evaluate_exact(det2, chk.switched), [18, 20])
        assert len(chk.lines()) == 3

    def test_hypothesis_unmet(self, det2):
        chk = verify_multi_policy_improvement(det2, PolicySet(((A, B),)), (A, A))
        assert not chk.hypothesis and chk.dominates and chk.passed
        assert "not asserted" in chk.lines()[1]

    def test_optimal_base(self, det2):
        chk = verify_multi_policy_improvement(det2, PolicySet(((A, A), (B, B))), (B, A))
        assert not chk.hypothesis


def _random_policy(m, rng):
    return tuple(int(rng.integers(m.num_actions(x))) for x in range(m.num_states))


class TestTheoremProperties:
    @settings(max_examples=100, deadline=None)
    @given(small_models(), st.integers(0, 2**32 - 1))
    def test_dominance(self, m, seed):
        rng = np.random.default_rng(seed)
        members = [_random_policy(m, rng) for _ in range(int(rng.integers(1, 6)))]
        out = policy_switch(m, PolicySet(tuple(members)))
        v = evaluate_exact(m, out.policy)
        for vm in out.member_values:
            assert np.all(v >= vm - 1e-7)

    @settings(max_examples=100, deadline=None)
    @given(small_models(), st.integers(0, 2**32 - 1))
    def test_strict_improvement(self, m, seed):
        rng = np.random.default_rng(seed)
        base = _random_policy(m, rng)
        better = sample_better_policy(m, base, rng)
        members = [_random_policy(m, rng) for _ in range(int(rng.integers(0, 3)))]
        if better is not None:
            members.insert(int(rng.integers(len(members) + 1)), better)
        if not members:
            return
        delta = PolicySet.of(members, incumbent=base)
        if any(in_better_set(m, d, base) for d in members):
            assert strictly_improves(m, policy_switch(m, delta).policy, base)

    @settings(max_examples=100, deadline=None)
    @given(small_models(), st.integers(0, 2**32 - 1))
    def test_non_improving_exclusion(self, m, seed):
        rng = np.random.default_rng(seed)
        pi = _random_policy(m, rng)
        vpi = evaluate_exact(m, pi)
        for x in range(m.num_states):
            nb = local_neighborhood(m, pi, x)
            chosen = policy_switch(m, nb).policy[x]
            for a in range(m.num_actions(x)):
                if a != pi[x] and np.all(evaluate_exact(m, nb.members[a]) <= vpi):
                    assert chosen != a

    @settings(max_examples=100, deadline=None)
    @given(small_models(), st.integers(0, 2**32 - 1))
    def test_neighborhood_dominates_greedy(self, m, seed):
        rng = np.random.default_rng(seed)
        pi = _random_policy(m, rng)
        vpi = evaluate_exact(m, pi)
        tv, greedy = bellman_backup(m, vpi)
        for x in range(m.num_states):
            nb = local_neighborhood(m, pi, x)
            newton = nb.members[greedy[x]]
            assert policy_backup(m, newton, vpi)[x] == pytest.approx(tv[x])
            v_ps = evaluate_exact(m, policy_switch(m, nb).policy)
            assert v_ps[x] >= evaluate_exact(m, newton)[x] - 1e-9
