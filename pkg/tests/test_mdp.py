import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossing.mdp import (
    Action,
    MalformedEpisodeError,
    MusicCondition,
    RewardParams,
    StateVector,
    Transition,
    backpropagate_returns,
    encode_state,
    terminal_reward,
)
from crossing.sim import VehicleState, WorldConfig, WorldState
from crossing.verification import make_episode

CFG = WorldConfig()


def world_at(agent_p=0.0, human_p=0.0, agent_v=0.0, human_v=0.0, steps=0, crashed=False,
             agent_done=False, human_done=False):
    return WorldState(
        agent=VehicleState(progress=agent_p, speed=agent_v, reached_end=agent_done),
        human=VehicleState(progress=human_p, speed=human_v, reached_end=human_done),
        steps=steps,
        elapsed=steps * CFG.dt,
        crashed=crashed,
    )


def test_action_indices_are_fixed():
    assert [Action.FAST, Action.SLOW, Action.BRAKE] == [0, 1, 2]


def test_condition_flags():
    assert MusicCondition.HAPPY.flag == 1.0
    assert MusicCondition.SAD.flag == 0.0


def test_fresh_trial_unaware_encoding():
    sv = encode_state(world_at(), MusicCondition.SAD, aware=False, cfg=CFG)
    assert len(sv) == 8
    assert sv.features[0] == -1.0  # agent at the near edge
    assert sv.features[1] == -1.0
    assert sv.features[2] == 0.0
    assert sv.features[4] == -1.0  # elapsed 0
    assert list(sv.features[5:8]) == [0.0, 0.0, 0.0]


def test_aware_encoding_appends_flag_only():
    world = world_at(agent_p=0.3, human_p=0.2, agent_v=0.25, steps=40)
    base = encode_state(world, MusicCondition.HAPPY, aware=False, cfg=CFG)
    aware = encode_state(world, MusicCondition.HAPPY, aware=True, cfg=CFG)
    assert len(aware) == 9
    assert np.array_equal(aware.features[:8], base.features)
    assert aware.features[8] == 1.0


def test_crashed_world_sets_feature_seven():
    sv = encode_state(world_at(crashed=True), MusicCondition.SAD, aware=False, cfg=CFG)
    assert sv.features[7] == 1.0


@given(
    agent_p=st.floats(0.0, 1.0),
    human_p=st.floats(0.0, 1.0),
    steps=st.integers(0, 1200),
    happy=st.booleans(),
)
@settings(max_examples=60, deadline=None)
def test_prefix_property_and_normalization(agent_p, human_p, steps, happy):
    condition = MusicCondition.HAPPY if happy else MusicCondition.SAD
    world = world_at(agent_p=agent_p, human_p=human_p, agent_v=0.25, human_v=-0.125, steps=steps)
    unaware = encode_state(world, condition, aware=False, cfg=CFG)
    aware = encode_state(world, condition, aware=True, cfg=CFG)
    assert np.array_equal(aware.features[:8], unaware.features)
    assert np.all(unaware.features[:5] >= -1.0) and np.all(unaware.features[:5] <= 1.0)
    # Pure function: same inputs, identical vector.
    again = encode_state(world, condition, aware=True, cfg=CFG)
    assert np.array_equal(again.features, aware.features)


def test_state_vector_length_enforced():
    with pytest.raises(ValueError):
        StateVector(features=np.zeros(8), aware=True)
    with pytest.raises(ValueError):
        StateVector(features=np.zeros(9), aware=False)


def test_terminal_reward_examples():
    params = RewardParams()
    assert terminal_reward(10.0, False, params) == -10.0
    assert terminal_reward(5.0, True, params) == -105.0
    assert terminal_reward(0.0, False, params) == 0.0


def test_terminal_reward_rejects_negative_time():
    with pytest.raises(ValueError):
        terminal_reward(-1.0, False, RewardParams())


def test_terminal_reward_monotonicity():
    params = RewardParams()
    assert terminal_reward(3.0, False, params) > terminal_reward(4.0, False, params)
    assert terminal_reward(3.0, False, params) > terminal_reward(3.0, True, params)


def test_reward_params_validation():
    with pytest.raises(ValueError):
        RewardParams(gamma=1.0)
    with pytest.raises(ValueError):
        RewardParams(crash_penalty=0.0)


def test_backprop_single_transition_identity():
    episode = make_episode(False, length=1, terminal_time=10.0, crashed=False)
    spread = backpropagate_returns(episode, RewardParams())
    assert spread.transitions[0].r == -10.0


def test_backprop_three_transitions_closed_form():
    episode = make_episode(False, length=3, terminal_time=10.0, crashed=False)
    spread = backpropagate_returns(episode, RewardParams())
    # Independent closed-form oracle: gamma^(T-i) * r_T.
    assert [tr.r for tr in spread.transitions] == pytest.approx(
        [-8.1, -9.0, -10.0], abs=1e-12
    )


def test_backprop_telescoping_is_exact():
    params = RewardParams()
    rng = np.random.default_rng(3)
    for _ in range(50):
        episode = make_episode(
            False,
            length=int(rng.integers(1, 7)),
            terminal_time=float(rng.uniform(0, 60)),
            crashed=bool(rng.random() < 0.5),
        )
        spread = backpropagate_returns(episode, params)
        rewards = [tr.r for tr in spread.transitions]
        for i in range(len(rewards) - 1):
            assert rewards[i] == params.gamma * rewards[i + 1]
        assert all(abs(a) <= abs(b) for a, b in zip(rewards, rewards[1:]))


def test_backprop_preserves_states_and_actions():
    episode = make_episode(False, length=4, terminal_time=7.0, crashed=True)
    spread = backpropagate_returns(episode, RewardParams())
    assert len(spread.transitions) == len(episode.transitions)
    for before, after in zip(episode.transitions, spread.transitions):
        assert after.s is before.s
        assert after.s_next is before.s_next
        assert after.a is before.a
        assert after.terminal == before.terminal


def test_backprop_rejects_malformed_episode():
    good = make_episode(False, length=3, terminal_time=5.0, crashed=False)
    # Terminal flag not on the last transition.
    broken = dataclasses.replace(
        good,
        transitions=(
            dataclasses.replace(good.transitions[0], terminal=True),
            *good.transitions[1:],
        ),
    )
    with pytest.raises(MalformedEpisodeError):
        backpropagate_returns(broken, RewardParams())
    empty = dataclasses.replace(good, transitions=())
    with pytest.raises(MalformedEpisodeError):
        backpropagate_returns(empty, RewardParams())


def test_transition_carries_episode_structure():
    episode = make_episode(False, length=2, terminal_time=3.0, crashed=False)
    assert isinstance(episode.transitions[0], Transition)
    assert not episode.transitions[0].terminal
    assert episode.transitions[-1].terminal
