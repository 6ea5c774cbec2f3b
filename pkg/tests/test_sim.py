import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossing.sim import (
    DecisionPoint,
    TerminalWorldError,
    TrialOutcome,
    VehicleState,
    WorldConfig,
    WorldState,
    arm_agent_wait,
    decision_point,
    detect_collision,
    initial_world,
    is_terminal,
    sample_wait,
    step,
)
from crossing.verification import grid_overlap_oracle

CFG = WorldConfig()


def test_config_rejects_nonpositive_lengths():
    with pytest.raises(ValueError):
        WorldConfig(road_length=0.0)
    with pytest.raises(ValueError):
        WorldConfig(dt=-0.05)


def test_config_rejects_slow_not_below_fast():
    with pytest.raises(ValueError):
        WorldConfig(speed_fast=0.1, speed_slow=0.1)


def test_config_rejects_narrow_intersection():
    with pytest.raises(ValueError):
        WorldConfig(intersection_half_width=0.01, vehicle_width=0.04)


def test_one_step_euler_integration():
    # Large accel limit: speed reaches the target within one step.
    cfg = dataclasses.replace(CFG, accel_limit=100.0)
    world = step(initial_world(), cfg, 0.0, cfg.speed_fast)
    assert world.agent.progress == pytest.approx(cfg.speed_fast * cfg.dt)
    assert world.elapsed == pytest.approx(cfg.dt)


def test_step_rejects_terminal_world():
    done = VehicleState(progress=CFG.road_length, reached_end=True)
    world = WorldState(agent=done, human=done, steps=10, elapsed=0.5)
    with pytest.raises(TerminalWorldError):
        step(world, CFG, 0.0, 0.0)


def test_step_rejects_crashed_world():
    world = dataclasses.replace(initial_world(), crashed=True)
    with pytest.raises(TerminalWorldError):
        step(world, CFG, 0.0, 0.0)


def test_collision_full_overlap_at_center():
    # Both vehicle centers on the intersection center.
    p = CFG.intersection_center - CFG.vehicle_length / 2
    assert detect_collision(VehicleState(progress=p), VehicleState(progress=p), CFG)


def test_no_collision_at_start_corners():
    assert not detect_collision(VehicleState(), VehicleState(), CFG)


def test_edge_touching_is_not_a_collision():
    # Dyadic geometry so the touch is exact in floats.
    cfg = WorldConfig(
        road_length=1.0,
        intersection_center=0.5,
        intersection_half_width=0.25,
        vehicle_length=0.25,
        vehicle_width=0.25,
    )
    # Human rectangle ends exactly where the agent's lane band begins.
    human = VehicleState(progress=0.125)  # 0.125 + 0.25 == 0.375 == 0.5 - 0.125
    agent = VehicleState(progress=0.375)
    assert not detect_collision(agent, human, cfg)
    # Any positive overlap flips it.
    assert detect_collision(agent, VehicleState(progress=0.1875), cfg)


def test_collision_matches_grid_oracle_on_random_pairs():
    rng = np.random.default_rng(42)
    for _ in range(300):
        agent_p = int(rng.integers(0, 1001)) / 1000.0
        human_p = int(rng.integers(0, 1001)) / 1000.0
        got = detect_collision(
            VehicleState(progress=agent_p), VehicleState(progress=human_p), CFG
        )
        assert got == grid_overlap_oracle(agent_p, human_p, CFG)


def test_collision_symmetric_under_role_swap():
    rng = np.random.default_rng(7)
    for _ in range(200):
        a, h = rng.uniform(0, 1, size=2)
        forward = detect_collision(VehicleState(progress=a), VehicleState(progress=h), CFG)
        swapped = detect_collision(VehicleState(progress=h), VehicleState(progress=a), CFG)
        assert forward == swapped


def test_start_decision_fires_once_at_trial_start():
    world = initial_world()
    assert decision_point(None, world.agent, CFG, 0.0) is DecisionPoint.START
    assert decision_point(None, world.agent, CFG, 0.5) is None


def test_no_decision_mid_crossing():
    prev = VehicleState(progress=0.05, speed=CFG.speed_fast)
    now = VehicleState(progress=0.06, speed=CFG.speed_fast)
    assert decision_point(prev, now, CFG, 0.5) is None


def test_midpoint_and_entry_crossings():
    mid, entry = CFG.midpoint, CFG.intersection_entry
    before_mid = VehicleState(progress=mid - 0.001)
    after_mid = VehicleState(progress=mid + 0.001)
    assert decision_point(before_mid, after_mid, CFG, 1.0) is DecisionPoint.MIDPOINT
    before_entry = VehicleState(progress=entry - 0.001)
    after_entry = VehicleState(progress=entry + 0.001)
    assert (
        decision_point(before_entry, after_entry, CFG, 2.0)
        is DecisionPoint.INTERSECTION_ENTRY
    )
    # Landing exactly on the threshold counts as crossing it.
    on_mid = VehicleState(progress=mid)
    assert decision_point(before_mid, on_mid, CFG, 1.0) is DecisionPoint.MIDPOINT


def test_post_wait_fires_on_expiry():
    world = initial_world()
    world = arm_agent_wait(world, 0.02)
    after = step(world, CFG, 0.0, 0.0)
    assert not after.agent.waiting
    assert after.agent.wait_remaining == 0.0
    assert decision_point(world.agent, after.agent, CFG, after.elapsed) is DecisionPoint.POST_WAIT


def test_waiting_holds_position_and_decrements():
    world = arm_agent_wait(initial_world(), 0.2)
    after = step(world, CFG, 0.0, CFG.speed_fast)
    assert after.agent.speed == 0.0
    assert after.agent.progress == 0.0
    assert after.agent.wait_remaining == pytest.approx(0.15)


def test_arm_wait_requires_stopped_agent():
    moving = WorldState(
        agent=VehicleState(progress=0.1, speed=0.2), human=VehicleState()
    )
    with pytest.raises(ValueError):
        arm_agent_wait(moving, 3.0)


def test_sample_wait_bounds_and_determinism():
    rng = np.random.default_rng(5)
    draws = [sample_wait(rng) for _ in range(1000)]
    assert all(3.0 <= d <= 5.0 for d in draws)
    rng2 = np.random.default_rng(5)
    assert draws[:10] == [sample_wait(rng2) for _ in range(10)]


def test_sample_wait_mean():
    rng = np.random.default_rng(11)
    draws = [sample_wait(rng) for _ in range(10_000)]
    assert np.mean(draws) == pytest.approx(4.0, abs=0.05)


@given(
    seed=st.integers(0, 2**31),
    steps=st.integers(1, 120),
)
@settings(max_examples=40, deadline=None)
def test_progress_always_clamped(seed, steps):
    rng = np.random.default_rng(seed)
    world = initial_world()
    for _ in range(steps):
        if is_terminal(world, CFG):
            break
        human_target = float(rng.uniform(-CFG.speed_reverse, CFG.speed_fast))
        agent_target = float(rng.choice([0.0, CFG.speed_slow, CFG.speed_fast]))
        world = step(world, CFG, human_target, agent_target)
        for vehicle in (world.agent, world.human):
            assert 0.0 <= vehicle.progress <= CFG.road_length
    assert world.elapsed == pytest.approx(world.steps * CFG.dt)


def test_reverse_clamps_at_zero():
    world = initial_world()
    for _ in range(10):
        world = step(world, CFG, -CFG.speed_reverse, 0.0)
    assert world.human.progress == 0.0


def test_reached_end_latches():
    world = initial_world()
    while not world.agent.reached_end:
        world = step(world, CFG, 0.0, CFG.speed_fast)
    assert world.agent.progress == CFG.road_length
    # Further steps leave the finished vehicle parked at the end.
    world = step(world, CFG, CFG.speed_fast, CFG.speed_fast)
    assert world.agent.reached_end
    assert world.agent.progress == CFG.road_length
    assert world.agent.speed == 0.0


def test_crash_is_terminal_and_sticky():
    # Drive both vehicles into the crossing zone simultaneously.
    world = initial_world()
    while not world.crashed:
        world = step(world, CFG, CFG.speed_fast, CFG.speed_fast)
    assert is_terminal(world, CFG)
    with pytest.raises(TerminalWorldError):
        step(world, CFG, 0.0, 0.0)


def test_exact_kinematics_with_dyadic_values():
    # accel_limit * dt >= s, and s * dt is a dyadic rational, so progress
    # accumulates without rounding: after n steps it equals n * dt * s.
    cfg = WorldConfig(
        dt=0.0625, speed_fast=0.25, speed_slow=0.125, accel_limit=4.0
    )
    world = initial_world()
    for n in range(1, 40):
        world = step(world, cfg, 0.0, cfg.speed_fast)
        if world.agent.reached_end:
            break
        assert world.agent.progress == n * cfg.dt * cfg.speed_fast


def test_trial_outcome_invariants():
    with pytest.raises(ValueError):
        TrialOutcome(crashed=True, timed_out=False, agent_completion_time=3.0, human_completion_time=None)
    with pytest.raises(ValueError):
        TrialOutcome(crashed=False, timed_out=False, agent_completion_time=None, human_completion_time=2.0)
    ok = TrialOutcome(crashed=False, timed_out=True, agent_completion_time=4.0, human_completion_time=None)
    assert ok.timed_out
