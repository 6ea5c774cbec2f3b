"""Fixed-timestep two-vehicle intersection world.

The autonomous vehicle travels along x, the human-driven vehicle along y;
the two tracks cross inside a square zone centered at
``intersection_center``. Each vehicle occupies the interval
``[progress, progress + vehicle_length]`` along its own travel axis and a
band of ``vehicle_width`` centered on the crossing lane laterally, so the
leading edge of a vehicle is ``progress + vehicle_length``.

``step`` is a pure function on immutable state: identical (config, command
sequence) pairs reproduce bit-identical trajectories. Elapsed time is kept
as an integer step count times dt, never a float accumulator.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np


class TerminalWorldError(RuntimeError):
    """Raised when `step` is called on a world that already ended."""


@dataclass(frozen=True)
class WorldConfig:
    road_length: float = 1.0
    intersection_center: float = 0.5
    # Sized so the intersection-entry decision comes too late for braking to
    # keep the nose out of the crossing band at any approach speed: the
    # crossing is committed at the earlier decision points.
    intersection_half_width: float = 0.025
    vehicle_length: float = 0.08
    vehicle_width: float = 0.04
    dt: float = 0.05
    speed_fast: float = 0.25
    speed_slow: float = 0.125
    speed_reverse: float = 0.125
    accel_limit: float = 1.0
    max_trial_time: float = 60.0

    def __post_init__(self) -> None:
        positive = [
            ("road_length", self.road_length),
            ("intersection_half_width", self.intersection_half_width),
            ("vehicle_length", self.vehicle_length),
            ("vehicle_width", self.vehicle_width),
            ("dt", self.dt),
            ("speed_fast", self.speed_fast),
            ("speed_slow", self.speed_slow),
            ("speed_reverse", self.speed_reverse),
            ("accel_limit", self.accel_limit),
            ("max_trial_time", self.max_trial_time),
        ]
        for name, value in positive:
            if not value > 0:
                raise ValueError(f"world.{name} must be strictly positive, got {value}")
        if not self.speed_fast > self.speed_slow:
            raise ValueError("world.speed_fast must exceed world.speed_slow")
        if self.intersection_half_width < self.vehicle_width / 2:
            raise ValueError(
                "world.intersection_half_width must be at least vehicle_width/2"
            )

    @property
    def intersection_entry(self) -> float:
        """Progress at which a vehicle's leading edge touches the crossing zone."""
        return (
            self.intersection_center
            - self.intersection_half_width
            - self.vehicle_length
        )

    @property
    def midpoint(self) -> float:
        return self.intersection_entry / 2.0


@dataclass(frozen=True)
class VehicleState:
    progress: float = 0.0
    speed: float = 0.0
    waiting: bool = False
    wait_remaining: float = 0.0
    reached_end: bool = False


@dataclass(frozen=True)
class WorldState:
    agent: VehicleState
    human: VehicleState
    steps: int = 0
    elapsed: float = 0.0
    crashed: bool = False


class DecisionPoint(enum.Enum):
    START = "start"
    MIDPOINT = "midpoint"
    INTERSECTION_ENTRY = "intersection_entry"
    POST_WAIT = "post_wait"


@dataclass(frozen=True)
class TrialOutcome:
    crashed: bool
    timed_out: bool
    agent_completion_time: float | None
    human_completion_time: float | None
    aborted: bool = False

    def __post_init__(self) -> None:
        if self.crashed and (
            self.agent_completion_time is not None
            or self.human_completion_time is not None
        ):
            raise ValueError("crashed trials carry no completion times")
        if (
            not self.crashed
            and not self.timed_out
            and not self.aborted
            and (self.agent_completion_time is None or self.human_completion_time is None)
        ):
            raise ValueError("clean trials must carry both completion times")


def initial_world() -> WorldState:
    return WorldState(agent=VehicleState(), human=VehicleState())


def is_terminal(world: WorldState, cfg: WorldConfig) -> bool:
    return (
        world.crashed
        or (world.agent.reached_end and world.human.reached_end)
        or world.elapsed >= cfg.max_trial_time
    )


def _advance(vehicle: VehicleState, target_speed: float, cfg: WorldConfig) -> VehicleState:
    if vehicle.reached_end:
        return replace(vehicle, speed=0.0)
    if vehicle.waiting:
        remaining = vehicle.wait_remaining - cfg.dt
        if remaining <= 1e-12:
            return replace(vehicle, speed=0.0, waiting=False, wait_remaining=0.0)
        return replace(vehicle, speed=0.0, wait_remaining=remaining)
    dv = target_speed - vehicle.speed
    limit = cfg.accel_limit * cfg.dt
    if dv > limit:
        dv = limit
    elif dv < -limit:
        dv = -limit
    speed = vehicle.speed + dv
    progress = vehicle.progress + speed * cfg.dt
    if progress <= 0.0:
        progress = 0.0
    reached = vehicle.reached_end
    if progress >= cfg.road_length:
        progress = cfg.road_length
        reached = True
    return replace(vehicle, progress=progress, speed=speed, reached_end=reached)


def step(
    world: WorldState,
    cfg: WorldConfig,
    human_target_speed: float,
    agent_target_speed: float,
) -> WorldState:
    """Advance one dt. Target speeds are signed; reverse is human-only by convention."""
    if is_terminal(world, cfg):
        raise TerminalWorldError("cannot step a terminal world")
    agent = _advance(world.agent, agent_target_speed, cfg)
    human = _advance(world.human, human_target_speed, cfg)
    crashed = world.crashed or detect_collision(agent, human, cfg)
    steps = world.steps + 1
    return WorldState(
        agent=agent,
        human=human,
        steps=steps,
        elapsed=steps * cfg.dt,
        crashed=crashed,
    )


def detect_collision(agent: VehicleState, human: VehicleState, cfg: WorldConfig) -> bool:
    """Strict rectangle overlap; rectangles that merely touch do not collide."""
    c = cfg.intersection_center
    half_w = cfg.vehicle_width / 2.0
    length = cfg.vehicle_length
    # Agent rectangle: x in [p_a, p_a + L], y in [c - w/2, c + w/2].
    # Human rectangle: y in [p_h, p_h + L], x in [c - w/2, c + w/2].
    ax0, ax1 = agent.progress, agent.progress + length
    hy0, hy1 = human.progress, human.progress + length
    bx0, bx1 = c - half_w, c + half_w
    by0, by1 = c - half_w, c + half_w
    return ax0 < bx1 and bx0 < ax1 and hy0 < by1 and by0 < hy1


def decision_point(
    agent_prev: VehicleState | None,
    agent_now: VehicleState,
    cfg: WorldConfig,
    elapsed: float,
) -> DecisionPoint | None:
    """Decision point reached at the current agent state, if any.

    Start fires exactly once, at the trial's initial state (no previous
    state, elapsed 0). Midpoint and IntersectionEntry fire when progress
    crossed their thresholds during the last step; PostWait fires when the
    wait timer expired during the last step.
    """
    if agent_prev is None:
        return DecisionPoint.START if elapsed == 0.0 else None
    if agent_prev.waiting and not agent_now.waiting:
        return DecisionPoint.POST_WAIT
    entry = cfg.intersection_entry
    if agent_prev.progress < entry <= agent_now.progress:
        return DecisionPoint.INTERSECTION_ENTRY
    mid = cfg.midpoint
    if agent_prev.progress < mid <= agent_now.progress:
        return DecisionPoint.MIDPOINT
    return None


def sample_wait(rng: np.random.Generator) -> float:
    """Randomized stop duration, uniform over [3, 5] seconds."""
    return float(rng.uniform(3.0, 5.0))


def arm_agent_wait(world: WorldState, duration: float) -> WorldState:
    """Put the stopped agent into a timed wait; PostWait fires on expiry."""
    if world.agent.speed != 0.0:
        raise ValueError("wait timer can only be armed on a stopped agent")
    agent = replace(world.agent, waiting=True, wait_remaining=duration)
    return replace(world, agent=agent)
