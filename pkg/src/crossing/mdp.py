"""Learning-state encoding, terminal rewards, and episode return spreading.

The learning state is an 8-feature vector in fixed order:

    [agent_x, human_y, agent_speed, human_speed, elapsed,
     agent_done, human_done, crashed]

with a trailing music flag appended when the encoding is condition-aware
(9 features). Positions and elapsed time are scaled to [-1, 1]; speeds are
divided by the fast speed; binary features are 0/1. The 8-feature prefix of
an aware encoding always equals the unaware encoding of the same world.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .sim import TrialOutcome, WorldConfig, WorldState


class Action(enum.IntEnum):
    FAST = 0
    SLOW = 1
    BRAKE = 2


class MusicCondition(enum.Enum):
    HAPPY = "happy"
    SAD = "sad"

    @property
    def flag(self) -> float:
        """State-feature encoding: happy 1.0, sad 0.0."""
        return 1.0 if self is MusicCondition.HAPPY else 0.0


class MalformedEpisodeError(ValueError):
    pass


@dataclass(frozen=True)
class StateVector:
    features: np.ndarray
    aware: bool

    def __post_init__(self) -> None:
        expected = 9 if self.aware else 8
        if self.features.shape != (expected,):
            raise ValueError(
                f"state vector must have {expected} features, got {self.features.shape}"
            )

    def unaware_view(self) -> np.ndarray:
        return self.features[:8]

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class RewardParams:
    crash_penalty: float = 100.0
    gamma: float = 0.9

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie strictly between 0 and 1")
        if not self.crash_penalty > 0:
            raise ValueError("crash_penalty must be positive")


@dataclass(frozen=True)
class Transition:
    s: StateVector
    a: Action
    r: float
    s_next: StateVector
    terminal: bool


@dataclass(frozen=True)
class EpisodeTrace:
    """One trial's transitions, stored as aware (9-feature) encodings.

    Unaware views are the 8-feature prefixes. ``terminal_time`` is the time
    the terminal reward formula uses: the agent's completion time, the
    elapsed time at a crash, or the trial cap when the agent never finished.
    """

    transitions: tuple[Transition, ...]
    outcome: TrialOutcome
    block_index: int
    trial_index: int
    condition: MusicCondition
    terminal_time: float


def encode_state(
    world: WorldState,
    condition: MusicCondition,
    aware: bool,
    cfg: WorldConfig,
) -> StateVector:
    def scale(value: float, span: float) -> float:
        return 2.0 * value / span - 1.0

    features = [
        scale(world.agent.progress, cfg.road_length),
        scale(world.human.progress, cfg.road_length),
        world.agent.speed / cfg.speed_fast,
        world.human.speed / cfg.speed_fast,
        scale(world.elapsed, cfg.max_trial_time),
        1.0 if world.agent.reached_end else 0.0,
        1.0 if world.human.reached_end else 0.0,
        1.0 if world.crashed else 0.0,
    ]
    if aware:
        features.append(condition.flag)
    return StateVector(features=np.array(features, dtype=np.float64), aware=aware)


def terminal_reward(completion_time: float, crashed: bool, params: RewardParams) -> float:
    """Episode reward: negative completion time, minus the crash penalty if crashed."""
    if completion_time < 0:
        raise ValueError("completion_time must be nonnegative")
    return -completion_time - (params.crash_penalty if crashed else 0.0)


def _validate_episode(episode: EpisodeTrace) -> None:
    if not episode.transitions:
        raise MalformedEpisodeError("episode has no transitions")
    for i, tr in enumerate(episode.transitions):
        is_last = i == len(episode.transitions) - 1
        if tr.terminal != is_last:
            raise MalformedEpisodeError(
                "exactly the last transition must be terminal"
            )


def backpropagate_returns(episode: EpisodeTrace, params: RewardParams) -> EpisodeTrace:
    """Assign each transition the discounted terminal reward gamma^(T-i) * r_T.

    Computed by multiplying gamma backward from the terminal step, so the
    telescoping identity r_i = gamma * r_{i+1} holds exactly in floats.
    """
    _validate_episode(episode)
    r_terminal = terminal_reward(episode.terminal_time, episode.outcome.crashed, params)
    rewards = [0.0] * len(episode.transitions)
    acc = r_terminal
    for i in range(len(episode.transitions) - 1, -1, -1):
        rewards[i] = acc
        acc = params.gamma * acc
    transitions = tuple(
        replace(tr, r=rewards[i]) for i, tr in enumerate(episode.transitions)
    )
    return replace(episode, transitions=transitions)
