"""Autonomous-vehicle decision making: paired Q-networks and replay training.

The pair holds a music-unaware net over 8-feature states and a music-aware
net over 9-feature states; both train on every trial's episode. Action
selection is uniform-random during exploration and greedy under the phase's
model during exploitation, with argmax ties broken toward the lowest action
index.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .fast_train import replay_sweep
from .mdp import Action, EpisodeTrace, MusicCondition, RewardParams, Transition, encode_state
from .net import Network, NetworkSpec, forward, init_network
from .sim import WorldConfig, WorldState

TRAIN_ITERATIONS = 100
TRAIN_SAMPLE_SIZE = 20

UNAWARE_DIM = 8
AWARE_DIM = 9


class AgentMode(enum.Enum):
    EXPLORE = "explore"
    EXPLOIT_UNAWARE = "exploit_unaware"
    EXPLOIT_AWARE = "exploit_aware"


@dataclass
class ModelPair:
    unaware: Network
    aware: Network

    def __post_init__(self) -> None:
        if self.unaware.spec.input_dim != UNAWARE_DIM:
            raise ValueError("unaware network must take 8 features")
        if self.aware.spec.input_dim != AWARE_DIM:
            raise ValueError("aware network must take 9 features")


def new_model_pair(rng: np.random.Generator) -> ModelPair:
    return ModelPair(
        unaware=init_network(NetworkSpec(input_dim=UNAWARE_DIM), rng),
        aware=init_network(NetworkSpec(input_dim=AWARE_DIM), rng),
    )


class ReplayHistory:
    """Append-only episode store with packed transition buffers for training."""

    def __init__(self) -> None:
        self.episodes: list[EpisodeTrace] = []
        self._cap = 256
        self._len = 0
        self._s8 = np.empty((self._cap, UNAWARE_DIM))
        self._s9 = np.empty((self._cap, AWARE_DIM))
        self._s8n = np.empty((self._cap, UNAWARE_DIM))
        self._s9n = np.empty((self._cap, AWARE_DIM))
        self._a = np.empty(self._cap, dtype=np.int64)
        self._r = np.empty(self._cap)
        self._term = np.empty(self._cap, dtype=np.bool_)
        self._starts: list[int] = []
        self._ends: list[int] = []

    def __len__(self) -> int:
        return len(self.episodes)

    def _grow(self, need: int) -> None:
        while self._cap < need:
            self._cap *= 2
        for name in ("_s8", "_s9", "_s8n", "_s9n", "_a", "_r", "_term"):
            old = getattr(self, name)
            fresh = np.empty((self._cap, *old.shape[1:]), dtype=old.dtype)
            fresh[: self._len] = old[: self._len]
            setattr(self, name, fresh)

    def append(self, episode: EpisodeTrace) -> None:
        n = len(episode.transitions)
        if self._len + n > self._cap:
            self._grow(self._len + n)
        start = self._len
        for i, tr in enumerate(episode.transitions):
            row = start + i
            self._s9[row] = tr.s.features
            self._s8[row] = tr.s.features[:UNAWARE_DIM]
            self._s9n[row] = tr.s_next.features
            self._s8n[row] = tr.s_next.features[:UNAWARE_DIM]
            self._a[row] = int(tr.a)
            self._r[row] = tr.r
            self._term[row] = tr.terminal
        self._len = start + n
        self._starts.append(start)
        self._ends.append(self._len)
        self.episodes.append(episode)

    def episode_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            np.asarray(self._starts, dtype=np.int64),
            np.asarray(self._ends, dtype=np.int64),
        )


def mode_for_trial(
    trial_index: int,
    counterbalance_aware_first: bool,
    total_trials: int = 192,
) -> AgentMode:
    """Phase schedule: first half explore, then two counterbalanced quarters."""
    if not 0 <= trial_index < total_trials:
        raise ValueError(f"trial index {trial_index} outside [0, {total_trials})")
    explore_end = total_trials // 2
    second_half = (3 * total_trials) // 4
    if trial_index < explore_end:
        return AgentMode.EXPLORE
    first = AgentMode.EXPLOIT_AWARE if counterbalance_aware_first else AgentMode.EXPLOIT_UNAWARE
    second = AgentMode.EXPLOIT_UNAWARE if counterbalance_aware_first else AgentMode.EXPLOIT_AWARE
    return first if trial_index < second_half else second


def select_action(
    mode: AgentMode,
    pair: ModelPair,
    world: WorldState,
    condition: MusicCondition,
    cfg: WorldConfig,
    rng: np.random.Generator,
) -> Action:
    if mode is AgentMode.EXPLORE:
        return Action(int(rng.integers(0, 3)))
    if mode is AgentMode.EXPLOIT_UNAWARE:
        state = encode_state(world, condition, aware=False, cfg=cfg)
        q = forward(pair.unaware, state.features)
    else:
        state = encode_state(world, condition, aware=True, cfg=cfg)
        q = forward(pair.aware, state.features)
    return Action(int(np.argmax(q)))  # first maximum = lowest action index


def q_target(tr: Transition, network: Network, gamma: float) -> float:
    """Bootstrap target r + gamma * max_a' Q(s', a'); terminal transitions use r alone."""
    if tr.terminal:
        return tr.r
    view = (
        tr.s_next.features
        if network.spec.input_dim == AWARE_DIM
        else tr.s_next.unaware_view()
    )
    return tr.r + gamma * float(np.max(forward(network, view)))


def sample_episode_indices(
    rng: np.random.Generator, n_episodes: int, k: int = TRAIN_SAMPLE_SIZE
) -> np.ndarray:
    """Uniform draw of k episode indices with replacement."""
    return rng.integers(0, n_episodes, size=k)


@dataclass(frozen=True)
class TrainStats:
    iterations: int
    transitions_per_net: int
    mean_loss_unaware: float
    mean_loss_aware: float


def train_after_trial(
    pair: ModelPair,
    history: ReplayHistory,
    params: RewardParams,
    lr: float,
    rng: np.random.Generator,
    iterations: int = TRAIN_ITERATIONS,
    sample_size: int = TRAIN_SAMPLE_SIZE,
    target_scale: float = 1.0,
) -> TrainStats:
    """Replay training: per iteration, draw episodes with replacement and run
    one SGD step per transition on each network (8-feature view for the
    unaware net, 9-feature view for the aware net).

    ``target_scale`` divides rewards during training so the networks learn
    Q in rescaled units; greedy action selection is unaffected, and small
    nets stay clear of rectifier die-off when crash penalties dwarf typical
    completion times.
    """
    if len(history) == 0:
        raise ValueError("replay history is empty")
    if target_scale <= 0:
        raise ValueError("target_scale must be positive")
    assert pair.unaware.spec.input_dim == UNAWARE_DIM
    assert pair.aware.spec.input_dim == AWARE_DIM
    starts_all, ends_all = history.episode_bounds()
    rewards = history._r if target_scale == 1.0 else history._r / target_scale
    loss_u = 0.0
    loss_a = 0.0
    steps = 0
    for _ in range(iterations):
        idx = sample_episode_indices(rng, len(history), sample_size)
        starts = starts_all[idx]
        ends = ends_all[idx]
        lu, n = replay_sweep(
            pair.unaware, history._s8, history._s8n, history._a, rewards,
            history._term, starts, ends, params.gamma, lr,
        )
        la, _ = replay_sweep(
            pair.aware, history._s9, history._s9n, history._a, rewards,
            history._term, starts, ends, params.gamma, lr,
        )
        loss_u += lu
        loss_a += la
        steps += n
    return TrainStats(
        iterations=iterations,
        transitions_per_net=steps,
        mean_loss_unaware=loss_u / max(steps, 1),
        mean_loss_aware=loss_a / max(steps, 1),
    )
