"""Full-session experiment runner: blocks, trials, training, and logging.

A session is ``blocks x trials_per_block`` trials with the music condition
alternating across blocks, an exploration first half, and two
counterbalanced exploitation quarters. Each trial steps the world on the
fixed dt grid, queries the agent at its decision points and the human source
every step, then spreads the terminal reward over the episode and trains
both networks on the replay history.

Randomness is split into independent streams derived from the session seed
(SeedSequence spawn order: network init, agent, driver, training), plus the
plan's own generator seeded directly with the session seed, so replaying a
log with recorded human commands leaves the agent/training streams
untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from .agent import (
    AgentMode,
    ModelPair,
    ReplayHistory,
    mode_for_trial,
    new_model_pair,
    select_action,
    train_after_trial,
)
from .config import SessionConfig, config_to_dict
from .driver import HumanCommand, SyntheticDriver
from .logs import SCHEMA_VERSION, SessionLogWriter
from .mdp import (
    Action,
    EpisodeTrace,
    MusicCondition,
    StateVector,
    Transition,
    backpropagate_returns,
    encode_state,
)
from .net import save_checkpoint
from .sim import (
    DecisionPoint,
    TrialOutcome,
    WorldConfig,
    arm_agent_wait,
    decision_point,
    initial_world,
    is_terminal,
    sample_wait,
    step,
)


class TrialAborted(Exception):
    """Raised by a human source when the participant went away mid-trial."""


class HumanSource(Protocol):
    @property
    def cruise_speed(self) -> float: ...

    @property
    def start_lag(self) -> float: ...

    def begin_trial(self, condition: MusicCondition) -> None: ...

    def decide(self, world) -> HumanCommand: ...

    def target_speed(self, command: HumanCommand) -> float: ...


class SessionHooks:
    """Extension points for live mode; the defaults do nothing."""

    def on_event(self, kind: str, payload: dict) -> None:
        pass

    def on_step(self, world, trial_index: int) -> None:
        pass

    def pause(self, reason: str, seconds: float) -> None:
        pass

    def wait_for_resume(self) -> bool:
        return False


@dataclass(frozen=True)
class PlanBlock:
    block_index: int
    condition: MusicCondition
    track_id: str


@dataclass(frozen=True)
class ExperimentPlan:
    blocks: tuple[PlanBlock, ...]
    trials_per_block: int
    counterbalance_aware_first: bool
    inter_trial_pause_s: float
    pre_block_pause_s: float
    seed: int

    def __post_init__(self) -> None:
        for prev, this in zip(self.blocks, self.blocks[1:]):
            if prev.condition is this.condition:
                raise ValueError("block conditions must strictly alternate")

    @property
    def total_trials(self) -> int:
        return len(self.blocks) * self.trials_per_block


def build_plan(
    seed: int,
    aware_first: bool,
    happy_tracks: tuple[str, ...],
    sad_tracks: tuple[str, ...],
    n_blocks: int = 16,
    trials_per_block: int = 12,
    inter_trial_pause_s: float = 3.0,
    pre_block_pause_s: float = 3.0,
) -> ExperimentPlan:
    """Alternating-condition block schedule with seeded track counterbalancing.

    The first block's condition comes from a seeded coin flip; each pool is
    dealt in a seeded permutation and cycled when blocks outnumber tracks.
    """
    if not happy_tracks or not sad_tracks:
        raise ValueError("each track pool needs at least one track")
    rng = np.random.default_rng(seed)
    first_happy = bool(rng.integers(0, 2))
    happy_order = [happy_tracks[i] for i in rng.permutation(len(happy_tracks))]
    sad_order = [sad_tracks[i] for i in rng.permutation(len(sad_tracks))]
    blocks = []
    used = {MusicCondition.HAPPY: 0, MusicCondition.SAD: 0}
    order = {MusicCondition.HAPPY: happy_order, MusicCondition.SAD: sad_order}
    for b in range(n_blocks):
        happy_block = (b % 2 == 0) == first_happy
        condition = MusicCondition.HAPPY if happy_block else MusicCondition.SAD
        pool = order[condition]
        track = pool[used[condition] % len(pool)]
        used[condition] += 1
        blocks.append(PlanBlock(block_index=b, condition=condition, track_id=track))
    return ExperimentPlan(
        blocks=tuple(blocks),
        trials_per_block=trials_per_block,
        counterbalance_aware_first=aware_first,
        inter_trial_pause_s=inter_trial_pause_s,
        pre_block_pause_s=pre_block_pause_s,
        seed=seed,
    )


@dataclass(frozen=True)
class DecisionRecord:
    point: DecisionPoint
    state: StateVector
    action: Action


@dataclass(frozen=True)
class TrialRecord:
    trial_index: int
    block_index: int
    condition: MusicCondition
    mode: AgentMode
    outcome: TrialOutcome
    episode: EpisodeTrace
    decisions: tuple[DecisionRecord, ...]
    commands: tuple[tuple[int, str], ...]


@dataclass
class SessionState:
    plan: ExperimentPlan
    pair: ModelPair
    history: ReplayHistory
    agent_rng: np.random.Generator
    train_rng: np.random.Generator
    trial_index: int = 0
    records: list[TrialRecord] = field(default_factory=list)


def derive_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent per-purpose generators (spawn order is part of the format)."""
    children = np.random.SeedSequence(seed).spawn(4)
    names = ("init", "agent", "driver", "train")
    return {name: np.random.default_rng(child) for name, child in zip(names, children)}


def new_session_state(cfg: SessionConfig) -> tuple[SessionState, np.random.Generator]:
    streams = derive_streams(cfg.seed)
    plan = build_plan(
        cfg.seed,
        cfg.aware_first,
        cfg.happy_tracks,
        cfg.sad_tracks,
        n_blocks=cfg.blocks,
        trials_per_block=cfg.trials_per_block,
        inter_trial_pause_s=cfg.inter_trial_pause_s,
        pre_block_pause_s=cfg.pre_block_pause_s,
    )
    state = SessionState(
        plan=plan,
        pair=new_model_pair(streams["init"]),
        history=ReplayHistory(),
        agent_rng=streams["agent"],
        train_rng=streams["train"],
    )
    return state, streams["driver"]


def agent_target_speed(action: Action, cfg: WorldConfig) -> float:
    if action is Action.FAST:
        return cfg.speed_fast
    if action is Action.SLOW:
        return cfg.speed_slow
    return 0.0


def _outcome_payload(outcome: TrialOutcome) -> dict:
    return {
        "crashed": outcome.crashed,
        "timed_out": outcome.timed_out,
        "aborted": outcome.aborted,
        "agent_time": outcome.agent_completion_time,
        "human_time": outcome.human_completion_time,
    }


def run_trial(
    state: SessionState,
    cfg: SessionConfig,
    source: HumanSource,
    emit: Callable[..., None],
    hooks: SessionHooks,
) -> TrialRecord:
    """One trial end to end: simulate, learn, record.

    Raises TrialAborted (after emitting nothing further) if the human source
    goes away; in that case the session state is left untouched except for
    consumed RNG draws, which replay reproduces from the logged commands.
    """
    if state.trial_index >= state.plan.total_trials:
        raise ValueError("experiment plan exhausted")
    plan = state.plan
    ti = state.trial_index
    block = plan.blocks[ti // plan.trials_per_block]
    mode = mode_for_trial(ti, plan.counterbalance_aware_first, plan.total_trials)
    condition = block.condition
    wcfg = cfg.world

    source.begin_trial(condition)
    emit(
        "trial_start",
        trial_index=ti,
        block_index=block.block_index,
        condition=condition.value,
        mode=mode.value,
        human_cruise=source.cruise_speed,
        human_start_lag=source.start_lag,
    )

    world = initial_world()
    transitions: list[Transition] = []
    decisions: list[DecisionRecord] = []
    commands: list[tuple[int, str]] = []
    pending: tuple[StateVector, Action] | None = None
    current_action = Action.BRAKE
    agent_done_at: float | None = None
    human_done_at: float | None = None

    def do_decision(point: DecisionPoint) -> None:
        nonlocal world, pending, current_action
        s9 = encode_state(world, condition, aware=True, cfg=wcfg)
        action = select_action(mode, state.pair, world, condition, wcfg, state.agent_rng)
        if pending is not None:
            transitions.append(Transition(pending[0], pending[1], 0.0, s9, False))
        pending = (s9, action)
        current_action = action
        decisions.append(DecisionRecord(point=point, state=s9, action=action))
        emit(
            "decision",
            trial_index=ti,
            point=point.value,
            action=action.name,
            state_unaware=[float(v) for v in s9.features[:8]],
            state_aware=[float(v) for v in s9.features],
        )
        if action is Action.BRAKE and world.agent.speed == 0.0 and not world.agent.waiting:
            world = arm_agent_wait(world, sample_wait(state.agent_rng))

    do_decision(DecisionPoint.START)

    sample_every = max(1, round(1.0 / (cfg.state_sample_hz * wcfg.dt)))
    last_cmd: HumanCommand | None = None
    while True:
        cmd = source.decide(world)
        if cmd is not last_cmd:
            commands.append((world.steps, cmd.value))
            emit("human_command", trial_index=ti, step=world.steps, command=cmd.value)
            last_cmd = cmd
        prev = world
        world = step(
            world, wcfg, source.target_speed(cmd), agent_target_speed(current_action, wcfg)
        )
        hooks.on_step(world, ti)
        if world.steps % sample_every == 0:
            emit(
                "state_sample",
                trial_index=ti,
                elapsed=world.elapsed,
                agent_pos=world.agent.progress,
                human_pos=world.human.progress,
                agent_speed=world.agent.speed,
                human_speed=world.human.speed,
            )
        if world.agent.reached_end and agent_done_at is None:
            agent_done_at = world.elapsed
        if world.human.reached_end and human_done_at is None:
            human_done_at = world.elapsed
        if is_terminal(world, wcfg):
            break
        if (
            current_action is Action.BRAKE
            and world.agent.speed == 0.0
            and not world.agent.waiting
            and not prev.agent.waiting
        ):
            world = arm_agent_wait(world, sample_wait(state.agent_rng))
        point = decision_point(prev.agent, world.agent, wcfg, world.elapsed)
        if point is not None:
            do_decision(point)

    crashed = world.crashed
    finished = world.agent.reached_end and world.human.reached_end
    outcome = TrialOutcome(
        crashed=crashed,
        timed_out=not crashed and not finished,
        agent_completion_time=None if crashed else agent_done_at,
        human_completion_time=None if crashed else human_done_at,
    )
    if crashed:
        terminal_time = world.elapsed
    elif agent_done_at is not None:
        terminal_time = agent_done_at
    else:
        terminal_time = wcfg.max_trial_time

    s9_terminal = encode_state(world, condition, aware=True, cfg=wcfg)
    assert pending is not None
    transitions.append(Transition(pending[0], pending[1], 0.0, s9_terminal, True))
    episode = EpisodeTrace(
        transitions=tuple(transitions),
        outcome=outcome,
        block_index=block.block_index,
        trial_index=ti,
        condition=condition,
        terminal_time=terminal_time,
    )
    episode = backpropagate_returns(episode, cfg.reward)

    emit(
        "trial_end",
        trial_index=ti,
        outcome=_outcome_payload(outcome),
        reward=episode.transitions[-1].r,
    )

    state.history.append(episode)
    if not (cfg.freeze_after_exploration and mode is not AgentMode.EXPLORE):
        stats = train_after_trial(
            state.pair,
            state.history,
            cfg.reward,
            cfg.lr,
            state.train_rng,
            target_scale=cfg.reward_scale,
        )
        emit(
            "train_stats",
            trial_index=ti,
            iterations=stats.iterations,
            transitions_per_net=stats.transitions_per_net,
            mean_loss_unaware=stats.mean_loss_unaware,
            mean_loss_aware=stats.mean_loss_aware,
        )

    record = TrialRecord(
        trial_index=ti,
        block_index=block.block_index,
        condition=condition,
        mode=mode,
        outcome=outcome,
        episode=episode,
        decisions=tuple(decisions),
        commands=tuple(commands),
    )
    state.records.append(record)
    state.trial_index += 1
    return record


@dataclass
class SessionResult:
    state: SessionState
    log_path: Path
    checkpoint_unaware: Path
    checkpoint_aware: Path
    completed: bool


def _plan_payload(plan: ExperimentPlan) -> dict:
    return {
        "blocks": [
            {
                "block_index": b.block_index,
                "condition": b.condition.value,
                "track_id": b.track_id,
            }
            for b in plan.blocks
        ],
        "trials_per_block": plan.trials_per_block,
    }


def run_session(
    cfg: SessionConfig,
    log_path: str | Path,
    source: HumanSource | None = None,
    hooks: SessionHooks | None = None,
    live: bool = False,
) -> SessionResult:
    """Run the whole experiment, writing the session log and checkpoints.

    Synthetic runs never abort. In live mode a mid-trial disconnect emits an
    aborted trial_end; the trial is retried at the same index if the hooks
    report a resume within the window, otherwise the log is finalized early.
    """
    log_path = Path(log_path)
    state, driver_rng = new_session_state(cfg)
    if source is None:
        source = SyntheticDriver(cfg.driver, cfg.world, driver_rng)
    hooks = hooks or SessionHooks()
    writer = SessionLogWriter(log_path, record_times=live)

    def emit(kind: str, **payload) -> None:
        writer.write(kind, **payload)
        hooks.on_event(kind, payload)

    emit(
        "session_start",
        schema_version=SCHEMA_VERSION,
        seed=cfg.seed,
        aware_first=cfg.aware_first,
        live=live,
        config=config_to_dict(cfg),
        plan=_plan_payload(state.plan),
    )

    completed = True
    try:
        for block in state.plan.blocks:
            if not completed:
                break
            hooks.pause("pre_block", cfg.pre_block_pause_s)
            emit(
                "block_start",
                block_index=block.block_index,
                condition=block.condition.value,
                track_id=block.track_id,
                pause_ms=int(round(cfg.pre_block_pause_s * 1000)),
            )
            block_end = (block.block_index + 1) * state.plan.trials_per_block
            while state.trial_index < block_end:
                try:
                    run_trial(state, cfg, source, emit, hooks)
                except TrialAborted:
                    outcome = TrialOutcome(
                        crashed=False,
                        timed_out=False,
                        agent_completion_time=None,
                        human_completion_time=None,
                        aborted=True,
                    )
                    emit(
                        "trial_end",
                        trial_index=state.trial_index,
                        outcome=_outcome_payload(outcome),
                        reward=None,
                    )
                    if not hooks.wait_for_resume():
                        completed = False
                        break
                    continue
                if state.trial_index < state.plan.total_trials:
                    hooks.pause("inter_trial", cfg.inter_trial_pause_s)
    finally:
        ckpt_unaware = log_path.with_name(log_path.stem + "_unaware.qnet")
        ckpt_aware = log_path.with_name(log_path.stem + "_aware.qnet")
        save_checkpoint(state.pair.unaware, ckpt_unaware)
        save_checkpoint(state.pair.aware, ckpt_aware)
        emit(
            "session_end",
            trials_completed=state.trial_index,
            checkpoint_unaware=ckpt_unaware.name,
            checkpoint_aware=ckpt_aware.name,
        )
        writer.close()

    return SessionResult(
        state=state,
        log_path=log_path,
        checkpoint_unaware=ckpt_unaware,
        checkpoint_aware=ckpt_aware,
        completed=completed,
    )
