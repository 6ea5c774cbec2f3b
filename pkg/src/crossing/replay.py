"""Deterministic log replay: re-execute a session and diff the event streams.

A log carries everything a rerun needs: the config snapshot, the session
seed, and the human command stream per trial attempt. Replay feeds the
logged commands back through the orchestrator (leaving the agent and
training RNG streams to regenerate themselves from the seed) and compares
the regenerated event stream against the original, event by event. Aborted
live-trial segments are re-executed too, so RNG draw counts line up, then
aborted at the logged point and discarded exactly like the live run did.
"""

from __future__ import annotations

import json
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .config import config_from_dict
from .driver import HumanCommand
from .logs import read_log
from .orchestrator import SessionHooks, TrialAborted, run_session


@dataclass
class TrialOccurrence:
    trial_index: int
    cruise: float
    start_lag: float
    commands: list[tuple[int, str]] = field(default_factory=list)
    n_decisions: int = 0
    last_step: int = 0
    aborted: bool = False


@dataclass(frozen=True)
class ReplayDivergence:
    seq: int
    description: str


@dataclass(frozen=True)
class ReplayReport:
    log_path: Path
    trials_compared: int
    divergence: ReplayDivergence | None

    @property
    def ok(self) -> bool:
        return self.divergence is None


def _occurrences_from_events(events: list[dict], dt: float) -> list[TrialOccurrence]:
    occurrences: list[TrialOccurrence] = []
    current: TrialOccurrence | None = None
    for event in events:
        kind = event["kind"]
        if kind == "trial_start":
            current = TrialOccurrence(
                trial_index=event["trial_index"],
                cruise=event["human_cruise"],
                start_lag=event.get("human_start_lag", 0.0),
            )
            occurrences.append(current)
        elif current is None:
            continue
        elif kind == "human_command":
            current.commands.append((event["step"], event["command"]))
            current.last_step = max(current.last_step, event["step"])
        elif kind == "decision":
            current.n_decisions += 1
        elif kind == "state_sample":
            current.last_step = max(current.last_step, int(round(event["elapsed"] / dt)))
        elif kind == "trial_end":
            current.aborted = event["outcome"]["aborted"]
            current = None
    return occurrences


class ReplaySource:
    """Human source that latches the logged command stream back in.

    For aborted occurrences the abort is raised once the replayed world has
    passed the last logged step and produced every logged decision, which is
    exactly when the live run can no longer have consumed more RNG draws.
    """

    def __init__(self, occurrences: list[TrialOccurrence]):
        self._occurrences = occurrences
        self._index = -1
        self._current: TrialOccurrence | None = None
        self._cmd_pos = 0
        self._latched = HumanCommand.FORWARD
        self.decisions_seen = 0
        self._cruise = 0.0
        self._lag = 0.0
        self._elapsed = 0.0

    def has_more(self) -> bool:
        return self._index + 1 < len(self._occurrences)

    @property
    def cruise_speed(self) -> float:
        return self._cruise

    @property
    def start_lag(self) -> float:
        return self._lag

    def begin_trial(self, condition) -> None:
        if not self.has_more():
            raise TrialAborted("log has no further trial occurrences")
        self._index += 1
        self._current = self._occurrences[self._index]
        self._cmd_pos = 0
        self._latched = HumanCommand.FORWARD
        self.decisions_seen = 0
        self._cruise = self._current.cruise
        self._lag = self._current.start_lag
        self._elapsed = 0.0

    def decide(self, world) -> HumanCommand:
        occ = self._current
        assert occ is not None
        self._elapsed = world.elapsed
        if (
            occ.aborted
            and world.steps >= occ.last_step
            and self.decisions_seen >= occ.n_decisions
        ):
            raise TrialAborted("replaying logged abort")
        while (
            self._cmd_pos < len(occ.commands)
            and occ.commands[self._cmd_pos][0] <= world.steps
        ):
            self._latched = HumanCommand(occ.commands[self._cmd_pos][1])
            self._cmd_pos += 1
        return self._latched

    def target_speed(self, command: HumanCommand) -> float:
        if command is HumanCommand.FORWARD:
            if self._elapsed < self._lag:
                return 0.0
            return self._cruise
        if command is HumanCommand.REVERSE:
            return -self._reverse_speed
        return 0.0

    def bind_world(self, reverse_speed: float) -> None:
        self._reverse_speed = reverse_speed


class _ReplayHooks(SessionHooks):
    def __init__(self, source: ReplaySource):
        self._source = source

    def on_event(self, kind: str, payload: dict) -> None:
        if kind == "decision":
            self._source.decisions_seen += 1

    def wait_for_resume(self) -> bool:
        return self._source.has_more()


def _normalize(event: dict) -> dict:
    event = dict(event)
    if event.get("kind") == "session_start":
        event.pop("live", None)
    if event.get("kind") == "session_end":
        event.pop("checkpoint_unaware", None)
        event.pop("checkpoint_aware", None)
    return event


def _first_divergence(
    logged: list[dict], replayed: list[dict]
) -> ReplayDivergence | None:
    for original, regenerated in zip(logged, replayed):
        a, b = _normalize(original), _normalize(regenerated)
        if a != b:
            keys = sorted(
                k for k in set(a) | set(b) if a.get(k) != b.get(k)
            )
            return ReplayDivergence(
                seq=original["seq"],
                description=(
                    f"event seq {original['seq']} kind {original.get('kind')}: "
                    f"fields {keys} differ: logged={json.dumps({k: a.get(k) for k in keys}, default=str)[:400]} "
                    f"replayed={json.dumps({k: b.get(k) for k in keys}, default=str)[:400]}"
                ),
            )
    if len(logged) != len(replayed):
        seq = logged[min(len(replayed), len(logged) - 1)]["seq"]
        return ReplayDivergence(
            seq=seq,
            description=(
                f"event count mismatch: logged {len(logged)}, replayed {len(replayed)}"
            ),
        )
    return None


def replay_log(path: str | Path) -> ReplayReport:
    path = Path(path)
    logged = read_log(path, validate=True)
    cfg = config_from_dict(logged[0]["config"])
    occurrences = _occurrences_from_events(logged, cfg.world.dt)
    source = ReplaySource(occurrences)
    source.bind_world(cfg.world.speed_reverse)
    hooks = _ReplayHooks(source)
    with tempfile.TemporaryDirectory(prefix="crossing-replay-") as tmp:
        out = Path(tmp) / "replay.jsonl"
        run_session(cfg, out, source=source, hooks=hooks, live=False)
        replayed = read_log(out, validate=True)
    divergence = _first_divergence(logged, replayed)
    n_trials = sum(
        1
        for e in logged
        if e["kind"] == "trial_end" and not e["outcome"]["aborted"]
    )
    return ReplayReport(log_path=path, trials_compared=n_trials, divergence=divergence)
