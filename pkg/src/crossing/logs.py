"""Append-only JSONL session logs: one event object per line.

Every event carries a strictly increasing ``seq`` and a ``kind`` from the
fixed event set; ``session_start`` additionally carries the schema version
and the full config snapshot, which is what makes logs replayable. Synthetic
logs contain no wall-clock timestamps, so identical runs produce identical
bytes; live mode records times in a ``.times`` sidecar keyed by seq.
"""

from __future__ import annotations

import json
import time
from pathlib import Path
from typing import Any, Iterator

import jsonschema

SCHEMA_VERSION = 1

EVENT_KINDS = (
    "session_start",
    "block_start",
    "trial_start",
    "decision",
    "human_command",
    "state_sample",
    "trial_end",
    "train_stats",
    "session_end",
)

_OUTCOME_SCHEMA = {
    "type": "object",
    "properties": {
        "crashed": {"type": "boolean"},
        "timed_out": {"type": "boolean"},
        "aborted": {"type": "boolean"},
        "agent_time": {"type": ["number", "null"]},
        "human_time": {"type": ["number", "null"]},
    },
    "required": ["crashed", "timed_out", "aborted", "agent_time", "human_time"],
    "additionalProperties": False,
}

_PAYLOAD_SCHEMAS: dict[str, dict] = {
    "session_start": {
        "type": "object",
        "properties": {
            "schema_version": {"const": SCHEMA_VERSION},
            "seed": {"type": "integer"},
            "aware_first": {"type": "boolean"},
            "live": {"type": "boolean"},
            "config": {"type": "object"},
            "plan": {
                "type": "object",
                "properties": {
                    "blocks": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "properties": {
                                "block_index": {"type": "integer"},
                                "condition": {"enum": ["happy", "sad"]},
                                "track_id": {"type": "string"},
                            },
                            "required": ["block_index", "condition", "track_id"],
                        },
                    },
                    "trials_per_block": {"type": "integer"},
                },
                "required": ["blocks", "trials_per_block"],
            },
        },
        "required": ["schema_version", "seed", "aware_first", "live", "config", "plan"],
    },
    "block_start": {
        "type": "object",
        "properties": {
            "block_index": {"type": "integer"},
            "condition": {"enum": ["happy", "sad"]},
            "track_id": {"type": "string"},
            "pause_ms": {"type": "integer"},
        },
        "required": ["block_index", "condition", "track_id", "pause_ms"],
    },
    "trial_start": {
        "type": "object",
        "properties": {
            "trial_index": {"type": "integer"},
            "block_index": {"type": "integer"},
            "condition": {"enum": ["happy", "sad"]},
            "mode": {"enum": ["explore", "exploit_unaware", "exploit_aware"]},
            "human_cruise": {"type": "number"},
            "human_start_lag": {"type": "number"},
        },
        "required": [
            "trial_index", "block_index", "condition", "mode",
            "human_cruise", "human_start_lag",
        ],
    },
    "decision": {
        "type": "object",
        "properties": {
            "trial_index": {"type": "integer"},
            "point": {"enum": ["start", "midpoint", "intersection_entry", "post_wait"]},
            "action": {"enum": ["FAST", "SLOW", "BRAKE"]},
            "state_unaware": {"type": "array", "items": {"type": "number"}},
            "state_aware": {"type": "array", "items": {"type": "number"}},
        },
        "required": ["trial_index", "point", "action", "state_unaware", "state_aware"],
    },
    "human_command": {
        "type": "object",
        "properties": {
            "trial_index": {"type": "integer"},
            "step": {"type": "integer"},
            "command": {"enum": ["forward", "reverse", "brake"]},
        },
        "required": ["trial_index", "step", "command"],
    },
    "state_sample": {
        "type": "object",
        "properties": {
            "trial_index": {"type": "integer"},
            "elapsed": {"type": "number"},
            "agent_pos": {"type": "number"},
            "human_pos": {"type": "number"},
            "agent_speed": {"type": "number"},
            "human_speed": {"type": "number"},
        },
        "required": [
            "trial_index", "elapsed", "agent_pos", "human_pos",
            "agent_speed", "human_speed",
        ],
    },
    "trial_end": {
        "type": "object",
        "properties": {
            "trial_index": {"type": "integer"},
            "outcome": _OUTCOME_SCHEMA,
            "reward": {"type": ["number", "null"]},
        },
        "required": ["trial_index", "outcome", "reward"],
    },
    "train_stats": {
        "type": "object",
        "properties": {
            "trial_index": {"type": "integer"},
            "iterations": {"type": "integer"},
            "transitions_per_net": {"type": "integer"},
            "mean_loss_unaware": {"type": "number"},
            "mean_loss_aware": {"type": "number"},
        },
        "required": ["trial_index", "iterations", "transitions_per_net"],
    },
    "session_end": {
        "type": "object",
        "properties": {
            "trials_completed": {"type": "integer"},
            "checkpoint_unaware": {"type": ["string", "null"]},
            "checkpoint_aware": {"type": ["string", "null"]},
        },
        "required": ["trials_completed"],
    },
}


def event_schema() -> dict:
    """JSON schema for a single log event line."""
    return {
        "type": "object",
        "properties": {
            "seq": {"type": "integer", "minimum": 0},
            "kind": {"enum": list(EVENT_KINDS)},
        },
        "required": ["seq", "kind"],
        "allOf": [
            {
                "if": {"properties": {"kind": {"const": kind}}},
                "then": payload,
            }
            for kind, payload in _PAYLOAD_SCHEMAS.items()
        ],
    }


class LogValidationError(ValueError):
    pass


class SessionLogWriter:
    def __init__(self, path: str | Path, record_times: bool = False) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("w")
        self._seq = 0
        self._times_fh = (
            self.path.with_suffix(self.path.suffix + ".times").open("w")
            if record_times
            else None
        )

    def write(self, kind: str, **payload: Any) -> int:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        seq = self._seq
        self._seq += 1
        event = {"seq": seq, "kind": kind, **payload}
        self._fh.write(json.dumps(event, separators=(",", ":")) + "\n")
        if self._times_fh is not None:
            self._times_fh.write(
                json.dumps({"seq": seq, "unix_time": time.time()}) + "\n"
            )
        return seq

    def flush(self) -> None:
        self._fh.flush()
        if self._times_fh is not None:
            self._times_fh.flush()

    def close(self) -> None:
        self._fh.close()
        if self._times_fh is not None:
            self._times_fh.close()

    def __enter__(self) -> "SessionLogWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def iter_events(path: str | Path) -> Iterator[dict]:
    with Path(path).open() as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise LogValidationError(f"{path}:{line_no}: invalid JSON: {exc.msg}") from exc


def read_log(path: str | Path, validate: bool = True) -> list[dict]:
    """Load a session log; optionally validate schema and sequencing."""
    events = list(iter_events(path))
    if not events:
        raise LogValidationError(f"{path}: empty log")
    if validate:
        validate_events(events, source=str(path))
    return events


def validate_events(events: list[dict], source: str = "<log>") -> None:
    first = events[0]
    if first.get("kind") != "session_start":
        raise LogValidationError(f"{source}: first event must be session_start")
    version = first.get("schema_version")
    if version != SCHEMA_VERSION:
        raise LogValidationError(
            f"{source}: unsupported schema_version {version!r} (supported: {SCHEMA_VERSION})"
        )
    validator = jsonschema.Draft202012Validator(event_schema())
    prev_seq = -1
    for i, event in enumerate(events):
        errors = sorted(validator.iter_errors(event), key=str)
        if errors:
            raise LogValidationError(
                f"{source}: event {i} (kind={event.get('kind')!r}): {errors[0].message}"
            )
        if event["seq"] <= prev_seq:
            raise LogValidationError(
                f"{source}: event {i}: seq {event['seq']} not increasing"
            )
        prev_seq = event["seq"]
