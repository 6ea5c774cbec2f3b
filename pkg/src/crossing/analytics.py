"""Log-driven analyses: completion times, speeds, action use, crash rates.

All analyses are pure functions of session logs. Completion-time and speed
aggregates pool trial values across sessions unpaired and exclude crashed,
timed-out, and aborted trials; crash rates are computed per session first
(crashes over counted trials, timeouts stay in the denominator) and then
aggregated across sessions; action frequencies count decision events from
all non-aborted trials, crashed ones included. Empty selections are
reported as absent (None), never as zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .logs import read_log
from .stats import Aggregate, TestResult, aggregate, mann_whitney_u, welch_t

MODES = ("explore", "exploit_unaware", "exploit_aware")
CONDITIONS = ("happy", "sad")
ACTIONS = ("FAST", "SLOW", "BRAKE")
DECISION_POINTS = ("start", "midpoint", "intersection_entry", "post_wait")


@dataclass(frozen=True)
class TrialRow:
    session: str
    trial_index: int
    block_index: int
    condition: str
    mode: str
    crashed: bool
    timed_out: bool
    aborted: bool
    agent_time: float | None
    human_time: float | None
    decisions: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class SessionData:
    name: str
    road_length: float
    rows: tuple[TrialRow, ...]


def session_from_events(events: list[dict], name: str) -> SessionData:
    road_length = float(events[0]["config"]["world"]["road_length"])
    rows: list[TrialRow] = []
    pending: dict | None = None
    decisions: list[tuple[str, str]] = []
    for event in events:
        kind = event["kind"]
        if kind == "trial_start":
            pending = event
            decisions = []
        elif kind == "decision" and pending is not None:
            decisions.append((event["point"], event["action"]))
        elif kind == "trial_end":
            outcome = event["outcome"]
            if pending is None:
                continue
            rows.append(
                TrialRow(
                    session=name,
                    trial_index=event["trial_index"],
                    block_index=pending["block_index"],
                    condition=pending["condition"],
                    mode=pending["mode"],
                    crashed=outcome["crashed"],
                    timed_out=outcome["timed_out"],
                    aborted=outcome["aborted"],
                    agent_time=outcome["agent_time"],
                    human_time=outcome["human_time"],
                    decisions=tuple(decisions),
                )
            )
            pending = None
    return SessionData(name=name, road_length=road_length, rows=tuple(rows))


def load_session(path: str | Path) -> SessionData:
    path = Path(path)
    return session_from_events(read_log(path), name=path.stem)


def _match(row: TrialRow, mode: str | None, condition: str | None) -> bool:
    if row.aborted:
        return False
    if mode is not None and row.mode != mode:
        return False
    if condition is not None and row.condition != condition:
        return False
    return True


def completion_values(
    sessions: list[SessionData],
    mode: str | None = None,
    condition: str | None = None,
    vehicle: str = "agent",
) -> list[float]:
    """Pooled completion times over clean trials (unpaired across sessions)."""
    if vehicle not in ("agent", "human"):
        raise ValueError("vehicle must be 'agent' or 'human'")
    values = []
    for session in sessions:
        for row in session.rows:
            if not _match(row, mode, condition) or row.crashed or row.timed_out:
                continue
            value = row.agent_time if vehicle == "agent" else row.human_time
            if value is not None:
                values.append(value)
    return values


def completion_aggregate(
    sessions: list[SessionData],
    mode: str | None = None,
    condition: str | None = None,
    vehicle: str = "agent",
) -> Aggregate | None:
    values = completion_values(sessions, mode, condition, vehicle)
    return aggregate(values) if values else None


def speed_values(
    sessions: list[SessionData],
    mode: str | None = None,
    condition: str | None = None,
) -> list[float]:
    """Average agent driving speed per clean trial: distance over time."""
    values = []
    for session in sessions:
        for row in session.rows:
            if not _match(row, mode, condition) or row.crashed or row.timed_out:
                continue
            if row.agent_time:
                values.append(session.road_length / row.agent_time)
    return values


def crash_rate(
    sessions: list[SessionData],
    mode: str | None = None,
    condition: str | None = None,
) -> Aggregate | None:
    """Per-session crash fraction, aggregated across sessions."""
    rates = []
    for session in sessions:
        counted = [row for row in session.rows if _match(row, mode, condition)]
        if not counted:
            continue
        rates.append(sum(1 for row in counted if row.crashed) / len(counted))
    return aggregate(rates) if rates else None


def crash_values_per_session(
    sessions: list[SessionData],
    mode: str | None = None,
    condition: str | None = None,
) -> list[float]:
    agg = crash_rate(sessions, mode, condition)
    return list(agg.values) if agg else []


def action_frequency(
    sessions: list[SessionData],
    mode: str | None = None,
    condition: str | None = None,
    decision_point: str | None = None,
) -> dict[str, float] | None:
    """Frequency of each action among matching decision events; sums to 1."""
    counts = {action: 0 for action in ACTIONS}
    total = 0
    for session in sessions:
        for row in session.rows:
            if not _match(row, mode, condition):
                continue
            for point, action in row.decisions:
                if decision_point is not None and point != decision_point:
                    continue
                counts[action] += 1
                total += 1
    if total == 0:
        return None
    return {action: counts[action] / total for action in ACTIONS}


def _agg_payload(agg: Aggregate | None) -> dict | None:
    if agg is None:
        return None
    return {"n": agg.n, "mean": agg.mean, "std_error": agg.std_error}


def _test_payload(result: TestResult) -> dict:
    return {
        "statistic": result.statistic,
        "p_value": result.p_value,
        "test_kind": result.test_kind,
    }


def _pair_tests(sample_a: list[float], sample_b: list[float]) -> dict | None:
    if len(sample_a) < 2 or len(sample_b) < 2:
        return None
    return {
        "mann_whitney": _test_payload(mann_whitney_u(sample_a, sample_b)),
        "welch_t": _test_payload(welch_t(sample_a, sample_b)),
    }


def build_report(sessions: list[SessionData]) -> dict:
    """The full analysis suite as one JSON-serializable mapping."""
    phase_completion = {
        mode: _agg_payload(completion_aggregate(sessions, mode=mode)) for mode in MODES
    }
    condition_split = {
        condition: {
            mode: _agg_payload(completion_aggregate(sessions, mode=mode, condition=condition))
            for mode in MODES[1:]
        }
        for condition in CONDITIONS
    }
    speed = {}
    for condition in (*CONDITIONS, None):
        key = condition or "overall"
        unaware = speed_values(sessions, mode="exploit_unaware", condition=condition)
        aware = speed_values(sessions, mode="exploit_aware", condition=condition)
        entry = {
            "exploit_unaware": _agg_payload(aggregate(unaware) if unaware else None),
            "exploit_aware": _agg_payload(aggregate(aware) if aware else None),
        }
        if unaware and aware:
            entry["aware_minus_unaware"] = sum(aware) / len(aware) - sum(unaware) / len(unaware)
        else:
            entry["aware_minus_unaware"] = None
        speed[key] = entry
    frequencies = {
        "overall": {
            mode: {
                condition: action_frequency(sessions, mode=mode, condition=condition)
                for condition in CONDITIONS
            }
            for mode in MODES
        },
        "intersection_entry": {
            mode: {
                condition: action_frequency(
                    sessions, mode=mode, condition=condition,
                    decision_point="intersection_entry",
                )
                for condition in CONDITIONS
            }
            for mode in MODES
        },
    }
    crash = {
        mode: {
            "happy": _agg_payload(crash_rate(sessions, mode=mode, condition="happy")),
            "sad": _agg_payload(crash_rate(sessions, mode=mode, condition="sad")),
            "overall": _agg_payload(crash_rate(sessions, mode=mode)),
        }
        for mode in MODES
    }

    completion = {
        mode: completion_values(sessions, mode=mode) for mode in MODES
    }
    tests = {
        "completion_explore_vs_exploit_unaware": _pair_tests(
            completion["explore"], completion["exploit_unaware"]
        ),
        "completion_explore_vs_exploit_aware": _pair_tests(
            completion["explore"], completion["exploit_aware"]
        ),
        "completion_exploit_unaware_vs_aware": _pair_tests(
            completion["exploit_unaware"], completion["exploit_aware"]
        ),
    }
    for condition in CONDITIONS:
        tests[f"completion_exploit_unaware_vs_aware_{condition}"] = _pair_tests(
            completion_values(sessions, mode="exploit_unaware", condition=condition),
            completion_values(sessions, mode="exploit_aware", condition=condition),
        )
    tests["speed_exploit_unaware_vs_aware"] = _pair_tests(
        speed_values(sessions, mode="exploit_unaware"),
        speed_values(sessions, mode="exploit_aware"),
    )
    tests["crash_rate_exploit_unaware_vs_aware"] = _pair_tests(
        crash_values_per_session(sessions, mode="exploit_unaware"),
        crash_values_per_session(sessions, mode="exploit_aware"),
    )

    return {
        "sessions": sorted(s.name for s in sessions),
        "phase_completion_time": phase_completion,
        "condition_split_completion_time": condition_split,
        "speed": speed,
        "action_frequency": frequencies,
        "crash_rate": crash,
        "tests": tests,
    }


def _fmt_agg(payload: dict | None) -> str:
    if payload is None:
        return "absent".rjust(24)
    return f"{payload['mean']:10.3f} +/- {payload['std_error']:6.3f} (n={payload['n']:4d})"


def format_report_text(report: dict) -> str:
    lines: list[str] = []

    def header(title: str) -> None:
        lines.append("")
        lines.append(title)
        lines.append("-" * len(title))

    header("Agent completion time by phase (s)")
    for mode in MODES:
        lines.append(f"  {mode:18s} {_fmt_agg(report['phase_completion_time'][mode])}")

    header("Agent completion time by condition (s)")
    for condition in CONDITIONS:
        for mode in MODES[1:]:
            payload = report["condition_split_completion_time"][condition][mode]
            lines.append(f"  {condition:6s} {mode:18s} {_fmt_agg(payload)}")

    header("Agent driving speed (units/s)")
    for key in (*CONDITIONS, "overall"):
        entry = report["speed"][key]
        diff = entry["aware_minus_unaware"]
        diff_text = "absent" if diff is None else f"{diff:+.4f}"
        lines.append(
            f"  {key:8s} unaware {_fmt_agg(entry['exploit_unaware'])}   "
            f"aware {_fmt_agg(entry['exploit_aware'])}   aware-unaware {diff_text}"
        )

    for family, title in (
        ("overall", "Action frequencies, all decision points"),
        ("intersection_entry", "Action frequencies at the intersection decision point"),
    ):
        header(title)
        for mode in MODES:
            for condition in CONDITIONS:
                freq = report["action_frequency"][family][mode][condition]
                if freq is None:
                    cells = "absent"
                else:
                    cells = "  ".join(f"{a}={freq[a]:.3f}" for a in ACTIONS)
                lines.append(f"  {mode:18s} {condition:6s} {cells}")

    header("Crash rate by phase and condition")
    for mode in MODES:
        entry = report["crash_rate"][mode]
        lines.append(
            f"  {mode:18s} happy {_fmt_agg(entry['happy'])}   sad {_fmt_agg(entry['sad'])}   "
            f"overall {_fmt_agg(entry['overall'])}"
        )

    header("Significance tests")
    for name, payload in report["tests"].items():
        if payload is None:
            lines.append(f"  {name:46s} absent")
            continue
        mw = payload["mann_whitney"]
        wt = payload["welch_t"]
        lines.append(
            f"  {name:46s} MW U={mw['statistic']:10.1f} p={mw['p_value']:.3e}   "
            f"t={wt['statistic']:8.3f} p={wt['p_value']:.3e}"
        )
    lines.append("")
    return "\n".join(lines)
