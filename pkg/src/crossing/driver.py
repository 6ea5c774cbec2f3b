"""Synthetic human drivers whose behavior depends on the music condition.

A driver is a small per-trial finite-state machine: after a short startup
lag it accelerates toward a cruise speed sampled once per trial, runs a
one-shot stop-or-commit check while approaching the intersection (stop by
temperament or to yield to a close, moving agent), holds a sampled wait when
stopped, and crosses once committed. Committed drivers still abort up to a
speed-dependent point of no return when the agent is already occupying the
crossing zone, waiting drivers do not pull out into a conflict, and an
imminent collision triggers reverse with a per-profile probability. Command
changes are rate-limited by the profile's reaction delay, so no two changes
occur closer together than that.

Sad-profile drivers cruise slower, stop more often, and wait longer than
happy-profile drivers; that ordering is the model's load-bearing property
and the default profiles are required to satisfy it. Because slower drivers
reach their point of no return later, they see more of the agent's motion
before committing, which makes them systematically harder to collide with.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from .mdp import MusicCondition
from .sim import WorldConfig, WorldState

# Distance before the driver's own intersection entry at which the one-shot
# stop/commit check fires. Larger than yield_distance so fast agents can be
# far enough away at check time for the driver to commit.
APPROACH_CHECK_DISTANCE = 0.2

# Startup lag range (s): the forward command is held from the trial start
# but the vehicle gets rolling only after a per-trial sampled delay. Kept
# short so quick-off-the-line drivers still contest the crossing.
START_LAG_RANGE = (0.0, 0.05)

# A committed driver reacts to a developing conflict only when its lead time
# falls inside this window: threats that materialize faster go unanswered
# (beyond the occasional panic reverse), and threats further out than the
# horizon are not yet threats.
REACT_WINDOW_HORIZON = 0.8

# Committed drivers re-check the crossing at this cadence (s), with a random
# per-trial phase. A slow driver's run-up to the point of no return spans a
# full scan interval, a fast driver's often does not, so fast drivers blow
# through conflicts more often.
SCAN_CADENCE = 2.0

_MIN_CRUISE = 0.02
_MIN_WAIT = 0.2
_PONR_MARGIN = 0.01


class HumanCommand(enum.Enum):
    FORWARD = "forward"
    REVERSE = "reverse"
    BRAKE = "brake"


@dataclass(frozen=True)
class DriverProfile:
    forward_speed_mean: float
    forward_speed_sd: float
    stop_at_intersection_prob: float
    wait_mean: float
    wait_sd: float
    yield_distance: float
    reverse_prob_on_conflict: float
    reaction_delay: float

    def __post_init__(self) -> None:
        for name in (
            "forward_speed_mean",
            "forward_speed_sd",
            "wait_mean",
            "wait_sd",
            "yield_distance",
            "reaction_delay",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"driver.{name} must be nonnegative")
        for name in ("stop_at_intersection_prob", "reverse_prob_on_conflict"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"driver.{name} must lie in [0, 1]")


@dataclass(frozen=True)
class ConditionedDriver:
    happy: DriverProfile
    sad: DriverProfile

    def __post_init__(self) -> None:
        if not self.ordering_ok():
            warnings.warn(
                "driver profiles do not satisfy the expected ordering "
                "(sad slower and waiting at least as long as happy); "
                "condition-dependence checks may not hold",
                stacklevel=2,
            )

    def ordering_ok(self) -> bool:
        return (
            self.sad.forward_speed_mean < self.happy.forward_speed_mean
            and self.sad.wait_mean >= self.happy.wait_mean
        )

    def profile(self, condition: MusicCondition) -> DriverProfile:
        return self.happy if condition is MusicCondition.HAPPY else self.sad


def default_profiles() -> ConditionedDriver:
    return ConditionedDriver(
        happy=DriverProfile(
            forward_speed_mean=0.22,
            forward_speed_sd=0.02,
            stop_at_intersection_prob=0.4,
            wait_mean=1.5,
            wait_sd=0.5,
            yield_distance=0.15,
            reverse_prob_on_conflict=0.1,
            reaction_delay=0.2,
        ),
        sad=DriverProfile(
            forward_speed_mean=0.16,
            forward_speed_sd=0.02,
            stop_at_intersection_prob=0.7,
            wait_mean=2.5,
            wait_sd=0.7,
            yield_distance=0.15,
            reverse_prob_on_conflict=0.1,
            reaction_delay=0.2,
        ),
    )


class _Phase(enum.Enum):
    APPROACH = enum.auto()
    STOPPING = enum.auto()
    WAITING = enum.auto()
    CROSS = enum.auto()


class SyntheticDriver:
    """Stateful per-session driver; call begin_trial before each trial."""

    def __init__(
        self,
        profiles: ConditionedDriver,
        cfg: WorldConfig,
        rng: np.random.Generator,
    ) -> None:
        self.profiles = profiles
        self.cfg = cfg
        self.rng = rng
        self._profile = profiles.happy
        self._cruise = profiles.happy.forward_speed_mean
        self._will_stop = False
        self._wait_duration = 0.0
        self._start_lag = 0.0
        self._reset_trial_state()

    def _reset_trial_state(self) -> None:
        self._phase = _Phase.APPROACH
        self._wait_until = 0.0
        self._active = HumanCommand.FORWARD
        self._last_change = 0.0
        self._reversing = False
        self._conflict_seen = False
        self._elapsed = 0.0
        self._scan_phase = 0.0
        self._next_scan: float | None = None
        self._yielding_mid_cross = False

    @property
    def cruise_speed(self) -> float:
        return self._cruise

    @property
    def start_lag(self) -> float:
        return self._start_lag

    def begin_trial(self, condition: MusicCondition) -> None:
        p = self.profiles.profile(condition)
        self._profile = p
        cruise = self.rng.normal(p.forward_speed_mean, p.forward_speed_sd)
        will_stop = bool(self.rng.random() < p.stop_at_intersection_prob)
        wait = max(_MIN_WAIT, float(self.rng.normal(p.wait_mean, p.wait_sd)))
        lag = float(self.rng.uniform(*START_LAG_RANGE))
        scan_phase = float(self.rng.uniform(0.0, SCAN_CADENCE))
        self._reset_trial_state()
        self._cruise = float(np.clip(cruise, _MIN_CRUISE, self.cfg.speed_fast))
        self._will_stop = will_stop
        self._wait_duration = wait
        self._start_lag = lag
        self._scan_phase = scan_phase

    # -- geometry helpers --------------------------------------------------

    def _crossing_band(self) -> tuple[float, float]:
        # Progress interval in which a vehicle's rectangle overlaps the
        # other vehicle's lane band.
        c = self.cfg.intersection_center
        lo = c - self.cfg.vehicle_width / 2.0 - self.cfg.vehicle_length
        hi = c + self.cfg.vehicle_width / 2.0
        return lo, hi

    def _agent_in_band(self, world: WorldState) -> bool:
        lo, hi = self._crossing_band()
        return lo < world.agent.progress < hi

    def _agent_near_or_in_band(self, world: WorldState) -> bool:
        if self._agent_in_band(world):
            return True
        dist = self.cfg.intersection_entry - world.agent.progress
        return world.agent.speed > 1e-9 and 0.0 <= dist <= self._profile.yield_distance

    def _clear_to_pull_out(self, world: WorldState) -> bool:
        """Safe to start crossing: agent not in or about to enter the zone."""
        if self._agent_near_or_in_band(world):
            return False
        band_lo, _ = self._crossing_band()
        speed = world.agent.speed
        if speed > 1e-9 and world.agent.progress < band_lo:
            time_to_band = (band_lo - world.agent.progress) / speed
            my_transit = (band_lo - world.human.progress) / max(self._cruise, 1e-6) + 1.5
            if time_to_band < my_transit:
                return False
        return True

    def _point_of_no_return(self) -> float:
        band_lo, _ = self._crossing_band()
        braking = (
            self._cruise * self._profile.reaction_delay
            + self._cruise**2 / (2.0 * self.cfg.accel_limit)
        )
        return band_lo - braking - _PONR_MARGIN

    def _reactable_threat(self, world: WorldState) -> bool:
        """Conflict a committed driver both notices and has time to answer.

        Slower drivers reach their point of no return later, so the threats
        they face tend to fall inside the reaction window; a fast driver
        meeting a fast agent often has no answerable threat until it is too
        late to matter.
        """
        band_lo, _ = self._crossing_band()
        reaction = self._profile.reaction_delay
        if self._agent_in_band(world):
            my_time_to_band = (band_lo - world.human.progress) / max(self._cruise, 1e-6)
            return my_time_to_band > reaction
        speed = world.agent.speed
        if speed > 1e-9 and world.agent.progress < band_lo:
            agent_time_to_band = (band_lo - world.agent.progress) / speed
            return reaction <= agent_time_to_band <= REACT_WINDOW_HORIZON
        return False

    def _imminent_crash(self, world: WorldState) -> bool:
        horizon = self._profile.reaction_delay
        band_lo, band_hi = self._crossing_band()

        def in_band_within(p: float, v: float) -> bool:
            end = p + v * horizon
            lo, hi = min(p, end), max(p, end)
            return lo < band_hi and band_lo < hi

        return in_band_within(
            world.agent.progress, world.agent.speed
        ) and in_band_within(world.human.progress, world.human.speed)

    # -- decision ----------------------------------------------------------

    def decide(self, world: WorldState) -> HumanCommand:
        p = self._profile
        me = world.human
        t = world.elapsed
        self._elapsed = t
        check_line = self.cfg.intersection_entry - APPROACH_CHECK_DISTANCE

        if self._phase is _Phase.APPROACH and me.progress >= check_line:
            if self._will_stop or self._agent_near_or_in_band(world):
                self._phase = _Phase.STOPPING
            else:
                self._phase = _Phase.CROSS
                self._next_scan = t + self._scan_phase

        if self._phase is _Phase.STOPPING and me.speed == 0.0:
            self._phase = _Phase.WAITING
            self._wait_until = t + self._wait_duration

        if self._phase is _Phase.WAITING and t >= self._wait_until:
            if self._clear_to_pull_out(world):
                self._phase = _Phase.CROSS
                self._next_scan = t + self._scan_phase

        if self._phase in (_Phase.APPROACH, _Phase.CROSS):
            desired = HumanCommand.FORWARD
        else:
            desired = HumanCommand.BRAKE

        # A committed driver re-checks the crossing only at scan moments and
        # aborts while a reactable conflict stands, up to its point of no
        # return. Whether a scan lands before that point depends on approach
        # speed, so fast drivers miss conflicts more often than slow ones.
        if self._phase is _Phase.CROSS:
            if self._yielding_mid_cross:
                if self._clear_to_pull_out(world):
                    self._yielding_mid_cross = False
                else:
                    desired = HumanCommand.BRAKE
            elif (
                self._next_scan is not None
                and t >= self._next_scan
                and me.progress < self._point_of_no_return()
            ):
                self._next_scan = t + SCAN_CADENCE
                if self._reactable_threat(world):
                    self._yielding_mid_cross = True
                    desired = HumanCommand.BRAKE

        # Imminent-collision escape: decided once per conflict spell.
        if not me.reached_end and self._imminent_crash(world):
            if not self._conflict_seen:
                self._conflict_seen = True
                if self.rng.random() < p.reverse_prob_on_conflict:
                    self._reversing = True
        else:
            self._conflict_seen = False
            self._reversing = False
        if self._reversing:
            desired = HumanCommand.REVERSE

        if desired is not self._active and t - self._last_change >= p.reaction_delay:
            self._active = desired
            self._last_change = t
        return self._active

    def target_speed(self, command: HumanCommand) -> float:
        if command is HumanCommand.FORWARD:
            if self._elapsed < self._start_lag:
                return 0.0  # startup lag: rolling begins late
            return self._cruise
        if command is HumanCommand.REVERSE:
            return -self.cfg.speed_reverse
        return 0.0
