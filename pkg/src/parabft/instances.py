"""The black-box consensus instance and the primary behavior profiles.

An instance decides one value per round and every non-faulty replica observes
the identical decision; the simulator enforces that by construction, so the
coordination layer above can be tested without a real message-level protocol.
Misbehavior of a primary only ever shows up as slow rounds or Fail decisions,
never as divergent decisions.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Union

from .core import (
    ClientId,
    InstanceId,
    Noop,
    ReplicaId,
    Request,
    RoundNum,
    TimingModel,
    make_request,
)


@dataclass(frozen=True)
class Honest:
    pass


@dataclass(frozen=True)
class Crash:
    at_round: Optional[RoundNum] = None
    at_time_us: Optional[float] = None


@dataclass(frozen=True)
class Throttle:
    factor: float = 2.0


@dataclass(frozen=True)
class IgnoreClients:
    clients: frozenset[ClientId] = frozenset()


BehaviorProfile = Union[Honest, Crash, Throttle, IgnoreClients]

HONEST = Honest()


def profile_ignores(profile: BehaviorProfile, client: ClientId) -> bool:
    return isinstance(profile, IgnoreClients) and client in profile.clients


def crash_active(profile: BehaviorProfile, now: float, round_num: RoundNum) -> bool:
    if not isinstance(profile, Crash):
        return False
    if profile.at_round is not None and round_num >= profile.at_round:
        return True
    if profile.at_time_us is not None and now >= profile.at_time_us:
        return True
    return profile.at_round is None and profile.at_time_us is None


# --- pending values in an instance's mailbox ------------------------------------

@dataclass
class QueuedRequest:
    request: Request
    arrival: float
    in_flight: bool = False
    decided: bool = False

    @property
    def client(self) -> ClientId:
        return self.request.client


@dataclass
class QueuedChange:
    client: ClientId
    target: InstanceId
    arrival: float
    in_flight: bool = False
    decided: bool = False


QueuedValue = Union[QueuedRequest, QueuedChange]


@dataclass
class PlannedOutcome:
    round: RoundNum
    started_at: float
    resolve_at: float
    success: bool
    entry: Optional[QueuedValue]  # None on Fail or when proposing a filler
    filler: Optional[Request]


@dataclass
class InstanceReplica:
    """One replica's lightweight view of an instance (round and primary only)."""

    instance: InstanceId
    replica: ReplicaId
    current_round: RoundNum = 0
    current_primary: ReplicaId = 0


class ConsensusInstance:
    """Canonical state of one instance: its mailbox, primary, and in-flight round."""

    def __init__(self, instance: InstanceId, primary: ReplicaId, filler_client: ClientId):
        self.instance = instance
        self.primary = primary
        self.filler_client = filler_client
        self.cursor: RoundNum = 0
        self.mailbox: deque[QueuedValue] = deque()
        self.inflight: Optional[PlannedOutcome] = None
        self.ready_at: float = 0.0
        self.waiting_for_primary = False  # unified mode: failed, replacement pending
        self.dormant_until: Optional[float] = None  # in-place mode, soft failures off

    # -- mailbox ------------------------------------------------------------

    def enqueue_value(self, entry: QueuedValue) -> None:
        self.mailbox.append(entry)

    def _prune(self) -> None:
        while self.mailbox and self.mailbox[0].decided:
            self.mailbox.popleft()

    def proposable(self, profile: BehaviorProfile) -> Optional[QueuedValue]:
        """Oldest pending value this primary is willing to propose (FIFO)."""
        self._prune()
        for entry in self.mailbox:
            if entry.decided or entry.in_flight:
                continue
            if profile_ignores(profile, entry.client):
                continue
            return entry
        return None

    def starved(self, profile: BehaviorProfile, now: float, timeout_us: float) -> bool:
        """An ignored value has been pending longer than the detection timeout.

        Models the underlying protocol's fault detection: backups notice a
        client request going unserved and force the round to fail.
        """
        self._prune()
        for entry in self.mailbox:
            if entry.decided or entry.in_flight:
                continue
            if profile_ignores(profile, entry.client) and now >= entry.arrival + timeout_us:
                return True
        return False

    def take_undecided(self, client: ClientId) -> list[QueuedRequest]:
        """Remove and return the client's pending requests (for reassignment)."""
        taken, kept = [], deque()
        for entry in self.mailbox:
            if (
                isinstance(entry, QueuedRequest)
                and entry.client == client
                and not entry.decided
                and not entry.in_flight
            ):
                taken.append(entry)
            else:
                kept.append(entry)
        self.mailbox = kept
        return taken

    # -- rounds ---------------------------------------------------------------

    def step_round(
        self, profile: BehaviorProfile, now: float, timing: TimingModel, jitter: float = 0.0
    ) -> PlannedOutcome:
        """Start the round at the cursor and plan its outcome.

        Honest primaries succeed after one round time (scaled by any throttle
        factor) with the oldest value they are willing to propose, or a filler
        noop when idle. A crashed, starving, or overly slow primary yields a
        Fail after the detection timeout. The planned value is consumed only
        when the round actually resolves successfully.
        """
        assert self.inflight is None, "instance is mid-round"
        r = self.cursor
        fail_at = now + timing.failure_detection_timeout_us + jitter
        if crash_active(profile, now, r) or self.starved(profile, now, timing.failure_detection_timeout_us):
            planned = PlannedOutcome(r, now, fail_at, False, None, None)
        else:
            factor = profile.factor if isinstance(profile, Throttle) else 1.0
            duration = timing.base_round_time_us * factor
            if duration > timing.failure_detection_timeout_us:
                # Slower than the fault detector tolerates: the round fails.
                planned = PlannedOutcome(r, now, fail_at, False, None, None)
            else:
                entry = self.proposable(profile)
                filler = None
                if entry is None:
                    filler = make_request(self.filler_client, r, Noop(tag=r))
                else:
                    entry.in_flight = True
                planned = PlannedOutcome(r, now, now + duration + jitter, True, entry, filler)
        self.inflight = planned
        return planned

    def transfer_control(self, new_primary: ReplicaId, now: float, timing: TimingModel) -> float:
        """Install a new primary; proposing resumes after the transfer time."""
        self.primary = new_primary
        self.waiting_for_primary = False
        self.ready_at = now + timing.control_transfer_time_us
        return self.ready_at

    def abort_inflight(self) -> None:
        """Drop the in-flight round (soft failure); any proposed value stays queued."""
        if self.inflight and self.inflight.entry is not None:
            self.inflight.entry.in_flight = False
        self.inflight = None
