"""Per-replica primary bookkeeping: failed set, instance-to-primary map, backoff.

The replacement protocol keeps every instance led by a distinct replica that is
not known to have failed, and it does so identically at every replica because
failing instances are processed in a fixed order with a deterministic choice
rule (smallest free replica id).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .core import InstanceId, ReplicaId, RoundNum, ServiceConfig
from .errors import NoReplicaAvailable


@dataclass
class PrimaryState:
    n: int
    m: int
    primary: dict[InstanceId, ReplicaId] = field(default_factory=dict)
    # Failure order is kept so the earliest entries can be reconsidered first;
    # soft failures are recoverable and get reconsidered before genuine ones.
    failed_order: list[tuple[ReplicaId, bool]] = field(default_factory=list)  # (replica, soft)
    failed: set[ReplicaId] = field(default_factory=set)
    reconsidered: int = 0

    def mark_failed(self, replica: ReplicaId, soft: bool) -> None:
        if replica not in self.failed:
            self.failed.add(replica)
            self.failed_order.append((replica, soft))

    def snapshot(self) -> tuple:
        """Comparable view for cross-replica agreement checks."""
        return (
            tuple(sorted(self.primary.items())),
            tuple(self.failed_order),
        )


def init_primaries(cfg: ServiceConfig) -> PrimaryState:
    """Instance i starts under the replica with id i-1; nothing has failed."""
    return PrimaryState(n=cfg.n, m=cfg.m, primary={i: i - 1 for i in range(1, cfg.m + 1)})


def reconsider_failed(st: PrimaryState) -> PrimaryState:
    """Drop the earliest failed replica (soft failures first) so selection can proceed."""
    if not st.failed_order:
        return st
    idx = next(
        (k for k, (_, soft) in enumerate(st.failed_order) if soft),
        0,
    )
    replica, _ = st.failed_order.pop(idx)
    st.failed.discard(replica)
    st.reconsidered += 1
    return st


def apply_round_failures(
    st: PrimaryState,
    fail: Iterable[InstanceId],
    failed_primaries: Mapping[InstanceId, ReplicaId],
    soft: Iterable[InstanceId] = (),
    auto_reconsider: bool = False,
) -> tuple[PrimaryState, dict[InstanceId, ReplicaId]]:
    """Process one round's failure decisions; returns (state, reassignments).

    The failed primaries are recorded first, then the failing instances are
    walked in ascending instance id and each receives the free replica with
    the smallest id. With auto_reconsider, an exhausted candidate pool
    reintroduces the earliest failed replicas instead of raising.
    """
    soft_set = set(soft)
    fail_ids = sorted(fail)
    for iid in fail_ids:
        st.mark_failed(failed_primaries[iid], soft=iid in soft_set)
    reassignments: dict[InstanceId, ReplicaId] = {}
    for iid in fail_ids:
        in_use = set(st.primary.values())
        candidates = [r for r in range(st.n) if r not in st.failed and r not in in_use]
        while not candidates:
            if not auto_reconsider or not st.failed_order:
                raise NoReplicaAvailable(
                    f"no replica left for instance {iid}: failed={sorted(st.failed)}, in use={sorted(in_use)}"
                )
            reconsider_failed(st)
            candidates = [r for r in range(st.n) if r not in st.failed and r not in in_use]
        chosen = candidates[0]
        st.primary[iid] = chosen
        reassignments[iid] = chosen
    return st, reassignments


@dataclass(frozen=True)
class InvariantReport:
    round: RoundNum
    kind: str  # "failed-set" | "injectivity" | "agreement"
    detail: str

    def to_dict(self) -> dict:
        return {"round": self.round, "kind": self.kind, "detail": self.detail}


def check_invariant(
    states: Mapping[ReplicaId, PrimaryState],
    faulty: set[ReplicaId],
    round_num: RoundNum,
    expected_failed: set[ReplicaId] | None = None,
    recoverable: set[ReplicaId] = frozenset(),
) -> list[InvariantReport]:
    """Check the replacement-protocol invariants at a round boundary.

    states holds one PrimaryState per non-faulty replica. expected_failed is
    the independently accumulated union of failed primaries (pass None once a
    reconsideration has pruned the set). recoverable holds soft-failed
    replicas, which are allowed in the failed set without being in faulty.
    """
    reports: list[InvariantReport] = []
    if not states:
        return reports
    ref_id = min(states)
    ref = states[ref_id]
    for rid, st in sorted(states.items()):
        if sorted(st.primary) != list(range(1, st.m + 1)):
            reports.append(InvariantReport(round_num, "injectivity", f"replica {rid}: primary map not total"))
        if len(set(st.primary.values())) != len(st.primary):
            reports.append(InvariantReport(round_num, "injectivity", f"replica {rid}: duplicate primaries {st.primary}"))
        overlap = set(st.primary.values()) & st.failed
        if overlap:
            reports.append(InvariantReport(round_num, "injectivity", f"replica {rid}: failed replicas in use {sorted(overlap)}"))
        if expected_failed is not None and st.failed != expected_failed:
            reports.append(
                InvariantReport(
                    round_num,
                    "failed-set",
                    f"replica {rid}: failed={sorted(st.failed)} expected={sorted(expected_failed)}",
                )
            )
        stray = st.failed - faulty - set(recoverable)
        if stray:
            reports.append(
                InvariantReport(round_num, "failed-set", f"replica {rid}: non-faulty marked failed {sorted(stray)}")
            )
        if st.snapshot() != ref.snapshot():
            reports.append(
                InvariantReport(round_num, "agreement", f"replicas {ref_id} and {rid} disagree on primary state")
            )
    return reports


# --- in-place recovery backoff -------------------------------------------------

@dataclass
class BackoffState:
    """Exponential retry delays, tracked per instance in whole rounds."""

    initial_delay: int
    delay: dict[InstanceId, int] = field(default_factory=dict)
    next_retry: dict[InstanceId, RoundNum] = field(default_factory=dict)

    def snapshot(self) -> tuple:
        return (tuple(sorted(self.delay.items())), tuple(sorted(self.next_retry.items())))


def next_retry(bo: BackoffState, instance: InstanceId, failed_at: RoundNum) -> RoundNum:
    """Schedule the retry after a genuine failure; the delay doubles each time."""
    delay = bo.delay.get(instance, bo.initial_delay)
    retry = failed_at + delay
    bo.next_retry[instance] = retry
    bo.delay[instance] = delay * 2
    return retry


def note_success(bo: BackoffState, instance: InstanceId) -> None:
    """A successful decision after a retry resets the delay to its initial value."""
    bo.delay.pop(instance, None)
    bo.next_retry.pop(instance, None)
