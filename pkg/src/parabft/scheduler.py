"""Wait-free round bookkeeping: per-instance cursors, skips, and release of
total rounds for execution.

Instances never wait on each other to decide; execution waits only for a
round's row to become total (every instance contributed Success, Fail, or
Skip), and rows are released strictly in round order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .core import (
    Decision,
    InstanceId,
    RoundDecisionSet,
    RoundNum,
    ServiceConfig,
    SKIP,
)
from .errors import SkipCollision


@dataclass
class RoundTable:
    """One replica's view of all decisions, indexed by (instance, round)."""

    m: int
    cursors: dict[InstanceId, RoundNum] = field(default_factory=dict)
    decisions: dict[tuple[InstanceId, RoundNum], Decision] = field(default_factory=dict)
    executed_up_to: RoundNum = -1

    def __post_init__(self):
        if not self.cursors:
            self.cursors = {i: 0 for i in range(1, self.m + 1)}

    def record(self, instance: InstanceId, round_num: RoundNum, decision: Decision) -> None:
        key = (instance, round_num)
        if key in self.decisions:
            raise SkipCollision(f"instance {instance} round {round_num} already decided")
        self.decisions[key] = decision
        if round_num >= self.cursors[instance]:
            self.cursors[instance] = round_num + 1

    def row_total(self, round_num: RoundNum) -> bool:
        return all((i, round_num) in self.decisions for i in range(1, self.m + 1))

    def row(self, round_num: RoundNum) -> RoundDecisionSet:
        return RoundDecisionSet(
            round_num,
            {i: self.decisions[(i, round_num)] for i in range(1, self.m + 1)},
        )


def detect_soft_failures(
    table: RoundTable, sigma: int, working: Mapping[InstanceId, RoundNum] | None = None
) -> set[tuple[InstanceId, RoundNum]]:
    """Instances lagging sigma or more rounds behind some other instance.

    working restricts the check to rounds actually in flight (an instance that
    is between rounds, transferring control, or dormant is not lagging on a
    round it has not started). Without it the cursor positions are used, which
    matches the definition when every instance is mid-round.
    """
    positions = dict(working) if working is not None else dict(table.cursors)
    out: set[tuple[InstanceId, RoundNum]] = set()
    if len(table.cursors) <= 1:
        return out
    for iid, r in positions.items():
        others = [table.cursors[j] for j in table.cursors if j != iid]
        if others and max(others) >= r + sigma:
            out.add((iid, r))
    return out


def apply_skip(
    table: RoundTable, instance: InstanceId, failed_round: RoundNum, epsilon: int
) -> None:
    """After a failure at failed_round, sit out the next epsilon-1 rounds.

    Rounds strictly between failed_round and failed_round + epsilon resolve as
    Skip and the cursor jumps to failed_round + epsilon.
    """
    for r in range(failed_round + 1, failed_round + epsilon):
        table.record(instance, r, SKIP)
    table.cursors[instance] = max(table.cursors[instance], failed_round + epsilon)


def extend_skip(table: RoundTable, instance: InstanceId, upto: RoundNum) -> None:
    """Fill Skip decisions up to (but excluding) round upto; used for dormancy."""
    for r in range(table.cursors[instance], upto):
        table.record(instance, r, SKIP)
    table.cursors[instance] = max(table.cursors[instance], upto)


def ready_rounds(table: RoundTable) -> list[RoundDecisionSet]:
    """Release the maximal run of consecutive total rows past executed_up_to."""
    out: list[RoundDecisionSet] = []
    r = table.executed_up_to + 1
    while table.row_total(r):
        out.append(table.row(r))
        table.executed_up_to = r
        r += 1
    return out


def delay_bound(cfg: ServiceConfig) -> float:
    """Upper bound (microseconds) on accept-to-execute delay with soft failures on.

    A decided request waits at most sigma + epsilon worst-case rounds for its
    row and the backlog ahead of it, plus one control transfer and the
    execution of its own round.
    """
    t = cfg.timing
    worst_round = max(t.base_round_time_us, t.failure_detection_timeout_us)
    exec_round = cfg.m * t.execution_time_us
    return (cfg.sigma + cfg.epsilon) * worst_round + t.control_transfer_time_us + exec_round
