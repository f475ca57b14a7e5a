"""Client-to-instance assignment, instance-change requests, and reply matching."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

from .core import ClientId, InstanceChange, InstanceId, ReplicaId, RoundNum
from .errors import ConflictingQuorums


def assign_client(client: ClientId, m: int) -> InstanceId:
    """Round-robin static assignment into 1-based instance ids."""
    return (client % m) + 1


def load_cap(clients: int, non_faulty: int) -> int:
    """Most clients an instance accepts via instance changes."""
    return math.ceil(clients / non_faulty)


@dataclass
class ClientAssignment:
    m: int
    cap: int
    assignment: dict[ClientId, InstanceId] = field(default_factory=dict)
    counts: dict[InstanceId, int] = field(default_factory=dict)

    @classmethod
    def initial(cls, clients: int, m: int, cap: int) -> "ClientAssignment":
        st = cls(m=m, cap=cap, counts={i: 0 for i in range(1, m + 1)})
        for c in range(clients):
            iid = assign_client(c, m)
            st.assignment[c] = iid
            st.counts[iid] += 1
        return st

    def instance_of(self, client: ClientId) -> InstanceId:
        return self.assignment[client]


@dataclass(frozen=True)
class ChangeRejected:
    count: int
    cap: int


def request_instance_change(
    client: ClientId,
    target: InstanceId,
    st: ClientAssignment,
    decision_round: RoundNum,
    sigma: int,
) -> InstanceChange | ChangeRejected:
    """Accept a change petition if the target has capacity under the load cap.

    The accepted value becomes effective two gap sizes after its decision
    round, giving every replica time to observe the decision before the
    target's primary may propose for the client.
    """
    count = st.counts.get(target, 0)
    if count >= st.cap:
        return ChangeRejected(count=count, cap=st.cap)
    return InstanceChange(client=client, target=target, effective=decision_round + 2 * sigma)


def activate_reassignment(st: ClientAssignment, change: InstanceChange) -> bool:
    """Apply an executed instance change; returns False if it went stale.

    Called once the change's effective round has executed. A change is stale
    when the target no longer has capacity (the cap must hold after every
    activation) or the client already sits on the target. Later activations
    for the same client simply overwrite earlier ones: execution order is the
    one total order all replicas share.
    """
    old = st.assignment.get(change.client)
    if old == change.target:
        return False
    if st.counts.get(change.target, 0) >= st.cap:
        return False
    if old is not None:
        st.counts[old] -= 1
    st.assignment[change.client] = change.target
    st.counts[change.target] = st.counts.get(change.target, 0) + 1
    return True


# --- reply collection -----------------------------------------------------------

@dataclass
class ReplyTracker:
    """Per-request reply sets; at most one reply counts per replica."""

    replies: dict[tuple[ClientId, int], dict[ReplicaId, tuple]] = field(default_factory=dict)

    def add_reply(self, client: ClientId, seqno: int, replica: ReplicaId, result: tuple) -> None:
        self.replies.setdefault((client, seqno), {})[replica] = result


def match_replies(
    tracker: ReplyTracker, client: ClientId, seqno: int, f: int
) -> tuple | None:
    """Return the result once f+1 distinct replicas reported the same value.

    Two distinct values each reaching f+1 would mean the replicas diverged,
    which the consensus layer rules out; seeing it is reported as a bug.
    """
    per_replica = tracker.replies.get((client, seqno), {})
    tallies: dict[tuple, int] = {}
    for result in per_replica.values():
        tallies[result] = tallies.get(result, 0) + 1
    confirmed = [value for value, count in tallies.items() if count >= f + 1]
    if len(confirmed) > 1:
        raise ConflictingQuorums(f"request ({client},{seqno}) confirmed {len(confirmed)} distinct values")
    return confirmed[0] if confirmed else None
