"""Deterministic execution ordering and the toy ledger it acts upon.

The order of a round's accepted requests is chosen by indexing into the set of
permutations with a digest of the requests themselves, so no single instance
controls who executes first and every replica derives the same order.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence, TypeVar

from .core import MAX_INSTANCES, ClientId, InstanceId, Noop, Request, RoundNum, Transfer
from .errors import InvalidConfig

T = TypeVar("T")


def factorial(k: int) -> int:
    """Exact k! for 0 <= k <= 20 (the largest factorial that fits 64 bits)."""
    if not 0 <= k <= MAX_INSTANCES:
        raise InvalidConfig(f"factorial argument {k} outside [0, {MAX_INSTANCES}]")
    return math.factorial(k)


def permute_index(seq: Sequence[T], index: int) -> list[T]:
    """Return the index-th permutation of seq.

    Base case: a singleton maps to itself. Otherwise split the index by
    (len-1)! into quotient q and remainder r; the element at position q goes
    last and the remainder selects the permutation of what is left. Each index
    in [0, len! ) yields a distinct permutation.
    """
    k = len(seq)
    if not 1 <= k <= MAX_INSTANCES:
        raise InvalidConfig(f"sequence length {k} outside [1, {MAX_INSTANCES}]")
    if not 0 <= index < factorial(k):
        raise InvalidConfig(f"permutation index {index} outside [0, {k}!)")
    items = list(seq)
    tail: list[T] = []  # elements fixed from the last position inward
    while len(items) > 1:
        q, index = divmod(index, factorial(len(items) - 1))
        tail.append(items.pop(q))
    return items + tail[::-1]


def round_digest(requests: Sequence[Request]) -> int:
    """64-bit index seed: SHA-256 over the request digests, first 8 bytes big-endian."""
    if not requests:
        raise InvalidConfig("round digest of an empty request sequence")
    h = hashlib.sha256()
    for req in requests:
        h.update(req.digest)
    return int.from_bytes(h.digest()[:8], "big")


def execution_order(succ: Mapping[InstanceId, Request]) -> list[Request]:
    """Order a round's accepted requests: by instance id, then permuted by digest."""
    if not succ:
        return []
    ordered = [succ[iid] for iid in sorted(succ)]
    return permute_index(ordered, round_digest(ordered) % factorial(len(ordered)))


# --- account ledger -----------------------------------------------------------

@dataclass
class LedgerState:
    """Account balances; the observable state that makes ordering matter."""

    balances: dict[str, int] = field(default_factory=dict)

    def copy(self) -> "LedgerState":
        return LedgerState(dict(self.balances))

    def total(self) -> int:
        return sum(self.balances.values())

    def amount(self, account: str) -> int:
        return self.balances.get(account, 0)


ReplyValue = tuple
# ("applied", new_src_balance, new_dst_balance) | ("rejected",) | ("noop", tag)


def apply_operation(balances: dict[str, int], op) -> ReplyValue:
    if isinstance(op, Transfer):
        if balances.get(op.src, 0) > op.threshold:
            balances[op.src] = balances.get(op.src, 0) - op.value
            balances[op.dst] = balances.get(op.dst, 0) + op.value
            return ("applied", balances[op.src], balances[op.dst])
        return ("rejected",)
    if isinstance(op, Noop):
        return ("noop", op.tag)
    raise TypeError(f"not an operation: {op!r}")


def execute_round(
    state: LedgerState, ordered: Sequence[Request]
) -> tuple[LedgerState, list[tuple[ClientId, ReplyValue]]]:
    """Apply an ordered request sequence; returns the new state and per-client replies."""
    new_state = state.copy()
    replies = []
    for req in ordered:
        replies.append((req.client, apply_operation(new_state.balances, req.payload)))
    return new_state, replies


@dataclass(frozen=True)
class LogEntry:
    round: RoundNum
    position: int
    digest: bytes = field(repr=False)
    result: ReplyValue = ()


ExecutionLog = list  # list[LogEntry], ordered by (round, position)
