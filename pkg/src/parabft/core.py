"""Domain value types: service configuration, requests, and round decisions.

Everything here is an immutable value; construction validates, and instances
are safe to share between the simulated replicas.
"""
from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping, Union

from .errors import FactorialOverflow, InvalidConfig, TooFewReplicas, TooManyInstances

ReplicaId = int    # 0 <= id < n
ClientId = int     # 0 <= id < clients; ids >= clients are reserved for filler traffic
InstanceId = int   # 1-based: 1 <= id <= m
RoundNum = int     # >= 0

# Cap on the parallel instance count so m! fits an unsigned 64-bit integer.
MAX_INSTANCES = 20


class Mode(Enum):
    """How a replica reacts to a failed primary."""

    IN_PLACE_RECOVERY = "inplace"
    UNIFIED_REPLACEMENT = "unified"


@dataclass(frozen=True)
class TimingModel:
    """Simulated durations (microseconds) plus round-denominated knobs."""

    base_round_time_us: float = 10.0
    failure_detection_timeout_us: float = 500.0
    control_transfer_time_us: float = 100.0
    latency_jitter_us: float = 0.0
    execution_time_us: float = 0.0     # per executed request
    backoff_initial_rounds: int = 2    # first in-place retry delay, in rounds
    patience_rounds: int = 50          # rounds a client waits before an instance change

    def validate(self) -> "TimingModel":
        if self.base_round_time_us <= 0:
            raise InvalidConfig("base_round_time_us must be positive")
        if self.failure_detection_timeout_us < self.base_round_time_us:
            raise InvalidConfig("failure_detection_timeout_us must be >= base_round_time_us")
        for name in ("control_transfer_time_us", "latency_jitter_us", "execution_time_us"):
            if getattr(self, name) < 0:
                raise InvalidConfig(f"{name} must be non-negative")
        if self.backoff_initial_rounds < 1:
            raise InvalidConfig("backoff_initial_rounds must be >= 1")
        if self.patience_rounds < 1:
            raise InvalidConfig("patience_rounds must be >= 1")
        return self


def default_epsilon(sigma: int, timing: TimingModel) -> int:
    """Skip size covering the detection gap plus the primary-replacement time."""
    transfer_rounds = math.ceil(timing.control_transfer_time_us / timing.base_round_time_us)
    return sigma + transfer_rounds


@dataclass(frozen=True)
class ServiceConfig:
    n: int
    f: int
    m: int
    clients: int
    sigma: int
    epsilon: int
    mode: Mode
    timing: TimingModel
    seed: int


def validate_config(
    cfg: ServiceConfig | None = None,
    *,
    n: int = 0,
    f: int = 0,
    m: int = 0,
    clients: int = 0,
    sigma: int = 1,
    epsilon: int | None = None,
    mode: Mode = Mode.UNIFIED_REPLACEMENT,
    timing: TimingModel | None = None,
    seed: int = 0,
) -> ServiceConfig:
    """Build and check a ServiceConfig, or re-check an existing one.

    Passing an already-valid config returns the same object unchanged, so the
    function is idempotent. Raises a ConfigError naming the violated rule.
    """
    if cfg is None:
        timing = (timing or TimingModel()).validate()
        if epsilon is None:
            epsilon = default_epsilon(sigma, timing)
        cfg = ServiceConfig(n, f, m, clients, sigma, epsilon, mode, timing, seed)
    else:
        cfg.timing.validate()

    if cfg.f < 0:
        raise InvalidConfig("f must be non-negative")
    if cfg.n <= 3 * cfg.f:
        raise TooFewReplicas(f"n={cfg.n} must exceed 3f={3 * cfg.f}")
    if cfg.m > MAX_INSTANCES:
        raise FactorialOverflow(f"m={cfg.m} exceeds {MAX_INSTANCES}; m! must fit 64 bits")
    if not 1 <= cfg.m <= cfg.n:
        raise TooManyInstances(f"m={cfg.m} must satisfy 1 <= m <= n={cfg.n}")
    if cfg.mode is Mode.UNIFIED_REPLACEMENT and cfg.m > cfg.n - cfg.f:
        raise TooManyInstances(
            f"m={cfg.m} must not exceed n-f={cfg.n - cfg.f} under unified replacement"
        )
    if cfg.sigma < 1:
        raise InvalidConfig("sigma must be >= 1")
    if cfg.epsilon < 1:
        raise InvalidConfig("epsilon must be >= 1")
    if cfg.clients <= cfg.m:
        raise InvalidConfig(f"clients={cfg.clients} must exceed m={cfg.m}")
    if not 0 <= cfg.seed < 2**64:
        raise InvalidConfig("seed must fit an unsigned 64-bit integer")
    return cfg


# --- operations and requests -------------------------------------------------

@dataclass(frozen=True)
class Transfer:
    """Conditional transfer: if amount(src) > threshold, move value src -> dst."""

    src: str
    dst: str
    threshold: int
    value: int


@dataclass(frozen=True)
class Noop:
    tag: int


Operation = Union[Transfer, Noop]


def encode_operation(op: Operation) -> bytes:
    """Canonical byte form: tag byte 0 = Transfer, 1 = Noop."""
    if isinstance(op, Transfer):
        src = op.src.encode("utf-8")
        dst = op.dst.encode("utf-8")
        return (
            b"\x00"
            + struct.pack(">H", len(src)) + src
            + struct.pack(">H", len(dst)) + dst
            + struct.pack(">QQ", op.threshold, op.value)
        )
    if isinstance(op, Noop):
        return b"\x01" + struct.pack(">Q", op.tag)
    raise TypeError(f"not an operation: {op!r}")


def request_bytes(client: ClientId, seqno: int, payload: Operation) -> bytes:
    return struct.pack(">QQ", client, seqno) + encode_operation(payload)


@dataclass(frozen=True)
class Request:
    client: ClientId
    seqno: int
    payload: Operation
    digest: bytes = field(repr=False)


def make_request(client: ClientId, seqno: int, payload: Operation) -> Request:
    digest = hashlib.sha256(request_bytes(client, seqno, payload)).digest()
    return Request(client, seqno, payload, digest)


@dataclass(frozen=True)
class InstanceChange:
    """Consensus-carried petition to move a client to another instance."""

    client: ClientId
    target: InstanceId
    effective: RoundNum  # decision round + 2 * sigma


DecidedValue = Union[Request, InstanceChange]


# --- per-round decisions ------------------------------------------------------

@dataclass(frozen=True)
class Success:
    value: DecidedValue


@dataclass(frozen=True)
class Fail:
    pass


@dataclass(frozen=True)
class Skip:
    pass


FAIL = Fail()
SKIP = Skip()

Decision = Union[Success, Fail, Skip]


@dataclass
class RoundDecisionSet:
    """One decision per instance for a single round (total over 1..m)."""

    round: RoundNum
    decisions: dict[InstanceId, Decision]


def partition_decisions(
    d: RoundDecisionSet,
) -> tuple[dict[InstanceId, DecidedValue], set[InstanceId]]:
    """Split a total decision row into (successes by instance, failed instances).

    Skip entries contribute to neither side; they are pre-resolved
    non-contributions of instances sitting out rounds after a failure.
    """
    succ: dict[InstanceId, DecidedValue] = {}
    fail: set[InstanceId] = set()
    for iid, dec in d.decisions.items():
        if isinstance(dec, Success):
            succ[iid] = dec.value
        elif isinstance(dec, Fail):
            fail.add(iid)
    return succ, fail
