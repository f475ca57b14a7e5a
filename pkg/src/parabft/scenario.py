"""Scenario description: service config, fault schedule, workload, run length.

Scenario files are YAML with nested sections, schema-versioned, and parsed
strictly (unknown keys are rejected with their full key path).
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from typing import Optional

import yaml

from .core import Mode, ServiceConfig, TimingModel, validate_config
from .errors import ScenarioError

SCHEMA_VERSION = 1

FAULT_KINDS = ("crash", "throttle", "ignore", "recover")


@dataclass(frozen=True)
class FaultEvent:
    replica: int
    kind: str  # one of FAULT_KINDS
    at_time_us: Optional[float] = None
    at_round: Optional[int] = None  # crash only: trips when the led instance reaches it
    factor: float = 2.0             # throttle only
    clients: tuple[int, ...] = ()   # ignore only

    def start_time(self) -> float:
        return self.at_time_us if self.at_time_us is not None else 0.0


@dataclass(frozen=True)
class WorkloadSpec:
    requests_per_client: int = 5
    inter_arrival_us: float = 25.0
    accounts: tuple[str, ...] = ("alice", "bob", "carol", "dave")
    initial_balance: int = 1000
    operation: str = "mixed"  # "transfer" | "noop" | "mixed"


@dataclass(frozen=True)
class Scenario:
    config: ServiceConfig
    workload: WorkloadSpec = WorkloadSpec()
    faults: tuple[FaultEvent, ...] = ()
    duration_us: float = 5000.0
    soft_failures: bool = True
    label: str = "scenario"

    def faulty_replicas(self) -> set[int]:
        return {ev.replica for ev in self.faults if ev.kind != "recover"}

    def warnings(self) -> list[str]:
        out = []
        if self.config.m <= self.config.f:
            out.append(
                f"m={self.config.m} <= f={self.config.f}: faulty primaries could cover "
                "every instance and bias the execution order"
            )
        return out


def validate_scenario(sc: Scenario) -> Scenario:
    cfg = validate_config(sc.config)
    if sc.duration_us <= 0:
        raise ScenarioError("run duration must be positive")
    if sc.workload.requests_per_client < 0:
        raise ScenarioError("requests_per_client must be non-negative")
    if sc.workload.inter_arrival_us <= 0:
        raise ScenarioError("inter_arrival_us must be positive")
    if sc.workload.operation not in ("transfer", "noop", "mixed"):
        raise ScenarioError(f"unknown operation template {sc.workload.operation!r}")
    faulty = sc.faulty_replicas()
    if len(faulty) > cfg.f:
        raise ScenarioError(f"{len(faulty)} misbehaving replicas exceed the f={cfg.f} bound")
    seen: set[tuple[int, float]] = set()
    for ev in sc.faults:
        if not 0 <= ev.replica < cfg.n:
            raise ScenarioError(f"fault targets unknown replica {ev.replica}")
        if ev.kind not in FAULT_KINDS:
            raise ScenarioError(f"unknown fault kind {ev.kind!r}")
        if ev.kind == "crash" and ev.at_time_us is None and ev.at_round is None:
            raise ScenarioError("crash needs at_time_us or at_round")
        if ev.kind != "crash" and ev.at_time_us is None:
            raise ScenarioError(f"{ev.kind} needs at_time_us")
        if ev.kind == "ignore":
            bad = [c for c in ev.clients if not 0 <= c < cfg.clients]
            if bad:
                raise ScenarioError(f"ignore targets unknown clients {bad}")
        key = (ev.replica, ev.start_time())
        if key in seen:
            raise ScenarioError(
                f"contradictory fault events for replica {ev.replica} at t={ev.start_time()}"
            )
        seen.add(key)
    return sc


def inject(sc: Scenario, event: FaultEvent) -> Scenario:
    """Add a fault event to a scenario, revalidating the schedule."""
    return validate_scenario(replace(sc, faults=sc.faults + (event,)))


# --- YAML parsing ----------------------------------------------------------------

_SERVICE_KEYS = {"n", "f", "m", "clients", "sigma", "epsilon", "mode", "seed"}
_TIMING_KEYS = {
    "base_round_time_us",
    "failure_detection_timeout_us",
    "control_transfer_time_us",
    "latency_jitter_us",
    "execution_time_us",
    "backoff_initial_rounds",
    "patience_rounds",
}
_WORKLOAD_KEYS = {"requests_per_client", "inter_arrival_us", "accounts", "initial_balance", "operation"}
_RUN_KEYS = {"duration_us", "rounds", "soft_failures", "label"}
_FAULT_KEYS = {"replica", "kind", "at_time_us", "at_round", "factor", "clients"}
_TOP_KEYS = {"schema_version", "service", "timing", "workload", "run", "faults"}


def _check_keys(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ScenarioError(f"unknown key(s) {sorted(unknown)} in {where}")


def parse_scenario(doc: dict, source: str = "<scenario>") -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError(f"{source}: top level must be a mapping")
    _check_keys(doc, _TOP_KEYS, source)
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"{source}: schema_version must be {SCHEMA_VERSION}, got {version!r}")

    service = doc.get("service")
    if not isinstance(service, dict):
        raise ScenarioError(f"{source}: missing service section")
    _check_keys(service, _SERVICE_KEYS, f"{source}:service")

    timing_doc = doc.get("timing", {}) or {}
    _check_keys(timing_doc, _TIMING_KEYS, f"{source}:timing")
    timing = TimingModel(**timing_doc)

    mode_name = service.get("mode", "unified")
    try:
        mode = Mode(mode_name)
    except ValueError:
        raise ScenarioError(f"{source}: unknown mode {mode_name!r}") from None

    config = validate_config(
        n=int(service.get("n", 0)),
        f=int(service.get("f", 0)),
        m=int(service.get("m", 0)),
        clients=int(service.get("clients", 0)),
        sigma=int(service.get("sigma", 1)),
        epsilon=int(service["epsilon"]) if service.get("epsilon") is not None else None,
        mode=mode,
        timing=timing,
        seed=int(service.get("seed", 0)),
    )

    workload_doc = doc.get("workload", {}) or {}
    _check_keys(workload_doc, _WORKLOAD_KEYS, f"{source}:workload")
    if "accounts" in workload_doc:
        workload_doc = dict(workload_doc, accounts=tuple(workload_doc["accounts"]))
    workload = WorkloadSpec(**workload_doc)

    run_doc = doc.get("run", {}) or {}
    _check_keys(run_doc, _RUN_KEYS, f"{source}:run")
    if "duration_us" in run_doc and "rounds" in run_doc:
        raise ScenarioError(f"{source}:run: give duration_us or rounds, not both")
    if "rounds" in run_doc:
        duration = float(run_doc["rounds"]) * timing.base_round_time_us
    else:
        duration = float(run_doc.get("duration_us", 5000.0))

    faults = []
    for idx, item in enumerate(doc.get("faults", []) or []):
        where = f"{source}:faults[{idx}]"
        if not isinstance(item, dict):
            raise ScenarioError(f"{where}: must be a mapping")
        _check_keys(item, _FAULT_KEYS, where)
        faults.append(
            FaultEvent(
                replica=int(item.get("replica", -1)),
                kind=str(item.get("kind", "")),
                at_time_us=float(item["at_time_us"]) if item.get("at_time_us") is not None else None,
                at_round=int(item["at_round"]) if item.get("at_round") is not None else None,
                factor=float(item.get("factor", 2.0)),
                clients=tuple(int(c) for c in item.get("clients", ())),
            )
        )

    sc = Scenario(
        config=config,
        workload=workload,
        faults=tuple(faults),
        duration_us=duration,
        soft_failures=bool(run_doc.get("soft_failures", True)),
        label=str(run_doc.get("label", "scenario")),
    )
    return validate_scenario(sc)


def load_scenario(path: str, overrides: list[str] | None = None) -> Scenario:
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    if overrides:
        doc = apply_overrides(doc, overrides)
    return parse_scenario(doc, source=path)


def apply_overrides(doc: dict, overrides: list[str]) -> dict:
    """Apply dotted key=value overrides (for example service.sigma=4)."""
    for item in overrides:
        if "=" not in item:
            raise ScenarioError(f"override {item!r} is not key=value")
        dotted, raw = item.split("=", 1)
        keys = dotted.split(".")
        node = doc
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ScenarioError(f"override {dotted!r} does not address a section")
        node[keys[-1]] = yaml.safe_load(raw)
    return doc


# --- seeded random scenarios for the property suites ------------------------------

def make_random_scenario(seed: int, mode: Mode, soft_failures: bool = True) -> Scenario:
    """A small seeded scenario with up to f misbehaving primaries.

    Drawn parameters stay in the regime where soft-failure detection outruns
    the genuine fault timers (sigma * base < detection timeout).
    """
    rng = random.Random(seed)
    n = rng.randint(4, 16)
    f_max = (n - 1) // 3
    f = rng.randint(1, f_max)
    m_hi = min(n - f, 6)
    m = rng.randint(2, m_hi) if m_hi >= 2 else 1
    clients = m + rng.randint(1, 8)
    sigma = rng.randint(2, 5)
    jitter = rng.choice((0.0, 0.0, 1.0, 2.0))
    timing = TimingModel(latency_jitter_us=jitter, patience_rounds=rng.randint(30, 60))
    config = validate_config(
        n=n, f=f, m=m, clients=clients, sigma=sigma, mode=mode, timing=timing,
        seed=rng.getrandbits(63),
    )

    faults: list[FaultEvent] = []
    candidates = list(range(min(m + 2, n)))
    rng.shuffle(candidates)
    for replica in candidates[: rng.randint(0, f)]:
        kind = rng.choice(("crash", "throttle", "ignore"))
        if kind == "crash":
            faults.append(FaultEvent(replica, "crash", at_round=rng.randint(2, 30)))
        elif kind == "throttle":
            faults.append(
                FaultEvent(replica, "throttle", at_time_us=rng.uniform(50, 500), factor=rng.uniform(2, 6))
            )
        else:
            faults.append(
                FaultEvent(
                    replica, "ignore", at_time_us=rng.uniform(0, 200),
                    clients=(rng.randrange(clients),),
                )
            )

    workload = WorkloadSpec(
        requests_per_client=rng.randint(2, 6),
        inter_arrival_us=rng.uniform(15, 60),
        operation=rng.choice(("transfer", "mixed")),
    )
    sc = Scenario(
        config=config,
        workload=workload,
        faults=tuple(faults),
        duration_us=rng.uniform(2500, 5000),
        soft_failures=soft_failures,
        label=f"random-{mode.value}-{seed}",
    )
    return validate_scenario(sc)
