"""Property suites runnable from the CLI: bijection, example replays,
invariants, non-divergence, and wait-freedom comparisons."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .core import Mode, TimingModel, Transfer, make_request, validate_config
from .errors import ConsensusSimError
from .ordering import LedgerState, execute_round, permute_index
from .primaries import apply_round_failures, init_primaries
from .scenario import FaultEvent, Scenario, WorkloadSpec, make_random_scenario
from .scheduler import delay_bound
from .sim import SimResult, compare_logs, run

SUITES = ("bijection", "examples", "invariants", "nondivergence", "waitfree")

INVARIANT_SUITE_SIZE = 100
INVARIANT_SUITE_SEED = 20_000


@dataclass
class SuiteResult:
    name: str
    passed: int = 0
    failed: int = 0
    failures: list[str] = field(default_factory=list)

    def check(self, ok: bool, label: str) -> None:
        if ok:
            self.passed += 1
        else:
            self.failed += 1
            self.failures.append(label)

    @property
    def ok(self) -> bool:
        return self.failed == 0


@dataclass
class ScenarioOutcome:
    scenario: Scenario
    result: Optional[SimResult]
    error: Optional[str]


def run_random_suite(
    mode: Mode,
    count: int = INVARIANT_SUITE_SIZE,
    base_seed: int = INVARIANT_SUITE_SEED,
    progress: Optional[Callable[[int], None]] = None,
) -> list[ScenarioOutcome]:
    """Run `count` seeded random scenarios; invariant violations surface as errors."""
    outcomes = []
    for k in range(count):
        sc = make_random_scenario(base_seed + k, mode)
        try:
            outcomes.append(ScenarioOutcome(sc, run(sc), None))
        except ConsensusSimError as exc:
            outcomes.append(ScenarioOutcome(sc, None, f"{sc.label}: {exc}"))
        if progress:
            progress(k + 1)
    return outcomes


# --- suites --------------------------------------------------------------------

def suite_bijection() -> SuiteResult:
    """Every index in [0, k!) yields a distinct permutation, for k = 1..7."""
    out = SuiteResult("bijection")
    for k in range(1, 8):
        seq = list(range(k))
        images = {tuple(permute_index(seq, i)) for i in range(math.factorial(k))}
        out.check(images == set(itertools.permutations(seq)), f"length {k}")
    return out


def suite_examples() -> SuiteResult:
    out = SuiteResult("examples")

    # conditional-transfer ledger: order decides whether the third account is paid
    rho1 = make_request(0, 0, Transfer("alice", "bob", 500, 200))
    rho2 = make_request(1, 0, Transfer("bob", "eve", 400, 300))
    start = LedgerState({"alice": 600, "bob": 300, "eve": 0})
    fwd, _ = execute_round(start, [rho1, rho2])
    rev, _ = execute_round(start, [rho2, rho1])
    out.check(fwd.balances["eve"] == 300, "transfer order pays eve 300")
    out.check(rev.balances["eve"] == 0, "reverse order pays eve nothing")

    # double failure replay: replacement must yield distinct fresh primaries
    cfg = validate_config(n=4, f=1, m=2, clients=4, mode=Mode.UNIFIED_REPLACEMENT)
    st = init_primaries(cfg)
    _, reass = apply_round_failures(st, {1, 2}, {1: 0, 2: 1})
    out.check(st.primary == {1: 2, 2: 3}, "double failure assigns replicas 2 and 3")
    out.check(len(set(st.primary.values())) == 2, "primaries stay distinct")

    st2 = init_primaries(cfg)
    apply_round_failures(st2, {1}, {1: 0})
    out.check(st2.primary == {1: 2, 2: 1}, "single failure skips the in-use replica")

    # outage replay: 10us rounds, 500us detection, 100us transfer
    res, base = run_outage_pair()
    counted, max_added = outage_measurements(res, base)
    out.check(counted == 60, f"outage decisions = {counted} (want 60)")
    out.check(0 < max_added <= 600.0, f"added delay {max_added:.1f}us (want <= 600)")
    return out


def outage_scenario(soft: bool = False) -> Scenario:
    cfg = validate_config(n=4, f=1, m=2, clients=3, sigma=3,
                          mode=Mode.UNIFIED_REPLACEMENT, timing=TimingModel(), seed=7)
    return Scenario(
        config=cfg,
        workload=WorkloadSpec(requests_per_client=40, inter_arrival_us=12.0),
        faults=(FaultEvent(replica=1, kind="crash", at_round=5),),
        duration_us=2500.0,
        soft_failures=soft,
        label="outage",
    )


def run_outage_pair() -> tuple[SimResult, SimResult]:
    sc = outage_scenario()
    return run(sc), run(replace(sc, faults=(), label="outage-baseline"))


def outage_measurements(res: SimResult, base: SimResult) -> tuple[int, float]:
    """(decisions by the healthy instance during the outage, max added delay in us)."""
    stamps = res.decision_stamps[2]
    first_fail = next(d for d in stamps if d.kind != "success")
    resumed = next(d for d in stamps if d.kind == "success" and d.round > first_fail.round)
    t_crash, t_resume = first_fail.start_t, resumed.start_t
    counted = sum(
        1 for d in res.decision_stamps[1]
        if d.kind == "success" and t_crash < d.resolve_t <= t_resume
    )
    added = [
        res.records[key].delay_us - base.records[key].delay_us
        for key in res.records
        if res.records[key].delay_us is not None
        and key in base.records and base.records[key].delay_us is not None
    ]
    return counted, max(added, default=0.0)


def suite_invariants(count: int = INVARIANT_SUITE_SIZE,
                     outcomes: Optional[list[ScenarioOutcome]] = None) -> SuiteResult:
    out = SuiteResult("invariants")
    outcomes = outcomes or run_random_suite(Mode.UNIFIED_REPLACEMENT, count)
    for oc in outcomes:
        if oc.result is None:
            out.check(False, oc.error or oc.scenario.label)
        else:
            out.check(oc.result.metrics.violations == 0, f"{oc.scenario.label}: violations")
    return out


def suite_nondivergence(count: int = INVARIANT_SUITE_SIZE,
                        unified: Optional[list[ScenarioOutcome]] = None,
                        inplace: Optional[list[ScenarioOutcome]] = None) -> SuiteResult:
    out = SuiteResult("nondivergence")
    unified = unified or run_random_suite(Mode.UNIFIED_REPLACEMENT, count)
    inplace = inplace or run_random_suite(Mode.IN_PLACE_RECOVERY, count,
                                          base_seed=INVARIANT_SUITE_SEED + 10_000)
    for oc in unified + inplace:
        if oc.result is None:
            out.check(False, oc.error or oc.scenario.label)
            continue
        div = compare_logs(oc.result.logs, oc.result.faulty)
        out.check(div is None, f"{oc.scenario.label}: diverges at {div}")
    return out


def waitfree_scenario(jitter: float = 0.0, seed: int = 77) -> Scenario:
    cfg = validate_config(
        n=5, f=1, m=3, clients=6, sigma=3, mode=Mode.IN_PLACE_RECOVERY,
        timing=TimingModel(latency_jitter_us=jitter), seed=seed,
    )
    return Scenario(
        config=cfg,
        workload=WorkloadSpec(requests_per_client=6, inter_arrival_us=25.0),
        faults=(FaultEvent(replica=0, kind="crash", at_round=4),),
        duration_us=4000.0,
        soft_failures=True,
        label="waitfree-crash",
    )


def healthy_decision_times(res: SimResult, crashed_instance: int) -> dict[int, list[float]]:
    return {
        i: [d.resolve_t for d in stamps if d.kind == "success"]
        for i, stamps in res.decision_stamps.items()
        if i != crashed_instance
    }


def suite_waitfree() -> SuiteResult:
    out = SuiteResult("waitfree")

    sc = waitfree_scenario(jitter=0.0)
    fault_res = run(sc)
    base_res = run(replace(sc, faults=(), label="waitfree-baseline"))
    crashed_instance = 1  # replica 0 leads instance 1
    fault_times = healthy_decision_times(fault_res, crashed_instance)
    base_times = healthy_decision_times(base_res, crashed_instance)
    for i in fault_times:
        shared = min(len(fault_times[i]), len(base_times[i]))
        out.check(
            shared > 50 and fault_times[i][:shared] == base_times[i][:shared],
            f"instance {i} decision times drift under a crash",
        )

    sc_j = waitfree_scenario(jitter=2.0, seed=911)
    fault_j = run(sc_j)
    base_j = run(replace(sc_j, faults=(), label="waitfree-jitter-baseline"))
    cfg = sc_j.config
    warmup = (cfg.sigma + cfg.epsilon) * cfg.timing.base_round_time_us
    span = min(fault_j.metrics.elapsed_us, base_j.metrics.elapsed_us)

    def rate(res: SimResult) -> float:
        n = sum(
            1 for i, stamps in healthy_decision_times(res, crashed_instance).items()
            for t in stamps if warmup < t <= span
        )
        return n / (span - warmup)

    rf, rb = rate(fault_j), rate(base_j)
    out.check(abs(rf - rb) <= 0.05 * rb, f"jittered throughput {rf:.4f} vs {rb:.4f}")

    # every measured delay stays under the computed bound when soft failures are on
    bound = delay_bound(sc.config)
    out.check(fault_res.metrics.max_delay_us() <= bound,
              f"max delay {fault_res.metrics.max_delay_us():.1f} exceeds bound {bound:.1f}")
    return out


def run_suite(name: str) -> SuiteResult:
    if name == "bijection":
        return suite_bijection()
    if name == "examples":
        return suite_examples()
    if name == "invariants":
        return suite_invariants()
    if name == "nondivergence":
        return suite_nondivergence()
    if name == "waitfree":
        return suite_waitfree()
    raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
