from dataclasses import replace

import pytest

from parabft.core import Mode, TimingModel, validate_config
from parabft.errors import InvariantViolationError
from parabft.ordering import LogEntry
from parabft.scenario import FaultEvent, Scenario, WorkloadSpec, make_random_scenario
from parabft.scheduler import delay_bound
from parabft.sim import Simulation, compare_logs, run


def _scenario(mode=Mode.UNIFIED_REPLACEMENT, m=2, n=4, f=1, clients=4, sigma=3,
              faults=(), soft=True, duration=2000.0, seed=11, timing=None, workload=None):
    cfg = validate_config(n=n, f=f, m=m, clients=clients, sigma=sigma, mode=mode,
                          timing=timing or TimingModel(), seed=seed)
    return Scenario(
        config=cfg,
        workload=workload or WorkloadSpec(requests_per_client=4, inter_arrival_us=30.0),
        faults=tuple(faults),
        duration_us=duration,
        soft_failures=soft,
        label="test",
    )


def test_same_scenario_and_seed_reproduce_bit_identical_results():
    sc = _scenario(faults=[FaultEvent(1, "crash", at_round=6)])
    a, b = run(sc), run(sc)
    assert a.metrics == b.metrics
    assert a.logs == b.logs
    assert [t.to_dict() for t in a.trace] == [t.to_dict() for t in b.trace]


def test_seed_changes_only_jitter_dependent_outcomes():
    timing = TimingModel(latency_jitter_us=2.0)
    a = run(_scenario(seed=5, timing=timing))
    b = run(_scenario(seed=7, timing=timing))
    assert a.metrics.issued == b.metrics.issued
    assert a.metrics.decisions_total != b.metrics.decisions_total or a.logs != b.logs


def test_honest_run_confirms_every_request_and_logs_agree():
    res = run(_scenario())
    m = res.metrics
    assert m.confirmed == m.issued == m.decided_requests
    assert m.quiescent and m.violations == 0
    assert compare_logs(res.logs, res.faulty) is None


def test_all_replicas_execute_identical_logs_under_faults():
    res = run(_scenario(faults=[FaultEvent(0, "crash", at_round=4)], duration=3000.0))
    assert compare_logs(res.logs, res.faulty) is None
    assert res.metrics.replacements >= 1


def test_compare_logs_reports_first_divergence():
    logs = {
        0: [LogEntry(0, 0, b"x", ("noop", 1)), LogEntry(1, 0, b"y", ("noop", 2))],
        1: [LogEntry(0, 0, b"x", ("noop", 1)), LogEntry(1, 0, b"y", ("noop", 3))],
    }
    assert compare_logs(logs, faulty=set()) == (1, 0)
    assert compare_logs(logs, faulty={1}) is None


def test_compare_logs_handles_length_mismatch():
    logs = {
        0: [LogEntry(0, 0, b"x", ("noop", 1))],
        1: [LogEntry(0, 0, b"x", ("noop", 1)), LogEntry(2, 0, b"y", ("noop", 2))],
    }
    assert compare_logs(logs, faulty=set()) == (2, 0)


def test_crash_produces_fail_and_unified_replacement():
    res = run(_scenario(faults=[FaultEvent(1, "crash", at_round=5)]))
    assert res.metrics.failures >= 1
    assert res.metrics.replacements == 1
    kinds = [t.kind for t in res.trace]
    assert any(k.startswith("replace:") for k in kinds)
    # replacement chose the smallest free replica: 0 and 1 lead, 1 failed -> 2
    assert any(k == "replace:2" for k in kinds)


def test_throttled_instance_soft_fails_and_recovers():
    res = run(_scenario(faults=[FaultEvent(0, "throttle", at_time_us=100.0, factor=3.0)],
                        duration=3000.0))
    assert res.metrics.soft_failures >= 1
    assert 0 in res.soft_failed
    assert res.metrics.confirmed == res.metrics.issued


def test_recover_event_restores_honest_behavior():
    faults = [FaultEvent(1, "crash", at_time_us=100.0),
              FaultEvent(1, "recover", at_time_us=1500.0)]
    sc = _scenario(mode=Mode.IN_PLACE_RECOVERY, faults=faults, duration=6000.0)
    res = run(sc)
    stamps = res.decision_stamps[2]  # replica 1 leads instance 2
    fails = [d for d in stamps if d.kind != "success"]
    late_success = [d for d in stamps if d.kind == "success" and d.start_t > 1500.0]
    assert fails and late_success


def test_ignoring_primary_starves_and_is_replaced():
    sc = _scenario(faults=[FaultEvent(1, "ignore", at_time_us=0.0, clients=(1,))],
                   duration=4000.0)
    res = run(sc)
    assert res.metrics.failures >= 1
    assert res.metrics.replacements >= 1
    assert res.metrics.confirmed == res.metrics.issued


def test_soft_failures_bound_delays():
    faults = [FaultEvent(0, "throttle", at_time_us=50.0, factor=2.0)]
    res = run(_scenario(faults=faults, duration=4000.0))
    assert res.metrics.max_delay_us() <= delay_bound(res.scenario.config)


def test_without_soft_failures_backlog_grows():
    faults = [FaultEvent(0, "throttle", at_time_us=10.0, factor=2.0)]
    sc = _scenario(faults=faults, soft=False, duration=4500.0,
                   workload=WorkloadSpec(requests_per_client=2, inter_arrival_us=50.0))
    res = run(sc)
    thirds = res.metrics.backlog_third_maxima
    assert thirds[0] < thirds[1] < thirds[2]


def test_backlog_stays_bounded_with_soft_failures():
    faults = [FaultEvent(0, "throttle", at_time_us=10.0, factor=2.0)]
    res = run(_scenario(faults=faults, duration=4500.0))
    cfg = res.scenario.config
    assert max(res.metrics.max_backlog.values()) <= cfg.sigma + cfg.epsilon + 1


def test_filler_rounds_keep_idle_instances_moving():
    sc = _scenario(workload=WorkloadSpec(requests_per_client=0))
    res = run(sc)
    assert res.metrics.decisions_total > 0
    assert res.metrics.issued == 0
    assert any(len(log) > 0 for log in res.logs.values())  # fillers still execute


def test_in_place_crash_retries_with_doubling_gaps():
    sc = _scenario(mode=Mode.IN_PLACE_RECOVERY,
                   faults=[FaultEvent(1, "crash", at_round=5)], duration=4000.0)
    res = run(sc)
    fails = [d.round for d in res.decision_stamps[2] if d.kind != "success"]
    assert len(fails) >= 3
    gaps = [b - a for a, b in zip(fails, fails[1:])]
    assert all(b >= a for a, b in zip(gaps, gaps[1:]))  # dormancy never shrinks
    assert res.metrics.replacements == 0


def test_instance_change_moves_starved_client():
    # ignoring primary is never replaced in-place, so the client migrates
    timing = TimingModel(patience_rounds=30)
    sc = _scenario(
        mode=Mode.IN_PLACE_RECOVERY, n=4, f=1, m=3, clients=8, sigma=2,
        faults=[FaultEvent(1, "ignore", at_time_us=0.0, clients=(1,))],
        duration=12000.0, timing=timing,
        workload=WorkloadSpec(requests_per_client=2, inter_arrival_us=40.0), seed=3,
    )
    res = run(sc)
    assert any(t.kind.startswith("activate:") for t in res.trace)
    assert res.assignment.instance_of(1) != 2  # moved away from its home instance
    assert res.metrics.confirmed == res.metrics.issued
    assert all(c <= res.assignment.cap for c in res.assignment.counts.values())


def test_run_aborts_on_injected_state_corruption():
    sc = _scenario(faults=[FaultEvent(1, "crash", at_round=3)])
    sim = Simulation(sc)
    sim.runtimes[2].pstate.primary[1] = 3  # sabotage one replica's view
    with pytest.raises(InvariantViolationError) as err:
        sim.run()
    assert err.value.reports or err.value.trace_tail


def test_metrics_conservation_on_quiescent_runs():
    res = run(_scenario(duration=2500.0))
    m = res.metrics
    assert m.issued == m.decided_requests == m.executed_requests == m.confirmed
    for rid, ledger in res.ledgers.items():
        assert ledger.total() == res.ledgers[0].total()


def test_random_scenarios_validate_and_run():
    for seed in range(3):
        sc = make_random_scenario(seed, Mode.UNIFIED_REPLACEMENT)
        res = run(sc)
        assert res.metrics.violations == 0
        assert compare_logs(res.logs, res.faulty) is None
