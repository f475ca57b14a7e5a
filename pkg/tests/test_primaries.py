import pytest
from hypothesis import given
from hypothesis import strategies as st

from parabft.core import Mode, validate_config
from parabft.errors import NoReplicaAvailable
from parabft.primaries import (
    BackoffState,
    PrimaryState,
    apply_round_failures,
    check_invariant,
    init_primaries,
    next_retry,
    note_success,
    reconsider_failed,
)


def _cfg(n=4, f=1, m=2):
    return validate_config(n=n, f=f, m=m, clients=m + 2, mode=Mode.UNIFIED_REPLACEMENT)


def test_init_assigns_low_ids():
    st_ = init_primaries(_cfg(n=4, m=2))
    assert st_.primary == {1: 0, 2: 1} and st_.failed == set()


def test_init_single_instance():
    assert init_primaries(_cfg(n=4, m=1)).primary == {1: 0}


def test_init_full_width_is_a_bijection():
    st_ = init_primaries(validate_config(n=4, f=0, m=4, clients=6, mode=Mode.UNIFIED_REPLACEMENT))
    assert sorted(st_.primary.values()) == [0, 1, 2, 3]


def test_single_failure_skips_replica_in_use():
    st_ = init_primaries(_cfg())
    _, reass = apply_round_failures(st_, {1}, {1: 0})
    # replica 1 leads instance 2, so instance 1 must get replica 2
    assert st_.primary == {1: 2, 2: 1}
    assert st_.failed == {0}
    assert reass == {1: 2}


def test_double_failure_yields_distinct_primaries():
    st_ = init_primaries(_cfg())
    _, reass = apply_round_failures(st_, {1, 2}, {1: 0, 2: 1})
    assert st_.primary == {1: 2, 2: 3}
    assert st_.failed == {0, 1}
    assert reass == {1: 2, 2: 3}


def test_no_failures_is_a_no_op():
    st_ = init_primaries(_cfg())
    before = st_.snapshot()
    _, reass = apply_round_failures(st_, set(), {})
    assert st_.snapshot() == before and reass == {}


def test_replacement_never_reuses_just_failed_primary():
    st_ = init_primaries(_cfg(n=7, f=2, m=3))
    _, reass = apply_round_failures(st_, {2}, {2: 1})
    assert reass[2] != 1
    assert 1 not in st_.primary.values()


def test_exhaustion_raises_without_reconsideration():
    st_ = init_primaries(_cfg(n=4, f=1, m=3))
    st_.mark_failed(3, soft=False)
    # primaries {0,1,2} in use, replica 3 failed: nothing left for a new failure
    with pytest.raises(NoReplicaAvailable):
        apply_round_failures(st_, {1}, {1: 0})


def test_exhaustion_reintroduces_earliest_failed():
    st_ = init_primaries(_cfg(n=4, f=1, m=3))
    st_.mark_failed(3, soft=False)
    _, reass = apply_round_failures(st_, {1}, {1: 0}, auto_reconsider=True)
    # replica 3 (earliest failure) is reconsidered and chosen
    assert reass == {1: 3}
    assert st_.reconsidered == 1


def test_reconsider_prefers_soft_failures():
    st_ = PrimaryState(n=4, m=1, primary={1: 0})
    st_.mark_failed(1, soft=False)
    st_.mark_failed(2, soft=True)
    reconsider_failed(st_)
    assert st_.failed == {1}  # the soft entry left first


def test_reconsider_fifo_and_empty():
    st_ = PrimaryState(n=4, m=1, primary={1: 3})
    st_.mark_failed(0, soft=False)
    st_.mark_failed(1, soft=False)
    reconsider_failed(st_)
    assert st_.failed == {1}
    reconsider_failed(st_)
    assert st_.failed == set()
    reconsider_failed(st_)  # nothing to reintroduce
    assert st_.failed == set()


def test_determinism_across_replicas():
    a, b = init_primaries(_cfg(n=7, f=2, m=4)), init_primaries(_cfg(n=7, f=2, m=4))
    for fails, prims in [({2}, {2: 1}), ({1, 4}, {1: 0, 4: 3})]:
        apply_round_failures(a, fails, prims)
        apply_round_failures(b, fails, prims)
        assert a.snapshot() == b.snapshot()


@given(st.lists(st.integers(min_value=1, max_value=4), min_size=0, max_size=12))
def test_random_failure_sequences_keep_invariants(failing_instances):
    cfg = validate_config(n=14, f=4, m=4, clients=6, mode=Mode.UNIFIED_REPLACEMENT)
    st_ = init_primaries(cfg)
    for iid in failing_instances:
        prim = st_.primary[iid]
        apply_round_failures(st_, {iid}, {iid: prim}, auto_reconsider=True)
        assert sorted(st_.primary) == [1, 2, 3, 4]
        assert len(set(st_.primary.values())) == 4
        assert not set(st_.primary.values()) & st_.failed


# --- invariant checker ------------------------------------------------------------

def test_check_invariant_passes_on_agreement():
    states = {}
    for rid in (0, 2, 3):
        s = PrimaryState(n=4, m=2, primary={1: 2, 2: 3})
        s.mark_failed(0, soft=False)
        s.mark_failed(1, soft=False)
        states[rid] = s
    reports = check_invariant(states, faulty={0, 1}, round_num=5, expected_failed={0, 1})
    assert reports == []


def test_check_invariant_flags_duplicate_primary():
    s = PrimaryState(n=4, m=2, primary={1: 2, 2: 2})
    reports = check_invariant({0: s}, faulty=set(), round_num=1)
    assert any(r.kind == "injectivity" for r in reports)


def test_check_invariant_flags_disagreement():
    a = PrimaryState(n=4, m=2, primary={1: 0, 2: 1})
    b = PrimaryState(n=4, m=2, primary={1: 0, 2: 3})
    reports = check_invariant({0: a, 1: b}, faulty=set(), round_num=2)
    assert any(r.kind == "agreement" for r in reports)


def test_check_invariant_flags_failed_set_mismatch():
    s = PrimaryState(n=4, m=1, primary={1: 1})
    s.mark_failed(0, soft=False)
    reports = check_invariant({0: s}, faulty={0}, round_num=3, expected_failed=set())
    assert any(r.kind == "failed-set" for r in reports)


def test_check_invariant_allows_recoverable_soft_failures():
    s = PrimaryState(n=4, m=1, primary={1: 1})
    s.mark_failed(0, soft=True)
    reports = check_invariant(
        {0: s}, faulty=set(), round_num=3, expected_failed={0}, recoverable={0}
    )
    assert reports == []


def test_invariant_report_serializes():
    s = PrimaryState(n=4, m=2, primary={1: 2, 2: 2})
    report = check_invariant({0: s}, faulty=set(), round_num=1)[0]
    d = report.to_dict()
    assert d["kind"] == "injectivity" and d["round"] == 1


# --- backoff ---------------------------------------------------------------------------

def test_backoff_doubles_per_failure():
    bo = BackoffState(initial_delay=2)
    assert next_retry(bo, 1, failed_at=10) == 12
    assert bo.delay[1] == 4
    assert next_retry(bo, 1, failed_at=12) == 16
    assert bo.delay[1] == 8


def test_backoff_resets_after_success():
    bo = BackoffState(initial_delay=2)
    next_retry(bo, 1, failed_at=10)
    note_success(bo, 1)
    assert next_retry(bo, 1, failed_at=30) == 32


def test_backoff_is_per_instance():
    bo = BackoffState(initial_delay=2)
    next_retry(bo, 1, failed_at=10)
    assert next_retry(bo, 2, failed_at=10) == 12
