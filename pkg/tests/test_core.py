import hashlib
import struct

import pytest
from hypothesis import given
from hypothesis import strategies as st

from parabft.core import (
    FAIL,
    SKIP,
    InstanceChange,
    Mode,
    Noop,
    RoundDecisionSet,
    Success,
    TimingModel,
    Transfer,
    default_epsilon,
    encode_operation,
    make_request,
    partition_decisions,
    request_bytes,
    validate_config,
)
from parabft.errors import (
    FactorialOverflow,
    InvalidConfig,
    TooFewReplicas,
    TooManyInstances,
)


def test_validate_config_accepts_minimal_service():
    cfg = validate_config(n=4, f=1, m=3, clients=5, sigma=2, mode=Mode.UNIFIED_REPLACEMENT)
    assert cfg.n == 4 and cfg.m == 3


def test_validate_config_rejects_too_few_replicas():
    with pytest.raises(TooFewReplicas):
        validate_config(n=3, f=1, m=1, clients=2, mode=Mode.IN_PLACE_RECOVERY)


def test_validate_config_rejects_m_above_n_minus_f_in_unified_mode():
    with pytest.raises(TooManyInstances):
        validate_config(n=4, f=1, m=4, clients=5, mode=Mode.UNIFIED_REPLACEMENT)


def test_validate_config_allows_m_above_n_minus_f_in_place():
    cfg = validate_config(n=4, f=1, m=4, clients=5, mode=Mode.IN_PLACE_RECOVERY)
    assert cfg.m == 4


def test_validate_config_rejects_factorial_overflow():
    with pytest.raises(FactorialOverflow):
        validate_config(n=70, f=1, m=21, clients=30, mode=Mode.IN_PLACE_RECOVERY)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(sigma=0),
        dict(epsilon=0),
        dict(clients=3),  # must exceed m
    ],
)
def test_validate_config_rejects_bad_parameters(kwargs):
    base = dict(n=4, f=1, m=3, clients=5, sigma=1, mode=Mode.IN_PLACE_RECOVERY)
    base.update(kwargs)
    with pytest.raises(InvalidConfig):
        validate_config(**base)


def test_validate_config_is_idempotent():
    cfg = validate_config(n=7, f=2, m=4, clients=9, sigma=3, mode=Mode.UNIFIED_REPLACEMENT)
    assert validate_config(cfg) is cfg


def test_timing_model_rejects_detection_below_round_time():
    with pytest.raises(InvalidConfig):
        TimingModel(base_round_time_us=10.0, failure_detection_timeout_us=5.0).validate()


def test_default_epsilon_covers_gap_and_transfer():
    t = TimingModel(base_round_time_us=10.0, control_transfer_time_us=100.0)
    assert default_epsilon(3, t) == 13
    assert default_epsilon(1, TimingModel(control_transfer_time_us=0.0)) == 1


# --- canonical serialization ---------------------------------------------------

def test_request_digest_matches_canonical_bytes():
    payload = Transfer("alice", "bob", threshold=500, value=200)
    req = make_request(7, 3, payload)
    expected = (
        struct.pack(">QQ", 7, 3)
        + b"\x00"
        + struct.pack(">H", 5) + b"alice"
        + struct.pack(">H", 3) + b"bob"
        + struct.pack(">QQ", 500, 200)
    )
    assert request_bytes(7, 3, payload) == expected
    assert req.digest == hashlib.sha256(expected).digest()


def test_noop_serialization():
    assert encode_operation(Noop(tag=9)) == b"\x01" + struct.pack(">Q", 9)


def test_digest_differs_for_different_requests():
    a = make_request(1, 0, Noop(tag=0))
    b = make_request(1, 1, Noop(tag=0))
    assert a.digest != b.digest


# --- partitioning ----------------------------------------------------------------

def _req(i):
    return make_request(i, 0, Noop(tag=i))


def test_partition_splits_success_and_fail():
    rho = _req(1)
    d = RoundDecisionSet(0, {1: Success(rho), 2: FAIL})
    succ, fail = partition_decisions(d)
    assert succ == {1: rho} and fail == {2}


def test_partition_all_fail():
    d = RoundDecisionSet(0, {1: FAIL, 2: FAIL})
    succ, fail = partition_decisions(d)
    assert succ == {} and fail == {1, 2}


def test_partition_excludes_skip():
    rho = _req(2)
    d = RoundDecisionSet(0, {1: SKIP, 2: Success(rho)})
    succ, fail = partition_decisions(d)
    assert succ == {2: rho} and fail == set()


@given(
    st.dictionaries(
        st.integers(min_value=1, max_value=8),
        st.sampled_from(["success", "fail", "skip"]),
        min_size=1,
        max_size=8,
    )
)
def test_partition_is_a_disjoint_cover(kinds):
    decisions = {}
    for iid, kind in kinds.items():
        if kind == "success":
            decisions[iid] = Success(_req(iid))
        elif kind == "fail":
            decisions[iid] = FAIL
        else:
            decisions[iid] = SKIP
    succ, fail = partition_decisions(RoundDecisionSet(0, decisions))
    skipped = set(decisions) - set(succ) - fail
    assert set(succ) | fail | skipped == set(decisions)
    assert not (set(succ) & fail)
    assert all(decisions[i] is SKIP for i in skipped)


def test_instance_change_value_round_trip():
    ch = InstanceChange(client=2, target=3, effective=16)
    d = RoundDecisionSet(4, {1: Success(ch)})
    succ, fail = partition_decisions(d)
    assert succ[1] is ch and not fail
