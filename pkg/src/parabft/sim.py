"""Seeded deterministic discrete-event simulator binding all modules.

One canonical event loop produces each instance's per-round decisions (the
black-box guarantee: every replica observes the identical decision at the
identical simulated time). Every replica then runs its own deterministic
consumer, a ReplicaRuntime, with its own round table, primary state, ledger,
and execution log; agreement between those runtimes is what the invariant
checks and log comparisons verify.
"""
from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Optional

from .clients import (
    ChangeRejected,
    ClientAssignment,
    ReplyTracker,
    activate_reassignment,
    load_cap,
    match_replies,
    request_instance_change,
)
from .core import (
    FAIL,
    SKIP,
    Fail,
    InstanceChange,
    Mode,
    Noop,
    Request,
    RoundDecisionSet,
    Success,
    Transfer,
    make_request,
    partition_decisions,
)
from .errors import InvariantViolationError
from .instances import (
    HONEST,
    BehaviorProfile,
    ConsensusInstance,
    Crash,
    IgnoreClients,
    InstanceReplica,
    PlannedOutcome,
    QueuedChange,
    QueuedRequest,
    Throttle,
)
from .ordering import LedgerState, LogEntry, execute_round, execution_order
from .primaries import (
    BackoffState,
    apply_round_failures,
    check_invariant,
    init_primaries,
    next_retry,
    note_success,
)
from .scenario import Scenario, validate_scenario
from .scheduler import RoundTable, apply_skip, ready_rounds

# Event priorities; lower fires first at equal timestamps.
_P_FAULT, _P_RESOLVE, _P_RESUME, _P_EXEC, _P_ISSUE, _P_PATIENCE = range(6)

TRACE_TAIL = 40


@dataclass(frozen=True)
class TraceRecord:
    t: float
    replica: int  # -1 for canonical (network-level) events
    instance: int
    round: int
    kind: str

    def to_dict(self) -> dict:
        return {"t": self.t, "replica": self.replica, "instance": self.instance,
                "round": self.round, "kind": self.kind}


@dataclass
class RequestRecord:
    client: int
    seqno: int
    issue_t: float
    instance: int
    accept_t: Optional[float] = None
    decide_round: Optional[int] = None
    exec_t: Optional[float] = None
    confirm_t: Optional[float] = None

    @property
    def delay_us(self) -> Optional[float]:
        if self.accept_t is None or self.exec_t is None:
            return None
        return self.exec_t - self.accept_t


@dataclass
class DecisionStamp:
    round: int
    start_t: float
    resolve_t: float
    kind: str  # "success" | "fail" | "soft-fail"


@dataclass
class Metrics:
    elapsed_us: float = 0.0
    decisions_total: int = 0
    successes: dict[int, int] = field(default_factory=dict)
    failures: int = 0
    soft_failures: int = 0
    skips: int = 0
    replacements: int = 0
    reconsiderations: int = 0
    delays_us: list[float] = field(default_factory=list)
    max_backlog: dict[int, int] = field(default_factory=dict)
    backlog_third_maxima: list[int] = field(default_factory=lambda: [0, 0, 0])
    confirm_latency_us: dict[int, list[float]] = field(default_factory=dict)
    issued: int = 0
    decided_requests: int = 0
    executed_requests: int = 0
    confirmed: int = 0
    violations: int = 0
    quiescent: bool = False

    def throughput_dps(self) -> float:
        if self.elapsed_us <= 0:
            return 0.0
        return sum(self.successes.values()) / (self.elapsed_us / 1e6)

    def per_instance_dps(self) -> dict[int, float]:
        if self.elapsed_us <= 0:
            return {i: 0.0 for i in self.successes}
        return {i: c / (self.elapsed_us / 1e6) for i, c in self.successes.items()}

    def max_delay_us(self) -> float:
        return max(self.delays_us, default=0.0)

    def p99_delay_us(self) -> float:
        if not self.delays_us:
            return 0.0
        ordered = sorted(self.delays_us)
        idx = max(0, -(-99 * len(ordered) // 100) - 1)
        return ordered[idx]

    def delay_histogram(self, bucket_us: float = 50.0) -> dict[int, int]:
        hist: dict[int, int] = {}
        for d in self.delays_us:
            b = int(d // bucket_us)
            hist[b] = hist.get(b, 0) + 1
        return hist


class ReplicaRuntime:
    """One replica's deterministic reaction to the shared decision stream."""

    def __init__(self, rid: int, scenario: Scenario):
        cfg = scenario.config
        self.rid = rid
        self.cfg = cfg
        self.soft_on = scenario.soft_failures
        self.table = RoundTable(cfg.m)
        self.pstate = init_primaries(cfg)
        self.backoff = BackoffState(initial_delay=cfg.timing.backoff_initial_rounds)
        self.ledger = LedgerState(
            {acct: scenario.workload.initial_balance for acct in scenario.workload.accounts}
        )
        self.log: list[LogEntry] = []
        self.views = {
            i: InstanceReplica(instance=i, replica=rid, current_primary=i - 1)
            for i in range(1, cfg.m + 1)
        }
        self.soft_rounds: set[tuple[int, int]] = set()
        self.fail_primaries: dict[tuple[int, int], int] = {}
        self.dormant_until: dict[int, float] = {}
        self.replacements = 0

    def _drag_dormant(self, upto_round: int, now: float) -> int:
        """Rounds of an instance sitting out an in-place backoff resolve as Skip
        at the pace of the other instances, so no row ever waits on it."""
        dragged = 0
        for iid, until in list(self.dormant_until.items()):
            if now >= until:
                del self.dormant_until[iid]
                continue
            while self.table.cursors[iid] <= upto_round:
                self.table.record(iid, self.table.cursors[iid], SKIP)
                dragged += 1
        return dragged

    def on_decision(
        self, iid: int, round_num: int, decision, primary: int, soft: bool, now: float
    ) -> tuple[list[tuple], list[RoundDecisionSet], int]:
        """Record a genuine decision; returns (instructions, released rows, skip count)."""
        cfg = self.cfg
        skips = 0
        instructions: list[tuple] = []
        self.table.record(iid, round_num, decision)
        self.views[iid].current_round = self.table.cursors[iid]

        if isinstance(decision, Success):
            if cfg.mode is Mode.IN_PLACE_RECOVERY and iid in self.backoff.delay:
                note_success(self.backoff, iid)
        else:
            if soft:
                self.soft_rounds.add((iid, round_num))
            self.fail_primaries[(iid, round_num)] = primary
            if self.soft_on:
                apply_skip(self.table, iid, round_num, cfg.epsilon)
                skips += cfg.epsilon - 1
            if cfg.mode is Mode.IN_PLACE_RECOVERY:
                retry_round = next_retry(self.backoff, iid, round_num)
                dormancy_rounds = retry_round - round_num
                ready_at = (now + dormancy_rounds * cfg.timing.base_round_time_us
                            + cfg.timing.control_transfer_time_us)
                if self.soft_on:
                    self.dormant_until[iid] = ready_at
                instructions.append(("retry", iid, ready_at))

        if self.soft_on and self.dormant_until:
            skips += self._drag_dormant(round_num, now)

        released: list[RoundDecisionSet] = []
        for rds in ready_rounds(self.table):
            released.append(rds)
            _, fail = partition_decisions(rds)
            if fail and cfg.mode is Mode.UNIFIED_REPLACEMENT:
                prims = {i: self.fail_primaries[(i, rds.round)] for i in fail}
                softs = {i for i in fail if (i, rds.round) in self.soft_rounds}
                _, reass = apply_round_failures(
                    self.pstate, fail, prims, soft=softs, auto_reconsider=True
                )
                self.replacements += len(reass)
                for i, p in sorted(reass.items()):
                    self.views[i].current_primary = p
                    instructions.append(("transfer", i, p))
        return instructions, released, skips

    def execute_row(self, rds: RoundDecisionSet) -> tuple[list[Request], list[tuple]]:
        """Order and execute one released row; returns (ordered requests, replies)."""
        succ, _ = partition_decisions(rds)
        requests = {i: v for i, v in succ.items() if isinstance(v, Request)}
        ordered = execution_order(requests)
        self.ledger, replies = execute_round(self.ledger, ordered)
        for pos, (req, reply) in enumerate(zip(ordered, replies)):
            self.log.append(LogEntry(rds.round, pos, req.digest, reply[1]))
        return ordered, replies


@dataclass
class SimResult:
    scenario: Scenario
    metrics: Metrics
    logs: dict[int, list[LogEntry]]
    trace: list[TraceRecord]
    records: dict[tuple[int, int], RequestRecord]
    decision_stamps: dict[int, list[DecisionStamp]]
    assignment: ClientAssignment
    faulty: set[int]
    soft_failed: set[int]
    ledgers: dict[int, LedgerState]
    warnings: list[str]


class _ClientActor:
    def __init__(self, cid: int, plan: list):
        self.cid = cid
        self.plan = plan  # list of (seqno, payload)
        self.idx = 0
        self.blocked = False
        self.deferred = False
        self.barrier = -1  # last seqno issued before the pending instance change
        self.petition: Optional[QueuedChange] = None
        self.petition_at = 0.0
        self.unconfirmed: dict[int, float] = {}  # seqno -> issue time


class Simulation:
    def __init__(self, scenario: Scenario):
        validate_scenario(scenario)
        self.sc = scenario
        self.cfg = scenario.config
        cfg = self.cfg
        self.timing = cfg.timing
        self.duration = scenario.duration_us
        self.hard_end = scenario.duration_us * 3 + 20_000.0
        self.jitter_rng = random.Random((cfg.seed ^ 0x9E3779B97F4A7C15) & (2**64 - 1))
        self.now = 0.0
        self.heap: list = []
        self.seq = 0
        self.trace: list[TraceRecord] = []

        self.plants = {
            i: ConsensusInstance(i, primary=i - 1, filler_client=cfg.clients + i - 1)
            for i in range(1, cfg.m + 1)
        }
        self.tokens = {i: 0 for i in self.plants}
        self.resume_pending: set[int] = set()
        self.runtimes = [ReplicaRuntime(rid, scenario) for rid in range(cfg.n)]
        self.rt0 = self.runtimes[0]

        self.faulty = scenario.faulty_replicas()
        self.current_profile: dict[int, BehaviorProfile] = {r: HONEST for r in range(cfg.n)}
        self.round_crash: dict[int, int] = {}
        for ev in scenario.faults:
            if ev.kind == "crash" and ev.at_time_us is None:
                self.round_crash[ev.replica] = ev.at_round

        self.assignment = ClientAssignment.initial(
            cfg.clients, cfg.m, cap=load_cap(cfg.clients, cfg.n - cfg.f)
        )
        self.actors = {c: _ClientActor(c, plan) for c, plan in self._build_plans().items()}
        self.tracker = ReplyTracker()
        self.records: dict[tuple[int, int], RequestRecord] = {}
        self.decided: set[tuple[int, int]] = set()
        self.pending_activations: dict[int, list[InstanceChange]] = {}
        self.decision_stamps: dict[int, list[DecisionStamp]] = {i: [] for i in self.plants}

        self.metrics = Metrics(successes={i: 0 for i in self.plants},
                               max_backlog={i: 0 for i in self.plants})
        self.expected_failed: set[int] = set()
        self.soft_failed: set[int] = set()
        self.pipeline_free = 0.0

    # -- construction helpers --------------------------------------------------

    def _build_plans(self) -> dict[int, list]:
        w = self.sc.workload
        rng = random.Random((self.cfg.seed ^ 0xC2B2AE3D27D4EB4F) & (2**64 - 1))
        plans: dict[int, list] = {}
        accounts = list(w.accounts)
        for c in range(self.cfg.clients):
            plan = []
            for s in range(w.requests_per_client):
                kind = w.operation
                if kind == "mixed":
                    kind = rng.choice(("transfer", "noop"))
                if kind == "transfer" and len(accounts) >= 2:
                    src, dst = rng.sample(accounts, 2)
                    value = rng.randint(1, 50)
                    # threshold >= value keeps balances non-negative
                    payload = Transfer(src, dst, threshold=value + rng.randint(0, 40), value=value)
                else:
                    payload = Noop(tag=(c << 20) | s)
                plan.append((s, payload))
            plans[c] = plan
        return plans

    # -- event plumbing ----------------------------------------------------------

    def _push(self, t: float, prio: int, k1: int, k2: int, payload: tuple = ()) -> None:
        self.seq += 1
        heapq.heappush(self.heap, (t, prio, k1, k2, self.seq, payload))

    def _trace(self, replica: int, instance: int, round_num: int, kind: str) -> None:
        self.trace.append(TraceRecord(self.now, replica, instance, round_num, kind))

    def _profile_at(self, replica: int, round_num: int) -> BehaviorProfile:
        at_round = self.round_crash.get(replica)
        if at_round is not None and round_num >= at_round:
            return Crash(at_round=at_round)
        return self.current_profile[replica]

    # -- main loop -----------------------------------------------------------------

    def run(self) -> SimResult:
        for ev in self.sc.faults:
            if ev.at_time_us is not None:
                self._push(ev.at_time_us, _P_FAULT, ev.replica, 0, (ev,))
        for i in self.plants:
            self._push(0.0, _P_RESUME, 0, i)
        w = self.sc.workload
        patience_us = self.timing.patience_rounds * self.timing.base_round_time_us
        for c, actor in self.actors.items():
            if actor.plan:
                first = w.inter_arrival_us * (c + 1) / max(1, self.cfg.clients)
                self._push(first, _P_ISSUE, 0, c)
                if self.cfg.mode is Mode.IN_PLACE_RECOVERY:
                    self._push(first + patience_us, _P_PATIENCE, 0, c)

        while self.heap:
            t, prio, k1, k2, _, payload = heapq.heappop(self.heap)
            if t > self.hard_end:
                break
            if t > self.duration and self._drained():
                break
            self.now = t
            if prio == _P_FAULT:
                self._on_fault(payload[0])
            elif prio == _P_RESOLVE:
                self._on_resolve(k2, payload[0])
            elif prio == _P_RESUME:
                self.resume_pending.discard(k2)
                self._maybe_start(self.plants[k2])
            elif prio == _P_EXEC:
                self._on_exec(k1, payload[0])
            elif prio == _P_ISSUE:
                self._on_issue(k2)
            elif prio == _P_PATIENCE:
                self._on_patience(k2)
            if self.sc.soft_failures:
                self._sweep()

        self.metrics.elapsed_us = max(self.now, 1e-9)
        self.metrics.quiescent = self._drained()
        self._final_checks()
        return SimResult(
            scenario=self.sc,
            metrics=self.metrics,
            logs={rt.rid: rt.log for rt in self.runtimes},
            trace=self.trace,
            records=self.records,
            decision_stamps=self.decision_stamps,
            assignment=self.assignment,
            faulty=set(self.faulty),
            soft_failed=set(self.soft_failed),
            ledgers={rt.rid: rt.ledger for rt in self.runtimes},
            warnings=self.sc.warnings(),
        )

    def _drained(self) -> bool:
        if self.metrics.confirmed != self.metrics.issued:
            return False
        return all(a.idx >= len(a.plan) for a in self.actors.values())

    # -- fault schedule ---------------------------------------------------------------

    def _on_fault(self, ev) -> None:
        if ev.kind == "crash":
            self.current_profile[ev.replica] = Crash(at_time_us=ev.at_time_us, at_round=ev.at_round)
        elif ev.kind == "throttle":
            self.current_profile[ev.replica] = Throttle(factor=ev.factor)
        elif ev.kind == "ignore":
            self.current_profile[ev.replica] = IgnoreClients(frozenset(ev.clients))
        elif ev.kind == "recover":
            self.current_profile[ev.replica] = HONEST
            self.round_crash.pop(ev.replica, None)
        self._trace(ev.replica, 0, 0, f"fault:{ev.kind}")

    # -- rounds --------------------------------------------------------------------------

    def _maybe_start(self, plant: ConsensusInstance) -> None:
        if plant.inflight is not None or plant.waiting_for_primary:
            return
        if self.now < plant.ready_at:
            if plant.instance not in self.resume_pending:
                self.resume_pending.add(plant.instance)
                self._push(plant.ready_at, _P_RESUME, 0, plant.instance)
            return
        plant.cursor = self.rt0.table.cursors[plant.instance]
        profile = self._profile_at(plant.primary, plant.cursor)
        jitter = (self.jitter_rng.uniform(0.0, self.timing.latency_jitter_us)
                  if self.timing.latency_jitter_us > 0 else 0.0)
        planned = plant.step_round(profile, self.now, self.timing, jitter)
        self.tokens[plant.instance] += 1
        self._push(planned.resolve_at, _P_RESOLVE, planned.round, plant.instance,
                   (self.tokens[plant.instance],))

    def _on_resolve(self, iid: int, token: int) -> None:
        plant = self.plants[iid]
        if plant.inflight is None or token != self.tokens[iid]:
            return  # superseded by a soft failure
        planned = plant.inflight
        plant.inflight = None
        self._commit(plant, planned, soft=False)

    def _commit(self, plant: ConsensusInstance, planned: PlannedOutcome, soft: bool) -> None:
        iid, r = plant.instance, planned.round
        primary = plant.primary
        cfg = self.cfg
        if planned.success and not soft:
            decision = Success(self._commit_value(plant, planned))
            kind = "success"
            self.metrics.successes[iid] += 1
        else:
            decision = FAIL
            kind = "soft-fail" if soft else "fail"
            self.metrics.failures += 1
            if soft:
                self.metrics.soft_failures += 1
                self.soft_failed.add(primary)
            self.expected_failed.add(primary)
            if cfg.mode is Mode.UNIFIED_REPLACEMENT:
                plant.waiting_for_primary = True
            if isinstance(planned.entry, QueuedRequest):
                self._reroute_if_moved(plant, planned.entry)
        self.metrics.decisions_total += 1
        self.decision_stamps[iid].append(DecisionStamp(r, planned.started_at, self.now, kind))
        self._trace(-1, iid, r, f"decide:{kind}")

        instructions: list[tuple] = []
        released: list[RoundDecisionSet] = []
        for rt in self.runtimes:
            out = rt.on_decision(iid, r, decision, primary, soft, self.now)
            if rt.rid == 0:
                instructions, released, skips = out
                self.metrics.skips += skips
            elif out[0] != instructions or [x.round for x in out[1]] != [x.round for x in released]:
                raise InvariantViolationError(
                    f"replica {rt.rid} derived a different schedule at round {r}",
                    trace_tail=self.trace[-TRACE_TAIL:],
                )
        plant.cursor = self.rt0.table.cursors[iid]

        for ins in instructions:
            if ins[0] == "transfer":
                _, tgt, new_primary = ins
                tplant = self.plants[tgt]
                tplant.transfer_control(new_primary, self.now, self.timing)
                self.metrics.replacements += 1
                self._trace(-1, tgt, r, f"replace:{new_primary}")
                self._maybe_start(tplant)
            elif ins[0] == "retry":
                _, tgt, ready_at = ins
                tplant = self.plants[tgt]
                tplant.ready_at = ready_at
                self._trace(-1, tgt, r, "retry")
                self._maybe_start(tplant)

        for rds in released:
            self._schedule_exec(rds)
            self._trace(-1, 0, rds.round, "release")
        if any(isinstance(d, Fail) for rds in released for d in rds.decisions.values()):
            self._boundary_check(released[-1].round)

        backlog = plant.cursor - self.rt0.table.executed_up_to
        self.metrics.max_backlog[iid] = max(self.metrics.max_backlog[iid], backlog)
        third = min(2, int(3 * self.now / self.duration)) if self.duration > 0 else 0
        self.metrics.backlog_third_maxima[third] = max(
            self.metrics.backlog_third_maxima[third], backlog
        )
        self.metrics.reconsiderations = self.rt0.pstate.reconsidered

        self._maybe_start(plant)

    def _commit_value(self, plant: ConsensusInstance, planned: PlannedOutcome):
        iid, r = plant.instance, planned.round
        entry = planned.entry
        if entry is None:
            return planned.filler
        entry.decided = True
        entry.in_flight = False
        if isinstance(entry, QueuedRequest):
            req = entry.request
            self.decided.add((req.client, req.seqno))
            rec = self.records.get((req.client, req.seqno))
            if rec is not None:
                rec.accept_t = self.now
                rec.decide_round = r
                rec.instance = iid
                self.metrics.decided_requests += 1
            return req
        # Instance-change petition: the effective round is stamped now that the
        # decision round is known.
        change = request_instance_change(
            entry.client, entry.target, self.assignment, r, self.cfg.sigma
        )
        actor = self.actors[entry.client]
        if isinstance(change, ChangeRejected):
            # Capacity filled up since the petition was accepted; the client
            # retries after its patience window.
            if actor.petition is entry:
                actor.petition = None
            return make_request(plant.filler_client, r, Noop(tag=r))
        self.pending_activations.setdefault(change.effective, []).append(change)
        self._trace(-1, iid, r, f"change-decided:{entry.client}")
        return change

    def _reroute_if_moved(self, plant: ConsensusInstance, entry: QueuedRequest) -> None:
        # After a failed round, a proposed-but-undecided request whose client
        # has moved to another instance is forwarded there.
        if entry.decided:
            return
        home = self.assignment.instance_of(entry.client)
        if home != plant.instance:
            for e in plant.take_undecided(entry.client):
                self.plants[home].enqueue_value(e)

    # -- soft-failure detection -----------------------------------------------------------

    def _sweep(self) -> None:
        sigma = self.cfg.sigma
        while True:
            working = {i: p.inflight.round for i, p in self.plants.items()
                       if p.inflight is not None}
            victims = sorted(
                (r, i) for i, r in working.items()
                if any(working[j] >= r + sigma for j in working if j != i)
            )
            if not victims:
                return
            for r, i in victims:
                plant = self.plants[i]
                if plant.inflight is None or plant.inflight.round != r:
                    continue
                planned = plant.inflight
                plant.abort_inflight()
                self.tokens[i] += 1  # invalidate the scheduled resolution
                self._commit(plant, planned, soft=True)

    # -- execution --------------------------------------------------------------------------

    def _schedule_exec(self, rds: RoundDecisionSet) -> None:
        succ, _ = partition_decisions(rds)
        n_requests = sum(1 for v in succ.values() if isinstance(v, Request))
        start = max(self.now, self.pipeline_free)
        end = start + n_requests * self.timing.execution_time_us
        self.pipeline_free = end
        self._push(end, _P_EXEC, rds.round, 0, (start,))

    def _on_exec(self, round_num: int, start: float) -> None:
        ordered0: list[Request] = []
        all_replies: dict[int, list] = {}
        for rt in self.runtimes:
            ordered, replies = rt.execute_row(rt.table.row(round_num))
            if rt.rid == 0:
                ordered0 = ordered
            all_replies[rt.rid] = replies
        e = self.timing.execution_time_us
        confirmed_now: list[int] = []
        for pos, req in enumerate(ordered0):
            key = (req.client, req.seqno)
            rec = self.records.get(key)
            if rec is None:
                continue  # filler traffic
            texec = start + (pos + 1) * e
            rec.exec_t = texec
            self.metrics.executed_requests += 1
            if rec.accept_t is not None:
                self.metrics.delays_us.append(texec - rec.accept_t)
            for rid, replies in all_replies.items():
                if rid in self.faulty:
                    continue  # faulty replicas withhold replies
                self.tracker.add_reply(req.client, req.seqno, rid, replies[pos][1])
            if rec.confirm_t is None:
                result = match_replies(self.tracker, req.client, req.seqno, self.cfg.f)
                if result is not None:
                    rec.confirm_t = self.now
                    self.metrics.confirmed += 1
                    self.metrics.confirm_latency_us.setdefault(req.client, []).append(
                        self.now - rec.issue_t
                    )
                    confirmed_now.append(req.client)
        self._trace(-1, 0, round_num, "execute")

        for change in sorted(self.pending_activations.pop(round_num, ()),
                             key=lambda ch: (ch.client, ch.target)):
            self._activate(change)
        for cid in confirmed_now:
            self._note_progress(cid)

    def _activate(self, change: InstanceChange) -> None:
        old = self.assignment.instance_of(change.client)
        if activate_reassignment(self.assignment, change):
            for entry in self.plants[old].take_undecided(change.client):
                self.plants[change.target].enqueue_value(entry)
            self._trace(-1, change.target, change.effective, f"activate:{change.client}")
        actor = self.actors[change.client]
        actor.petition = None
        self._note_progress(change.client)

    # -- clients -------------------------------------------------------------------------------

    def _on_issue(self, cid: int) -> None:
        actor = self.actors[cid]
        if actor.idx >= len(actor.plan):
            return
        if actor.blocked:
            actor.deferred = True
            return
        seqno, payload = actor.plan[actor.idx]
        actor.idx += 1
        req = make_request(cid, seqno, payload)
        iid = self.assignment.instance_of(cid)
        self.plants[iid].enqueue_value(QueuedRequest(req, arrival=self.now))
        self.records[(cid, seqno)] = RequestRecord(cid, seqno, self.now, iid)
        actor.unconfirmed[seqno] = self.now
        self.metrics.issued += 1
        if actor.idx < len(actor.plan):
            self._push(self.now + self.sc.workload.inter_arrival_us, _P_ISSUE, 0, cid)

    def _note_progress(self, cid: int) -> None:
        actor = self.actors[cid]
        for seqno in list(actor.unconfirmed):
            if self.records[(cid, seqno)].confirm_t is not None:
                del actor.unconfirmed[seqno]
        if actor.blocked and actor.petition is None:
            if all(s > actor.barrier for s in actor.unconfirmed):
                actor.blocked = False
                if actor.deferred:
                    actor.deferred = False
                    self._push(self.now, _P_ISSUE, 0, cid)

    def _on_patience(self, cid: int) -> None:
        actor = self.actors[cid]
        patience_us = self.timing.patience_rounds * self.timing.base_round_time_us
        if actor.idx < len(actor.plan) or actor.unconfirmed:
            self._push(self.now + patience_us, _P_PATIENCE, 0, cid)
        if not actor.unconfirmed:
            return
        oldest = min(actor.unconfirmed.values())
        if self.now - oldest < patience_us:
            return
        if actor.petition is not None:
            if self.now - actor.petition_at < patience_us:
                return
            actor.petition.decided = True  # stale petition: stop proposing it
            actor.petition = None
        current = self.assignment.instance_of(cid)
        for offset in range(1, self.cfg.m):
            target = ((current - 1 + offset) % self.cfg.m) + 1
            if self.assignment.counts.get(target, 0) >= self.assignment.cap:
                continue
            petition = QueuedChange(cid, target, arrival=self.now)
            self.plants[target].enqueue_value(petition)
            actor.petition = petition
            actor.petition_at = self.now
            actor.blocked = True
            actor.barrier = actor.idx - 1
            self._trace(-1, target, 0, f"petition:{cid}")
            return

    # -- checks -----------------------------------------------------------------------------------

    def _boundary_check(self, round_num: int) -> None:
        if self.cfg.mode is not Mode.UNIFIED_REPLACEMENT:
            return
        states = {rt.rid: rt.pstate for rt in self.runtimes if rt.rid not in self.faulty}
        expected = None if self.rt0.pstate.reconsidered else self.expected_failed
        reports = check_invariant(
            states, set(self.faulty), round_num,
            expected_failed=expected, recoverable=self.soft_failed,
        )
        if reports:
            self.metrics.violations += len(reports)
            raise InvariantViolationError(
                f"{len(reports)} invariant violation(s) at round {round_num}: "
                f"{reports[0].detail}",
                reports=reports, trace_tail=self.trace[-TRACE_TAIL:],
            )

    def _final_checks(self) -> None:
        self._boundary_check(self.rt0.table.executed_up_to)
        div = compare_logs({rt.rid: rt.log for rt in self.runtimes}, self.faulty)
        if div is not None:
            self.metrics.violations += 1
            raise InvariantViolationError(
                f"execution logs diverge at round {div[0]} position {div[1]}",
                trace_tail=self.trace[-TRACE_TAIL:],
            )


def run(scenario: Scenario) -> SimResult:
    """Run one scenario to completion; deterministic given (scenario, seed)."""
    return Simulation(scenario).run()


def compare_logs(logs: dict[int, list], faulty: set[int]) -> Optional[tuple[int, int]]:
    """None if all non-faulty logs are identical, else the first divergence."""
    ids = sorted(set(logs) - set(faulty))
    if not ids:
        return None
    ref = logs[ids[0]]
    for rid in ids[1:]:
        other = logs[rid]
        for a, b in zip(ref, other):
            if a != b:
                return (a.round, a.position)
        if len(ref) != len(other):
            longer = ref if len(ref) > len(other) else other
            entry = longer[min(len(ref), len(other))]
            return (entry.round, entry.position)
    return None
