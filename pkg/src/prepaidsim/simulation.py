"""One scenario run end to end: wiring, event scheduling, and result metrics.

A Simulation owns every mutable element it creates (registry, pools, queue), so
independent instances never share state and the compare command can run the
same workload once per scheme in isolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .accounts import (
    AccountStatus,
    EntryKind,
    InsufficientBalance,
    Money,
    PrepaidAccount,
    rate_voice_cost,
    replay_balance,
)
from .cdr import CallDetailRecord
from .engine import ChannelPool, EventQueue, ScriptedCall, WorkloadMode, generate_workload
from .scenario import Diagnostic, Scenario, ScenarioError
from .schemes import (
    CallSession,
    Network,
    ProtocolMessage,
    RejectReason,
    SchemeKind,
    SessionState,
    flush_pending_dispatches,
    force_release,
    reject_session,
    start_call,
)
from .topup import (
    CallInProgress,
    CountermeasurePolicy,
    SubscriberRegistry,
    TopUpChannel,
    TopUpRejected,
    redeem_voucher,
    topup_direct,
    transfer_credit,
)


class InvariantViolation(Exception):
    """A conservation or accounting invariant broke; the run is not trustworthy."""


@dataclass
class RejectedOperation:
    sim_time: int
    kind: str  # "topup" | "transfer"
    reason: str
    detail: str


@dataclass
class SimulationResult:
    horizon: int
    seed: int
    registry: SubscriberRegistry
    sessions: list[CallSession]
    cdrs: list[CallDetailRecord]
    trace: list[ProtocolMessage] | None
    voice_pool: ChannelPool
    notify_pool: ChannelPool
    events_processed: int
    calls_requested: int = 0
    calls_connected: int = 0
    calls_rejected: int = 0
    rejects_by_reason: dict[str, int] = field(default_factory=dict)
    topups_applied: int = 0
    transfers_applied: int = 0
    rejected_operations: list[RejectedOperation] = field(default_factory=list)

    @property
    def accounts(self) -> list[PrepaidAccount]:
        return [self.registry.by_msisdn[m] for m in sorted(self.registry.by_msisdn)]

    @property
    def total_revenue(self) -> Money:
        """Everything billed through the ledgers (charges), collected or not."""
        return sum(-e.amount for a in self.accounts for e in a.ledger
                   if e.kind is EntryKind.CHARGE)

    @property
    def total_topup_credit(self) -> Money:
        return sum(e.amount for a in self.accounts for e in a.ledger
                   if e.kind is EntryKind.TOPUP)

    @property
    def credit_exposure(self) -> Money:
        """Balance the operator can never collect: the negative tails."""
        return sum(max(0, -a.balance) for a in self.accounts)

    @property
    def suspended_accounts(self) -> int:
        return sum(1 for a in self.accounts if a.status is AccountStatus.SUSPENDED)

    @property
    def rejected_for_id(self) -> int:
        return sum(1 for r in self.rejected_operations
                   if r.reason in ("IdMissing", "IdMismatch"))


class Simulation:
    """Deterministic single run of one scenario."""

    def __init__(
        self,
        scenario: Scenario,
        *,
        seed: int | None = None,
        voucher_batch: str | None = None,
        scheme_override: SchemeKind | None = None,
        policy_override: bool | None = None,
        tampered_imsis: frozenset = frozenset(),
        cdr_dispatch_delay: int = 0,
        record_trace: bool = True,
    ) -> None:
        self.scenario = scenario
        self.seed = seed if seed is not None else scenario.seed
        self.scheme_override = scheme_override
        self.policy = (CountermeasurePolicy(policy_override) if policy_override is not None
                       else scenario.policy)

        self.registry = SubscriberRegistry()
        for entry in scenario.accounts:
            tariff = scenario.tariffs[entry.tariff_id]
            self.registry.register(PrepaidAccount(replace(entry.subscriber),
                                                  entry.initial_balance, tariff))
        if voucher_batch:
            self.registry.import_voucher_batch(voucher_batch)

        self.queue = EventQueue()
        self.voice_pool = ChannelPool(scenario.channel_capacity, "voice")
        self.notify_pool = ChannelPool(None, "notification")
        self.net = Network(
            queue=self.queue,
            voice_pool=self.voice_pool,
            notify_pool=self.notify_pool,
            accounts_by_imsi=self.registry.by_imsi,
            trace=[] if record_trace else None,
            cdr_dispatch_delay=cdr_dispatch_delay,
            tampered_imsis=tampered_imsis,
            on_session_done=self._session_done,
        )

        self.sessions: list[CallSession] = []
        self.cdrs: list[CallDetailRecord] = []
        self.active_by_imsi: dict[str, CallSession] = {}
        self._counters = {"connected": 0, "rejected": 0}
        self._rejects_by_reason: dict[str, int] = {}
        self._rejected_ops: list[RejectedOperation] = []
        self._topups_applied = 0
        self._transfers_applied = 0

    # --- wiring ---

    def _workload(self) -> list[ScriptedCall]:
        spec = self.scenario.workload
        if spec.mode is WorkloadMode.RANDOM and self.seed != spec.random.seed:
            spec = replace(spec, random=replace(spec.random, seed=self.seed))
        calls = generate_workload(spec, self.scenario.horizon)
        if self.scheme_override is not None:
            calls = [replace(c, scheme=self.scheme_override) for c in calls]
        missing = [c for c in calls if c.scheme is None]
        if missing:
            raise ScenarioError([Diagnostic(0, 0,
                "workload contains calls without a scheme; add schemes= to the "
                "random directive or run through compare")])
        return calls

    def run(self) -> SimulationResult:
        horizon = self.scenario.horizon
        calls = self._workload()
        for call in calls:
            if call.start_time <= horizon:
                self.queue.schedule(call.start_time,
                                    lambda c=call: self._start_call(c))
        for scheduled in self.scenario.topups:
            if scheduled.time <= horizon:
                self.queue.schedule(scheduled.time,
                                    lambda s=scheduled: self._do_topup(s))
        for scheduled in self.scenario.transfers:
            if scheduled.time <= horizon:
                self.queue.schedule(scheduled.time,
                                    lambda s=scheduled: self._do_transfer(s))

        self.queue.run_until(horizon)
        for session in self.sessions:
            force_release(self.net, session)
        flush_pending_dispatches(self.net)
        self._check_invariants()

        result = SimulationResult(
            horizon=horizon,
            seed=self.seed,
            registry=self.registry,
            sessions=self.sessions,
            cdrs=self.cdrs,
            trace=self.net.trace,
            voice_pool=self.voice_pool,
            notify_pool=self.notify_pool,
            events_processed=self.queue.processed,
            calls_requested=len(calls),
            calls_connected=self._counters["connected"],
            calls_rejected=self._counters["rejected"],
            rejects_by_reason=dict(sorted(self._rejects_by_reason.items())),
            topups_applied=self._topups_applied,
            transfers_applied=self._transfers_applied,
            rejected_operations=self._rejected_ops,
        )
        return result

    # --- event handlers ---

    def _start_call(self, call: ScriptedCall) -> None:
        account = self.registry.by_msisdn.get(call.caller)
        imsi = account.imsi if account else call.caller
        session = CallSession(
            session_id=f"s{len(self.sessions):06d}",
            scheme=call.scheme,
            caller_imsi=imsi,
            callee_msisdn=call.callee,
            requested_duration=call.duration,
            start_time=self.queue.clock,
        )
        self.sessions.append(session)
        active = self.active_by_imsi.get(imsi)
        if active is not None and active.state is SessionState.CONNECTED:
            # One outgoing call at a time per subscriber; this is also what
            # bounds hot billing's exposure to a single call.
            reject_session(self.net, session, RejectReason.CALLER_BUSY)
            return
        start_call(self.net, session)
        if session.state is SessionState.CONNECTED:
            self.active_by_imsi[imsi] = session
            self._counters["connected"] += 1

    def _session_done(self, session: CallSession) -> None:
        if self.active_by_imsi.get(session.caller_imsi) is session:
            del self.active_by_imsi[session.caller_imsi]
        if session.state is SessionState.REJECTED:
            self._counters["rejected"] += 1
            reason = session.reject_reason.value
            self._rejects_by_reason[reason] = self._rejects_by_reason.get(reason, 0) + 1
        account = self.registry.by_imsi.get(session.caller_imsi)
        tariff = account.tariff if account else None
        cost = rate_voice_cost(tariff, session.billed_duration) if tariff else 0
        self.cdrs.append(CallDetailRecord(
            record_id=f"r{len(self.cdrs):06d}",
            session_id=session.session_id,
            imsi=session.caller_imsi,
            msisdn=account.msisdn if account else "-",
            scheme=session.scheme,
            start_time=session.start_time,
            billed_duration=session.billed_duration,
            cost=cost,
            termination_reason=session.termination_reason.value,
        ))

    def _active_session(self, msisdn: str) -> CallSession | None:
        account = self.registry.by_msisdn.get(msisdn)
        if account is None:
            return None
        session = self.active_by_imsi.get(account.imsi)
        if session is not None and session.state is SessionState.CONNECTED:
            return session
        return None

    def _credit_sim_mirror(self, msisdn: str, amount: Money) -> None:
        """A top-up during a handset call reaches the SIM copy too, so the tick
        schedule sees the new money immediately."""
        session = self._active_session(msisdn)
        if session is not None and session.scheme is SchemeKind.HANDSET:
            session._ms.sim_balance += amount

    def _do_topup(self, scheduled) -> None:
        request = scheduled.request
        now = self.queue.clock
        try:
            active = self._active_session(request.target_msisdn)
            if active is not None and active.scheme in (
                    SchemeKind.INTELLIGENT_NETWORK, SchemeKind.SERVICE_NODE):
                # The running countdown cannot be extended, so the top-up is
                # refused outright instead of being half-applied.
                raise CallInProgress(
                    f"{request.target_msisdn} is on an {active.scheme.value} call")
            if request.channel is TopUpChannel.VOUCHER:
                redeem_voucher(request, self.policy, self.registry, now)
                amount = self.registry.vouchers[request.voucher_code].face_value
            else:
                topup_direct(request, self.policy, self.registry, now)
                amount = request.amount
            self._credit_sim_mirror(request.target_msisdn, amount)
            self._topups_applied += 1
        except TopUpRejected as exc:
            self._rejected_ops.append(RejectedOperation(
                now, "topup", type(exc).__name__, str(exc)))

    def _do_transfer(self, scheduled) -> None:
        now = self.queue.clock
        try:
            if self._active_session(scheduled.from_msisdn) is not None:
                # The sender's balance is committed to the call in progress.
                raise CallInProgress(f"{scheduled.from_msisdn} is on a call")
            transfer_credit(scheduled.from_msisdn, scheduled.to_msisdn,
                            scheduled.amount, scheduled.presented_id,
                            self.policy, self.registry, now)
            self._credit_sim_mirror(scheduled.to_msisdn, scheduled.amount)
            self._transfers_applied += 1
        except (TopUpRejected, InsufficientBalance) as exc:
            self._rejected_ops.append(RejectedOperation(
                now, "transfer", type(exc).__name__, str(exc)))

    # --- end-of-run checks ---

    def _check_invariants(self) -> None:
        if self.voice_pool.in_use != 0 or self.notify_pool.in_use != 0:
            raise InvariantViolation(
                f"channels still in use at horizon: voice={self.voice_pool.in_use} "
                f"notification={self.notify_pool.in_use}")
        if self.voice_pool.total_allocated != self.voice_pool.total_released:
            raise InvariantViolation("voice channel allocate/release mismatch")
        for account in self.registry.by_msisdn.values():
            if replay_balance(account) != account.balance:
                raise InvariantViolation(f"ledger replay mismatch on {account.msisdn}")
        for session in self.sessions:
            if session.state not in (SessionState.RELEASED, SessionState.REJECTED):
                raise InvariantViolation(f"session {session.session_id} never terminated")
