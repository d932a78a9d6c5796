"""The four prepaid charging architectures as message-driven call state machines.

Each scheme drives a CallSession through Setup -> Connected -> Released (or
Rejected) over simulated network elements (MSC, SCP, intelligent peripheral,
service node, PBP, HLR, PSC, mobile station). Every protocol step is emitted
into the message trace, so two runs can be compared structurally.

Scheme cheat sheet:
  IN       real-time; SCP countdown; 1 trunk + 1 notification link per call
  SN       real-time; same countdown rule; 2 voice channels per call
  HOT      deferred;  HLR/AuC validity check only, charge from the CDR after
           the call, so one call of credit risk exists
  HANDSET  real-time; balance lives on the SIM and is decremented per increment
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .accounts import (
    AccountStatus,
    Money,
    PrepaidAccount,
    apply_charge,
    max_chargeable_duration,
    rate_voice_cost,
)
from .engine import ChannelHandle, ChannelPool, EventQueue, NoChannelAvailable, SimEvent


class SchemeKind(Enum):
    INTELLIGENT_NETWORK = "IN"
    SERVICE_NODE = "SN"
    HOT_BILLING = "HOT"
    HANDSET = "HANDSET"


class MessageKind(Enum):
    CALL_SETUP_TRIGGER = "CallSetupTrigger"
    SCP_AUTHORIZE = "ScpAuthorize"
    IP_LINK_SETUP = "IpLinkSetup"
    NOTIFICATION_INSTRUCTION = "NotificationInstruction"
    CONNECT_INSTRUCTION = "ConnectInstruction"
    COUNTDOWN_EXPIRED = "CountdownExpired"
    RELEASE_TRIGGER = "ReleaseTrigger"
    CHARGE_RESULT = "ChargeResult"
    PBP_QUERY = "PbpQuery"
    PBP_VERDICT = "PbpVerdict"
    SECOND_LEG_SETUP = "SecondLegSetup"
    HLR_VALIDATE = "HlrValidate"
    HLR_CUSTOMER_DATA = "HlrCustomerData"
    CDR_DISPATCH = "CdrDispatch"
    SUSPEND_NOTICE = "SuspendNotice"
    PRICING_PARAMETERS = "PricingParameters"
    PARAM_ACK = "ParamAck"
    SIM_DECREMENT_TICK = "SimDecrementTick"


@dataclass(frozen=True)
class ProtocolMessage:
    """One protocol step, immutable once emitted."""

    time: int
    kind: MessageKind
    source: str
    destination: str
    session_id: str | None = None
    detail: str = ""


class SessionState(Enum):
    SETUP = "Setup"
    CONNECTED = "Connected"
    RELEASED = "Released"
    REJECTED = "Rejected"


class TerminationReason(Enum):
    CALLER_HANGUP = "CallerHangup"
    BALANCE_EXHAUSTED = "BalanceExhausted"
    REJECTED = "Rejected"


class RejectReason(Enum):
    INSUFFICIENT_BALANCE = "InsufficientBalance"
    SUSPENDED = "Suspended"
    UNKNOWN_IMSI = "UnknownImsi"
    NO_CHANNEL = "NoChannelAvailable"
    CALLER_BUSY = "CallerBusy"


@dataclass
class CallSession:
    session_id: str
    scheme: SchemeKind
    caller_imsi: str
    callee_msisdn: str
    requested_duration: int
    start_time: int = 0
    connected_at: int | None = None
    billed_duration: int = 0
    channels_held: list[ChannelHandle] = field(default_factory=list)
    state: SessionState = SessionState.SETUP
    termination_reason: TerminationReason | None = None
    reject_reason: RejectReason | None = None
    countdown: int | None = None
    charged: Money = 0
    sim_charged: Money = 0  # handset only: total decremented on the SIM
    _timers: list[SimEvent] = field(default_factory=list)
    _ms: "MobileStationState | None" = None


@dataclass
class MobileStationState:
    """SIM-side balance copy used by the handset scheme."""

    imsi: str
    sim_balance: Money
    pricing: tuple[Money, int] | None = None  # (voice_rate, increment_seconds)
    tampered: bool = False


@dataclass
class Network:
    """The simulated elements a call flow runs against."""

    queue: EventQueue
    voice_pool: ChannelPool
    notify_pool: ChannelPool
    accounts_by_imsi: dict[str, PrepaidAccount]
    mobile_stations: dict[str, MobileStationState] = field(default_factory=dict)
    trace: list[ProtocolMessage] | None = None
    cdr_dispatch_delay: int = 0
    tampered_imsis: frozenset = frozenset()
    # hook invoked once per session at its terminal state (Released or Rejected)
    on_session_done: Callable[[CallSession], None] = lambda session: None
    _pending_dispatches: list[SimEvent] = field(default_factory=list)

    def emit(
        self,
        kind: MessageKind,
        source: str,
        destination: str,
        session: CallSession | None = None,
        detail: str = "",
    ) -> None:
        if self.trace is not None:
            self.trace.append(
                ProtocolMessage(
                    self.queue.clock,
                    kind,
                    source,
                    destination,
                    session.session_id if session else None,
                    detail,
                )
            )

    def release_channel(self, handle: ChannelHandle) -> None:
        pool = self.notify_pool if handle.kind == "notification" else self.voice_pool
        pool.release(handle)

    def provision_station(self, account: PrepaidAccount) -> MobileStationState:
        """Fresh SIM-side state for one handset call, seeded from the account.

        Rebuilding the copy at connect keeps the SIM and the network in step
        even when the same subscriber used a different scheme in between.
        """
        ms = MobileStationState(account.imsi, account.balance,
                                tampered=account.imsi in self.tampered_imsis)
        self.mobile_stations[account.imsi] = ms
        return ms


def _ms(session: CallSession) -> str:
    return f"MS:{session.caller_imsi}"


def reject_session(net: Network, session: CallSession, reason: RejectReason) -> None:
    session.state = SessionState.REJECTED
    session.termination_reason = TerminationReason.REJECTED
    session.reject_reason = reason
    net.on_session_done(session)


def _connect(net: Network, session: CallSession) -> None:
    session.state = SessionState.CONNECTED
    session.connected_at = net.queue.clock


def _cancel_timers(session: CallSession) -> None:
    for timer in session._timers:
        timer.cancel()
    session._timers.clear()


def _release_channels(net: Network, session: CallSession) -> None:
    for handle in session.channels_held:
        if not handle.released:
            net.release_channel(handle)


def _authorized(account: PrepaidAccount) -> RejectReason | None:
    """Shared real-time admission rule: active account that can afford one increment."""
    if account.status is not AccountStatus.ACTIVE:
        return RejectReason.SUSPENDED
    if rate_voice_cost(account.tariff, account.tariff.increment_seconds) > account.balance:
        return RejectReason.INSUFFICIENT_BALANCE
    return None


def _countdown_for(account: PrepaidAccount) -> int | None:
    """Countdown timer length; None means a free tariff with no finite bound."""
    if account.tariff.voice_rate == 0:
        return None
    return max_chargeable_duration(account.tariff, account.balance)


# --- Intelligent Network -----------------------------------------------------


def in_authorize_and_connect(net: Network, session: CallSession, account: PrepaidAccount) -> None:
    """IN call setup: MSC suspends the call, SCP authorizes, countdown starts.

    On success the session holds one trunk channel plus one notification link
    to the intelligent peripheral, and the call releases either at caller
    hangup or at countdown expiry, whichever comes first.
    """
    net.emit(MessageKind.CALL_SETUP_TRIGGER, _ms(session), "MSC", session,
             f"callee={session.callee_msisdn}")
    net.emit(MessageKind.SCP_AUTHORIZE, "MSC", "SCP", session)
    denial = _authorized(account)
    if denial is not None:
        reject_session(net, session, denial)
        return

    notify = net.notify_pool.allocate("notification")
    net.emit(MessageKind.IP_LINK_SETUP, "SCP", "MSC", session)
    net.emit(MessageKind.NOTIFICATION_INSTRUCTION, "SCP", "IP", session,
             f"balance={account.balance}")
    try:
        trunk = net.voice_pool.allocate("trunk")
    except NoChannelAvailable:
        net.notify_pool.release(notify)
        reject_session(net, session, RejectReason.NO_CHANNEL)
        return

    session.channels_held = [trunk, notify]
    session.countdown = _countdown_for(account)
    _connect(net, session)
    net.emit(MessageKind.CONNECT_INSTRUCTION, "SCP", "MSC", session,
             f"countdown={session.countdown}")

    now = net.queue.clock
    # Hangup is scheduled first so it wins the tie when the caller finishes
    # exactly as the countdown expires.
    session._timers.append(net.queue.schedule(
        now + session.requested_duration,
        lambda: _realtime_hangup(net, session, account, "SCP"),
    ))
    if session.countdown is not None:
        session._timers.append(net.queue.schedule(
            now + session.countdown,
            lambda: _realtime_countdown_expired(net, session, account, "SCP"),
        ))
        warn_at = now + session.countdown - account.tariff.increment_seconds
        if session.countdown > account.tariff.increment_seconds:
            session._timers.append(net.queue.schedule(
                warn_at,
                lambda: net.emit(MessageKind.NOTIFICATION_INSTRUCTION, "IP", _ms(session),
                                 session, "one increment remaining"),
            ))


def _realtime_hangup(net: Network, session: CallSession, account: PrepaidAccount,
                     charge_point: str) -> None:
    _cancel_timers(session)
    in_release_and_charge(net, session, account, TerminationReason.CALLER_HANGUP, charge_point)


def _realtime_countdown_expired(net: Network, session: CallSession, account: PrepaidAccount,
                                charge_point: str) -> None:
    _cancel_timers(session)
    net.emit(MessageKind.COUNTDOWN_EXPIRED, charge_point, "MSC", session)
    in_release_and_charge(net, session, account, TerminationReason.BALANCE_EXHAUSTED, charge_point)


def in_release_and_charge(
    net: Network,
    session: CallSession,
    account: PrepaidAccount,
    reason: TerminationReason,
    charge_point: str = "SCP",
) -> Money:
    """Release an IN or service-node call and charge for the elapsed duration.

    The charge point (SCP or PBP) computes the cost, debits the account with
    no overdraft allowed, and answers the MSC with cost and new balance.
    """
    assert session.state is SessionState.CONNECTED, "release without connect"
    elapsed = net.queue.clock - session.connected_at
    session.billed_duration = elapsed
    net.emit(MessageKind.RELEASE_TRIGGER, "MSC", charge_point, session, f"elapsed={elapsed}")
    cost = rate_voice_cost(account.tariff, elapsed)
    new_balance = apply_charge(account, cost, f"call:{session.session_id}",
                               net.queue.clock, allow_negative=False)
    session.charged = cost
    net.emit(MessageKind.CHARGE_RESULT, charge_point, "MSC", session,
             f"cost={cost} balance={new_balance}")
    _release_channels(net, session)
    session.state = SessionState.RELEASED
    session.termination_reason = reason
    net.on_session_done(session)
    return cost


# --- Service node ------------------------------------------------------------


def service_node_connect(net: Network, session: CallSession, account: PrepaidAccount) -> None:
    """Service-node setup: one voice leg in, PBP authorization, second leg out.

    A connected call holds exactly two voice channels. Rejections release
    whatever leg was already allocated, and charging at release is identical
    to the IN scheme (the PBP plays the SCP's role).
    """
    net.emit(MessageKind.CALL_SETUP_TRIGGER, _ms(session), "MSC", session,
             f"callee={session.callee_msisdn}")
    try:
        leg_in = net.voice_pool.allocate("voice")
    except NoChannelAvailable:
        reject_session(net, session, RejectReason.NO_CHANNEL)
        return

    net.emit(MessageKind.PBP_QUERY, "SN", "PBP", session)
    denial = _authorized(account)
    net.emit(MessageKind.PBP_VERDICT, "PBP", "SN", session,
             f"allowed={denial is None}")
    if denial is not None:
        net.voice_pool.release(leg_in)
        reject_session(net, session, denial)
        return

    try:
        leg_out = net.voice_pool.allocate("voice")
    except NoChannelAvailable:
        net.voice_pool.release(leg_in)
        reject_session(net, session, RejectReason.NO_CHANNEL)
        return

    net.emit(MessageKind.SECOND_LEG_SETUP, "SN", "MSC", session)
    session.channels_held = [leg_in, leg_out]
    session.countdown = _countdown_for(account)
    _connect(net, session)

    now = net.queue.clock
    session._timers.append(net.queue.schedule(
        now + session.requested_duration,
        lambda: _realtime_hangup(net, session, account, "PBP"),
    ))
    if session.countdown is not None:
        session._timers.append(net.queue.schedule(
            now + session.countdown,
            lambda: _realtime_countdown_expired(net, session, account, "PBP"),
        ))


# --- Hot billing -------------------------------------------------------------


def hot_billing_connect(net: Network, session: CallSession,
                        account: PrepaidAccount | None) -> None:
    """Hot-billing setup: HLR/AuC validity check only; no balance check at all.

    Billing is deferred to the CDR after release, which is exactly where the
    one-call credit risk comes from.
    """
    net.emit(MessageKind.CALL_SETUP_TRIGGER, _ms(session), "MSC", session,
             f"imsi={session.caller_imsi}")
    net.emit(MessageKind.HLR_VALIDATE, "MSC", "HLR", session)
    valid = account is not None
    net.emit(MessageKind.HLR_CUSTOMER_DATA, "HLR", "MSC", session, f"valid={valid}")
    if account is None:
        reject_session(net, session, RejectReason.UNKNOWN_IMSI)
        return
    if account.status is not AccountStatus.ACTIVE:
        reject_session(net, session, RejectReason.SUSPENDED)
        return
    try:
        channel = net.voice_pool.allocate("voice")
    except NoChannelAvailable:
        reject_session(net, session, RejectReason.NO_CHANNEL)
        return

    session.channels_held = [channel]
    _connect(net, session)
    session._timers.append(net.queue.schedule(
        net.queue.clock + session.requested_duration,
        lambda: hot_billing_release(net, session, account),
    ))


def hot_billing_release(net: Network, session: CallSession, account: PrepaidAccount) -> None:
    """End of a hot-billing call: free the channel, dispatch the CDR to the PSC."""
    _cancel_timers(session)
    elapsed = net.queue.clock - session.connected_at
    session.billed_duration = elapsed
    _release_channels(net, session)
    session.state = SessionState.RELEASED
    session.termination_reason = TerminationReason.CALLER_HANGUP
    net.emit(MessageKind.CDR_DISPATCH, "MSC", "PSC", session, f"duration={elapsed}")
    if net.cdr_dispatch_delay == 0:
        hot_billing_post_charge(net, session, account)
    else:
        event = net.queue.schedule(
            net.queue.clock + net.cdr_dispatch_delay,
            lambda: hot_billing_post_charge(net, session, account),
        )
        net._pending_dispatches.append(event)


def hot_billing_post_charge(net: Network, session: CallSession, account: PrepaidAccount) -> Money:
    """PSC rates the dispatched CDR and charges the account, negative if need be."""
    cost = rate_voice_cost(account.tariff, session.billed_duration)
    new_balance = apply_charge(account, cost, f"call:{session.session_id}",
                               net.queue.clock, allow_negative=True)
    session.charged = cost
    if new_balance <= 0:
        net.emit(MessageKind.SUSPEND_NOTICE, "PSC", "HLR", session,
                 f"balance={new_balance}")
    net.on_session_done(session)
    return cost


def flush_pending_dispatches(net: Network) -> int:
    """Run CDR dispatches still queued past the horizon (end-of-run mediation flush)."""
    flushed = 0
    for event in net._pending_dispatches:
        if not event.fired and not event.cancelled:
            event.cancel()
            event.action()
            flushed += 1
    net._pending_dispatches.clear()
    return flushed


# --- Handset based -----------------------------------------------------------


def handset_connect(net: Network, session: CallSession, account: PrepaidAccount,
                    ms: MobileStationState) -> None:
    """Handset setup: MSC pushes pricing parameters, the SIM balance gates the call.

    The mobile station is the charging point: it acknowledges the parameters
    and decrements its local balance at the start of every increment.
    """
    net.emit(MessageKind.CALL_SETUP_TRIGGER, _ms(session), "MSC", session,
             f"callee={session.callee_msisdn}")
    if account.status is not AccountStatus.ACTIVE:
        reject_session(net, session, RejectReason.SUSPENDED)
        return
    tariff = account.tariff
    net.emit(MessageKind.PRICING_PARAMETERS, "MSC", _ms(session), session,
             f"rate={tariff.voice_rate} increment={tariff.increment_seconds}")
    ms.pricing = (tariff.voice_rate, tariff.increment_seconds)
    if ms.sim_balance < rate_voice_cost(tariff, tariff.increment_seconds):
        reject_session(net, session, RejectReason.INSUFFICIENT_BALANCE)
        return
    net.emit(MessageKind.PARAM_ACK, _ms(session), "MSC", session)
    try:
        channel = net.voice_pool.allocate("voice")
    except NoChannelAvailable:
        reject_session(net, session, RejectReason.NO_CHANNEL)
        return

    session.channels_held = [channel]
    session._ms = ms
    _connect(net, session)
    now = net.queue.clock
    # Hangup first: a call ending exactly on a boundary never starts that increment.
    session._timers.append(net.queue.schedule(
        now + session.requested_duration,
        lambda: _handset_release(net, session, account, ms, TerminationReason.CALLER_HANGUP),
    ))
    session._timers.append(net.queue.schedule(
        now, lambda: handset_tick_decrement(net, session, account, ms),
    ))


def handset_tick_decrement(net: Network, session: CallSession, account: PrepaidAccount,
                           ms: MobileStationState) -> None:
    """One increment boundary: decrement the SIM or cut the call when it cannot pay.

    A tampered station skips the decrement entirely and never self-terminates;
    the call then runs to the caller's hangup at zero recorded charge.
    """
    if session.state is not SessionState.CONNECTED:
        return
    rate, increment = ms.pricing
    if not ms.tampered:
        if ms.sim_balance < rate:
            net.emit(MessageKind.SIM_DECREMENT_TICK, _ms(session), _ms(session), session,
                     f"balance={ms.sim_balance} exhausted")
            _handset_release(net, session, account, ms, TerminationReason.BALANCE_EXHAUSTED)
            return
        ms.sim_balance -= rate
        session.sim_charged += rate
    net.emit(MessageKind.SIM_DECREMENT_TICK, _ms(session), _ms(session), session,
             f"balance={ms.sim_balance}")
    session._timers.append(net.queue.schedule(
        net.queue.clock + increment,
        lambda: handset_tick_decrement(net, session, account, ms),
    ))


def _handset_release(net: Network, session: CallSession, account: PrepaidAccount,
                     ms: MobileStationState, reason: TerminationReason) -> None:
    """Release a handset call and post the SIM's decrement total to the ledger."""
    _cancel_timers(session)
    elapsed = net.queue.clock - session.connected_at
    session.billed_duration = elapsed
    _release_channels(net, session)
    # Server-side bookkeeping mirrors what the SIM actually took, so a tampered
    # station shows up as billed minutes with no matching ledger charge.
    apply_charge(account, session.sim_charged, f"call:{session.session_id}",
                 net.queue.clock, allow_negative=False)
    session.charged = session.sim_charged
    session.state = SessionState.RELEASED
    session.termination_reason = reason
    net.on_session_done(session)


# --- Dispatch ----------------------------------------------------------------


def force_release(net: Network, session: CallSession) -> None:
    """Release a still-connected session at the current clock (horizon cutoff)."""
    if session.state is not SessionState.CONNECTED:
        return
    account = net.accounts_by_imsi[session.caller_imsi]
    _cancel_timers(session)
    if session.scheme is SchemeKind.INTELLIGENT_NETWORK:
        in_release_and_charge(net, session, account, TerminationReason.CALLER_HANGUP, "SCP")
    elif session.scheme is SchemeKind.SERVICE_NODE:
        in_release_and_charge(net, session, account, TerminationReason.CALLER_HANGUP, "PBP")
    elif session.scheme is SchemeKind.HOT_BILLING:
        hot_billing_release(net, session, account)
    elif session.scheme is SchemeKind.HANDSET:
        _handset_release(net, session, account, session._ms, TerminationReason.CALLER_HANGUP)


def start_call(net: Network, session: CallSession) -> None:
    """Route a Setup-state session into its scheme's connect flow."""
    account = net.accounts_by_imsi.get(session.caller_imsi)
    if session.scheme is SchemeKind.HOT_BILLING:
        hot_billing_connect(net, session, account)
        return
    if account is None:
        reject_session(net, session, RejectReason.UNKNOWN_IMSI)
        return
    if session.scheme is SchemeKind.INTELLIGENT_NETWORK:
        in_authorize_and_connect(net, session, account)
    elif session.scheme is SchemeKind.SERVICE_NODE:
        service_node_connect(net, session, account)
    elif session.scheme is SchemeKind.HANDSET:
        handset_connect(net, session, account, net.provision_station(account))
    else:
        raise ValueError(f"unknown scheme {session.scheme!r}")
