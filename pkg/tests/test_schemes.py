"""The four charging flows, driven directly over a minimal network harness."""

import pytest

from prepaidsim.accounts import (
    AccountStatus,
    PrepaidAccount,
    SubscriberRecord,
    TariffPlan,
    rate_voice_cost,
)
from prepaidsim.engine import ChannelPool, EventQueue
from prepaidsim.schemes import (
    CallSession,
    MessageKind,
    Network,
    RejectReason,
    SchemeKind,
    SessionState,
    TerminationReason,
    start_call,
)

STD = TariffPlan("std", voice_rate=30, increment_seconds=60, data_rate=2)


def make_account(msisdn="100", imsi="900100", balance=100, tariff=STD):
    return PrepaidAccount(SubscriberRecord(msisdn, imsi, "ID1", True), balance, tariff)


def build_net(accounts, capacity=None, tampered=frozenset(), dispatch_delay=0):
    done = []
    net = Network(
        queue=EventQueue(),
        voice_pool=ChannelPool(capacity, "voice"),
        notify_pool=ChannelPool(None, "notification"),
        accounts_by_imsi={a.imsi: a for a in accounts},
        trace=[],
        cdr_dispatch_delay=dispatch_delay,
        tampered_imsis=tampered,
        on_session_done=done.append,
    )
    return net, done


def place_call(net, imsi, duration, scheme, start=0, callee="555"):
    session = CallSession(f"s{len(net.mobile_stations):03d}-{start}", scheme, imsi,
                          callee, duration, start_time=start)
    net.queue.schedule(start, lambda: start_call(net, session))
    return session


def run(net, until=100000):
    net.queue.run_until(until)


class TestIntelligentNetwork:
    def test_connect_sets_countdown_from_balance(self):
        account = make_account(balance=100)
        net, _ = build_net([account])
        session = place_call(net, account.imsi, 600, SchemeKind.INTELLIGENT_NETWORK)
        net.queue.run_until(0)
        assert session.state is SessionState.CONNECTED
        assert session.countdown == 180

    def test_empty_balance_rejected(self):
        account = make_account(balance=0)
        net, _ = build_net([account])
        session = place_call(net, account.imsi, 600, SchemeKind.INTELLIGENT_NETWORK)
        run(net)
        assert session.state is SessionState.REJECTED
        assert session.reject_reason is RejectReason.INSUFFICIENT_BALANCE
        assert session.channels_held == []

    def test_countdown_cuts_long_call(self):
        account = make_account(balance=100)
        net, _ = build_net([account])
        session = place_call(net, account.imsi, 600, SchemeKind.INTELLIGENT_NETWORK)
        run(net)
        assert session.billed_duration == 180
        assert session.termination_reason is TerminationReason.BALANCE_EXHAUSTED
        assert account.balance == 10

    def test_short_call_ends_by_hangup(self):
        account = make_account(balance=100)
        net, _ = build_net([account])
        session = place_call(net, account.imsi, 60, SchemeKind.INTELLIGENT_NETWORK)
        run(net)
        assert session.billed_duration == 60
        assert session.termination_reason is TerminationReason.CALLER_HANGUP
        assert account.balance == 70

    def test_zero_duration_costs_nothing(self):
        account = make_account(balance=100)
        net, _ = build_net([account])
        session = place_call(net, account.imsi, 0, SchemeKind.INTELLIGENT_NETWORK)
        run(net)
        assert session.billed_duration == 0
        assert session.charged == 0
        assert account.balance == 100

    def test_hangup_exactly_at_countdown_counts_as_hangup(self):
        account = make_account(balance=90)
        net, _ = build_net([account])
        session = place_call(net, account.imsi, 180, SchemeKind.INTELLIGENT_NETWORK)
        run(net)
        assert session.billed_duration == 180
        assert session.termination_reason is TerminationReason.CALLER_HANGUP

    def test_holds_one_trunk_and_one_notification(self):
        account = make_account(balance=100)
        net, _ = build_net([account])
        session = place_call(net, account.imsi, 600, SchemeKind.INTELLIGENT_NETWORK)
        net.queue.run_until(0)
        kinds = sorted(h.kind for h in session.channels_held)
        assert kinds == ["notification", "trunk"]
        assert net.voice_pool.in_use == 1
        assert net.notify_pool.in_use == 1
        run(net)
        assert net.voice_pool.in_use == 0
        assert net.notify_pool.in_use == 0
        assert all(h.released for h in session.channels_held)

    def test_trace_follows_the_eight_step_flow(self):
        account = make_account(balance=100)
        net, _ = build_net([account])
        place_call(net, account.imsi, 60, SchemeKind.INTELLIGENT_NETWORK)
        run(net)
        kinds = [m.kind for m in net.trace]
        expected_prefix = [
            MessageKind.CALL_SETUP_TRIGGER,
            MessageKind.SCP_AUTHORIZE,
            MessageKind.IP_LINK_SETUP,
            MessageKind.NOTIFICATION_INSTRUCTION,
            MessageKind.CONNECT_INSTRUCTION,
        ]
        assert kinds[:5] == expected_prefix
        assert MessageKind.RELEASE_TRIGGER in kinds
        assert kinds[-1] is MessageKind.CHARGE_RESULT

    def test_suspended_account_rejected(self):
        account = make_account(balance=100)
        account.status = AccountStatus.SUSPENDED
        net, _ = build_net([account])
        session = place_call(net, account.imsi, 60, SchemeKind.INTELLIGENT_NETWORK)
        run(net)
        assert session.reject_reason is RejectReason.SUSPENDED


class TestServiceNode:
    def test_connected_call_holds_two_voice_channels(self):
        account = make_account(balance=100)
        net, _ = build_net([account])
        session = place_call(net, account.imsi, 600, SchemeKind.SERVICE_NODE)
        net.queue.run_until(0)
        assert session.state is SessionState.CONNECTED
        assert len(session.channels_held) == 2
        assert net.voice_pool.in_use == 2

    def test_rejection_holds_no_channels(self):
        account = make_account(balance=0)
        net, _ = build_net([account])
        session = place_call(net, account.imsi, 600, SchemeKind.SERVICE_NODE)
        run(net)
        assert session.state is SessionState.REJECTED
        assert session.reject_reason is RejectReason.INSUFFICIENT_BALANCE
        assert net.voice_pool.in_use == 0

    def test_pool_of_one_releases_first_leg(self):
        account = make_account(balance=100)
        net, _ = build_net([account], capacity=1)
        session = place_call(net, account.imsi, 600, SchemeKind.SERVICE_NODE)
        run(net)
        assert session.reject_reason is RejectReason.NO_CHANNEL
        assert net.voice_pool.in_use == 0
        assert net.voice_pool.peak_in_use == 1

    def test_charging_is_identical_to_in(self):
        results = []
        for scheme in (SchemeKind.INTELLIGENT_NETWORK, SchemeKind.SERVICE_NODE):
            account = make_account(balance=100)
            net, _ = build_net([account])
            session = place_call(net, account.imsi, 600, scheme)
            run(net)
            results.append((session.billed_duration, session.charged, account.balance))
        assert results[0] == results[1] == (180, 90, 10)


class TestHotBilling:
    def test_connects_despite_insufficient_balance(self):
        account = make_account(balance=5)
        net, _ = build_net([account])
        session = place_call(net, account.imsi, 300, SchemeKind.HOT_BILLING)
        net.queue.run_until(0)
        assert session.state is SessionState.CONNECTED
        run(net)
        assert session.billed_duration == 300
        assert account.balance == -145
        assert account.status is AccountStatus.SUSPENDED

    def test_unknown_imsi_rejected(self):
        account = make_account()
        net, _ = build_net([account])
        session = place_call(net, "999999", 60, SchemeKind.HOT_BILLING)
        run(net)
        assert session.reject_reason is RejectReason.UNKNOWN_IMSI

    def test_suspended_account_rejected(self):
        account = make_account()
        account.status = AccountStatus.SUSPENDED
        net, _ = build_net([account])
        session = place_call(net, account.imsi, 60, SchemeKind.HOT_BILLING)
        run(net)
        assert session.reject_reason is RejectReason.SUSPENDED

    def test_plain_charge_keeps_account_active(self):
        account = make_account(balance=100)
        net, _ = build_net([account])
        place_call(net, account.imsi, 60, SchemeKind.HOT_BILLING)
        run(net)
        assert account.balance == 70
        assert account.status is AccountStatus.ACTIVE

    def test_exact_drain_suspends_and_notifies_hlr(self):
        account = make_account(balance=30)
        net, _ = build_net([account])
        place_call(net, account.imsi, 60, SchemeKind.HOT_BILLING)
        run(net)
        assert account.balance == 0
        assert account.status is AccountStatus.SUSPENDED
        assert any(m.kind is MessageKind.SUSPEND_NOTICE for m in net.trace)

    def test_dispatch_delay_defers_the_charge(self):
        account = make_account(balance=100)
        net, _ = build_net([account], dispatch_delay=10)
        session = place_call(net, account.imsi, 60, SchemeKind.HOT_BILLING)
        net.queue.run_until(60)
        assert session.state is SessionState.RELEASED
        assert account.balance == 100  # CDR still in flight
        net.queue.run_until(70)
        assert account.balance == 70


class TestHandset:
    def test_ticks_every_increment(self):
        account = make_account(balance=100)
        net, _ = build_net([account])
        session = place_call(net, account.imsi, 150, SchemeKind.HANDSET)
        run(net)
        ticks = [m for m in net.trace if m.kind is MessageKind.SIM_DECREMENT_TICK]
        assert [m.time for m in ticks] == [0, 60, 120]
        assert session.billed_duration == 150
        assert session.charged == 90

    def test_insufficient_sim_balance_rejected(self):
        account = make_account(balance=10)
        net, _ = build_net([account])
        session = place_call(net, account.imsi, 600, SchemeKind.HANDSET)
        run(net)
        assert session.reject_reason is RejectReason.INSUFFICIENT_BALANCE

    def test_single_affordable_increment_cuts_at_boundary(self):
        account = make_account(balance=30)
        net, _ = build_net([account])
        session = place_call(net, account.imsi, 600, SchemeKind.HANDSET)
        run(net)
        assert session.billed_duration == 60
        assert session.termination_reason is TerminationReason.BALANCE_EXHAUSTED
        assert account.balance == 0

    def test_exhaustion_after_three_ticks(self):
        account = make_account(balance=90)
        net, _ = build_net([account])
        session = place_call(net, account.imsi, 600, SchemeKind.HANDSET)
        run(net)
        ms = net.mobile_stations[account.imsi]
        assert ms.sim_balance == 0
        assert session.billed_duration == 180
        assert session.termination_reason is TerminationReason.BALANCE_EXHAUSTED

    def test_mid_increment_hangup_consumes_one_tick(self):
        account = make_account(balance=90)
        net, _ = build_net([account])
        session = place_call(net, account.imsi, 45, SchemeKind.HANDSET)
        run(net)
        ms = net.mobile_stations[account.imsi]
        assert ms.sim_balance == 60
        assert session.charged == 30 == rate_voice_cost(STD, 45)

    def test_sim_and_server_agree_when_untampered(self):
        account = make_account(balance=500)
        net, _ = build_net([account])
        session = place_call(net, account.imsi, 412, SchemeKind.HANDSET)
        run(net)
        ms = net.mobile_stations[account.imsi]
        assert session.charged == rate_voice_cost(STD, session.billed_duration)
        assert ms.sim_balance == account.balance

    def test_tampered_station_never_pays_or_terminates(self):
        account = make_account(balance=30)
        net, _ = build_net([account], tampered=frozenset([account.imsi]))
        session = place_call(net, account.imsi, 600, SchemeKind.HANDSET)
        run(net)
        ms = net.mobile_stations[account.imsi]
        assert ms.sim_balance == 30
        assert account.balance == 30
        assert session.billed_duration == 600  # ran to hangup, not cut at 60
        assert session.charged == 0

    def test_pricing_parameters_precede_the_ack(self):
        account = make_account(balance=100)
        net, _ = build_net([account])
        place_call(net, account.imsi, 60, SchemeKind.HANDSET)
        run(net)
        kinds = [m.kind for m in net.trace]
        assert kinds.index(MessageKind.PRICING_PARAMETERS) < kinds.index(MessageKind.PARAM_ACK)

    def test_suspended_account_rejected(self):
        account = make_account(balance=100)
        account.status = AccountStatus.SUSPENDED
        net, _ = build_net([account])
        session = place_call(net, account.imsi, 60, SchemeKind.HANDSET)
        run(net)
        assert session.reject_reason is RejectReason.SUSPENDED


@pytest.mark.parametrize("balance,requested", [(100, 600), (90, 180), (300, 45), (60, 0)])
def test_realtime_schemes_are_revenue_equivalent(balance, requested):
    """Same inputs give the same billed duration and charge under IN, SN, handset."""
    outcomes = []
    for scheme in (SchemeKind.INTELLIGENT_NETWORK, SchemeKind.SERVICE_NODE,
                   SchemeKind.HANDSET):
        account = make_account(balance=balance)
        net, _ = build_net([account])
        session = place_call(net, account.imsi, requested, scheme)
        run(net)
        outcomes.append((session.billed_duration, session.charged, account.balance))
    assert outcomes[0] == outcomes[1] == outcomes[2]


def test_channel_counts_per_scheme():
    expectations = {
        SchemeKind.INTELLIGENT_NETWORK: 2,  # 1 trunk + 1 notification
        SchemeKind.SERVICE_NODE: 2,
        SchemeKind.HOT_BILLING: 1,
        SchemeKind.HANDSET: 1,
    }
    for scheme, expected in expectations.items():
        account = make_account(balance=100)
        net, _ = build_net([account])
        session = place_call(net, account.imsi, 60, scheme)
        net.queue.run_until(0)
        assert len(session.channels_held) == expected, scheme
        run(net)
        assert net.voice_pool.in_use == 0
        assert net.notify_pool.in_use == 0
