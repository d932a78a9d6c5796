"""Rating arithmetic against a brute-force per-second oracle, plus ledger rules.

The oracle charges the voice rate at the first second of every increment and
never divides, so it cannot share a rounding bug with the implementation.
"""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prepaidsim.accounts import (
    AccountStatus,
    EntryKind,
    InsufficientBalance,
    PrepaidAccount,
    SubscriberRecord,
    TariffPlan,
    apply_charge,
    apply_credit,
    apply_transfer_out,
    max_chargeable_duration,
    rate_voice_cost,
    replay_balance,
)


def per_second_cost(rate: int, increment: int, duration: int) -> int:
    """Independent oracle: accumulate the rate at each increment's first second."""
    cost = 0
    for second in range(duration):
        if second % increment == 0:
            cost += rate
    return cost


def scan_max_duration(rate: int, increment: int, balance: int) -> int:
    """Independent oracle: walk second by second until the next one is unaffordable."""
    cost = 0
    duration = 0
    while True:
        added = rate if duration % increment == 0 else 0
        if cost + added > balance:
            return duration
        cost += added
        duration += 1


STD = TariffPlan("std", voice_rate=30, increment_seconds=60, data_rate=2)


def make_account(balance: int, tariff: TariffPlan = STD, status=AccountStatus.ACTIVE):
    account = PrepaidAccount(SubscriberRecord("100", "900100", "ID1", True), balance, tariff)
    account.status = status
    return account


class TestRateVoiceCost:
    def test_zero_duration_costs_zero(self):
        assert rate_voice_cost(STD, 0) == 0

    def test_partial_increment_rounds_up(self):
        assert per_second_cost(30, 60, 61) == 60
        assert rate_voice_cost(STD, 61) == 60

    def test_exact_increments(self):
        assert per_second_cost(30, 60, 180) == 90
        assert rate_voice_cost(STD, 180) == 90

    def test_matches_oracle_on_sampled_grid(self):
        for rate in (1, 7, 30, 199):
            for increment in (1, 30, 60):
                tariff = TariffPlan("t", rate, increment)
                for duration in range(0, 4 * increment + 2):
                    assert rate_voice_cost(tariff, duration) == \
                        per_second_cost(rate, increment, duration)

    def test_negative_duration_rejected(self):
        with pytest.raises(ValueError):
            rate_voice_cost(STD, -1)

    @given(a=st.integers(0, 5000), b=st.integers(0, 5000))
    def test_monotone_and_subadditive(self, a, b):
        cost = rate_voice_cost
        assert cost(STD, a + b) >= cost(STD, max(a, b))
        assert cost(STD, a + b) <= cost(STD, a) + cost(STD, b) + STD.voice_rate


class TestMaxChargeableDuration:
    def test_empty_account(self):
        assert max_chargeable_duration(STD, 0) == 0

    def test_balance_with_remainder(self):
        assert scan_max_duration(30, 60, 100) == 180
        assert max_chargeable_duration(STD, 100) == 180

    def test_exact_multiple_boundary(self):
        assert scan_max_duration(30, 60, 90) == 180
        assert max_chargeable_duration(STD, 90) == 180

    def test_zero_rate_is_unbounded(self):
        with pytest.raises(ValueError):
            max_chargeable_duration(TariffPlan("free", 0, 60), 100)

    @given(rate=st.integers(1, 200), balance=st.integers(0, 400),
           increment=st.sampled_from([1, 30, 60]))
    @settings(max_examples=150, deadline=None)
    def test_agrees_with_scan_oracle(self, rate, balance, increment):
        tariff = TariffPlan("t", rate, increment)
        got = max_chargeable_duration(tariff, balance)
        assert got == scan_max_duration(rate, increment, balance)
        assert got % increment == 0
        assert rate_voice_cost(tariff, got) <= balance
        assert rate_voice_cost(tariff, got + 1) > balance


class TestApplyCharge:
    def test_ordinary_debit(self):
        account = make_account(100)
        assert apply_charge(account, 60, "c1") == 40
        assert account.status is AccountStatus.ACTIVE

    def test_negative_allowed_suspends(self):
        # deferred charging may overdraw by one call's cost
        account = make_account(50)
        assert apply_charge(account, 90, "c1", allow_negative=True) == -40
        assert account.status is AccountStatus.SUSPENDED

    def test_guarded_debit_raises(self):
        account = make_account(50)
        with pytest.raises(InsufficientBalance):
            apply_charge(account, 90, "c1")
        assert account.balance == 50
        assert account.ledger == []

    def test_exact_drain_suspends(self):
        account = make_account(30)
        assert apply_charge(account, 30, "c1") == 0
        assert account.status is AccountStatus.SUSPENDED


class TestApplyCredit:
    def test_reactivates_negative_account(self):
        account = make_account(50)
        apply_charge(account, 90, "c1", allow_negative=True)
        assert apply_credit(account, 100, "t1") == 60
        assert account.status is AccountStatus.ACTIVE

    def test_reactivates_zero_account(self):
        account = make_account(30)
        apply_charge(account, 30, "c1")
        assert apply_credit(account, 25, "t1") == 25
        assert account.status is AccountStatus.ACTIVE

    def test_plain_credit(self):
        account = make_account(10)
        assert apply_credit(account, 5, "t1") == 15
        assert account.status is AccountStatus.ACTIVE

    def test_nonpositive_credit_rejected(self):
        account = make_account(10)
        with pytest.raises(ValueError):
            apply_credit(account, 0, "t1")


@given(ops=st.lists(st.tuples(st.sampled_from(["charge", "credit", "hot", "out"]),
                              st.integers(1, 120)), max_size=40))
@settings(max_examples=200, deadline=None)
def test_ledger_replay_is_exact(ops):
    """After any operation sequence, initial + signed ledger sum == balance."""
    account = make_account(200)
    for op, amount in ops:
        try:
            if op == "charge":
                apply_charge(account, amount, "x")
            elif op == "hot":
                apply_charge(account, amount, "x", allow_negative=True)
            elif op == "out":
                apply_transfer_out(account, amount, "x")
            else:
                apply_credit(account, amount, "x")
        except InsufficientBalance:
            pass
        assert replay_balance(account) == account.balance
    seqs = [e.seq for e in account.ledger]
    assert seqs == sorted(set(seqs))


@given(ops=st.lists(st.tuples(st.sampled_from(["charge", "credit", "out"]),
                              st.integers(1, 120)), max_size=40))
@settings(max_examples=200, deadline=None)
def test_never_negative_without_allow_negative(ops):
    account = make_account(100)
    for op, amount in ops:
        try:
            if op == "charge":
                apply_charge(account, amount, "x")
            elif op == "out":
                apply_transfer_out(account, amount, "x")
            else:
                apply_credit(account, amount, "x")
        except InsufficientBalance:
            pass
        assert account.balance >= 0


def test_tariff_validation():
    with pytest.raises(ValueError):
        TariffPlan("bad", -1, 60)
    with pytest.raises(ValueError):
        TariffPlan("bad", 10, 0)
    with pytest.raises(ValueError):
        TariffPlan("bad", 10, 60, -1)


def test_ledger_entries_are_signed_by_kind():
    account = make_account(100)
    apply_charge(account, 10, "c")
    apply_credit(account, 20, "t")
    apply_transfer_out(account, 5, "o")
    apply_credit(account, 5, "i", kind=EntryKind.TRANSFER_IN)
    kinds = [(e.kind, e.amount > 0) for e in account.ledger]
    assert kinds == [(EntryKind.CHARGE, False), (EntryKind.TOPUP, True),
                     (EntryKind.TRANSFER_OUT, False), (EntryKind.TRANSFER_IN, True)]
