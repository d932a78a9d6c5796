"""Prepaid accounts, tariffs, and the rating arithmetic shared by every charging scheme.

All money is handled as plain integers counting minor units (cents), so every
balance check and conservation property can be asserted with exact equality.
Voice rating rounds the call duration up to whole billing increments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

# Minor units (e.g. cents). Kept as a plain int so arithmetic stays exact.
Money = int


class AccountStatus(Enum):
    ACTIVE = "Active"
    SUSPENDED = "Suspended"


class EntryKind(Enum):
    CHARGE = "Charge"
    TOPUP = "TopUp"
    TRANSFER_IN = "TransferIn"
    TRANSFER_OUT = "TransferOut"


class InsufficientBalance(Exception):
    """Charge would overdraw an account that is not allowed to go negative."""


@dataclass(frozen=True)
class TariffPlan:
    """Flat prepaid tariff: one voice rate per billing increment, one data rate per KB."""

    plan_id: str
    voice_rate: Money
    increment_seconds: int = 60
    data_rate: Money = 0

    def __post_init__(self) -> None:
        if self.voice_rate < 0:
            raise ValueError("voice_rate must be >= 0")
        if self.data_rate < 0:
            raise ValueError("data_rate must be >= 0")
        if self.increment_seconds < 1:
            raise ValueError("increment_seconds must be >= 1")


@dataclass
class SubscriberRecord:
    msisdn: str
    imsi: str
    id_number: str | None = None
    id_verified: bool = False


@dataclass(frozen=True)
class LedgerEntry:
    """One signed balance movement. Charges and transfers out are negative."""

    seq: int
    sim_time: int
    kind: EntryKind
    amount: Money
    reference: str


@dataclass
class PrepaidAccount:
    subscriber: SubscriberRecord
    balance: Money
    tariff: TariffPlan
    status: AccountStatus = AccountStatus.ACTIVE
    ledger: list[LedgerEntry] = field(default_factory=list)
    initial_balance: Money = 0

    def __post_init__(self) -> None:
        self.initial_balance = self.balance

    @property
    def msisdn(self) -> str:
        return self.subscriber.msisdn

    @property
    def imsi(self) -> str:
        return self.subscriber.imsi

    def _append(self, sim_time: int, kind: EntryKind, amount: Money, reference: str) -> None:
        self.ledger.append(LedgerEntry(len(self.ledger), sim_time, kind, amount, reference))


def rate_voice_cost(tariff: TariffPlan, duration_seconds: int) -> Money:
    """Cost of a voice call: duration rounded up to whole increments, zero costs zero."""
    if duration_seconds < 0:
        raise ValueError("duration_seconds must be >= 0")
    increments = -(-duration_seconds // tariff.increment_seconds)
    return increments * tariff.voice_rate


def max_chargeable_duration(tariff: TariffPlan, balance: Money) -> int:
    """Longest duration whose cost still fits in `balance`.

    Always a whole number of increments; this is the countdown the real-time
    schemes start at call connect. Undefined for a free (zero-rate) tariff,
    where no finite bound exists.
    """
    if balance < 0:
        raise ValueError("balance must be >= 0")
    if tariff.voice_rate == 0:
        raise ValueError("duration is unbounded for a zero voice rate")
    return (balance // tariff.voice_rate) * tariff.increment_seconds


def apply_charge(
    account: PrepaidAccount,
    amount: Money,
    reference: str,
    sim_time: int = 0,
    allow_negative: bool = False,
) -> Money:
    """Debit `amount`, append a ledger entry, and suspend the account if it empties.

    Only deferred (hot-billing style) charging passes allow_negative=True; the
    real-time schemes must never attempt a charge beyond the balance, so that
    case raises InsufficientBalance instead of silently overdrawing.

    Returns the new balance.
    """
    if amount < 0:
        raise ValueError("charge amount must be >= 0")
    if not allow_negative and amount > account.balance:
        raise InsufficientBalance(
            f"charge {amount} exceeds balance {account.balance} on {account.msisdn}"
        )
    account.balance -= amount
    account._append(sim_time, EntryKind.CHARGE, -amount, reference)
    if account.balance <= 0:
        account.status = AccountStatus.SUSPENDED
    return account.balance


def apply_credit(
    account: PrepaidAccount,
    amount: Money,
    reference: str,
    sim_time: int = 0,
    kind: EntryKind = EntryKind.TOPUP,
) -> Money:
    """Credit `amount` and reactivate the account once its balance is positive."""
    if amount <= 0:
        raise ValueError("credit amount must be > 0")
    account.balance += amount
    account._append(sim_time, kind, amount, reference)
    if account.balance > 0:
        account.status = AccountStatus.ACTIVE
    return account.balance


def apply_transfer_out(account: PrepaidAccount, amount: Money, reference: str, sim_time: int = 0) -> Money:
    """Debit leg of a credit transfer; never allowed to overdraw."""
    if amount <= 0:
        raise ValueError("transfer amount must be > 0")
    if amount > account.balance:
        raise InsufficientBalance(
            f"transfer {amount} exceeds balance {account.balance} on {account.msisdn}"
        )
    account.balance -= amount
    account._append(sim_time, EntryKind.TRANSFER_OUT, -amount, reference)
    if account.balance <= 0:
        account.status = AccountStatus.SUSPENDED
    return account.balance


def replay_balance(account: PrepaidAccount) -> Money:
    """Recompute the balance from the initial balance plus all ledger entries."""
    return account.initial_balance + sum(e.amount for e in account.ledger)
