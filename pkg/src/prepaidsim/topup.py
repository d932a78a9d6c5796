"""Top-up channels, the subscriber registry, and the ID-verification gate.

Credit can enter an account through single-use vouchers, cash machines, or a
card on file, and can move between accounts as a transfer. When the
countermeasure policy requires it, every one of those operations must present
the exact ID registered for the (debited, for transfers) subscriber, otherwise
it is rejected with no state change at all. Executed credits are logged so the
fraud audit can count how many arrived anonymously.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from .accounts import (
    EntryKind,
    Money,
    PrepaidAccount,
    apply_credit,
    apply_transfer_out,
)

VOUCHER_CODE_RE = re.compile(r"^\d{4}-\d{4}-\d{4}-\d{4}$")


class TopUpChannel(Enum):
    VOUCHER = "voucher"
    CASH_MACHINE = "cash"
    CARD_ON_FILE = "card"


class VoucherState(Enum):
    ISSUED = "Issued"
    REDEEMED = "Redeemed"
    VOID = "Void"


class TopUpRejected(Exception):
    """Base class for every rejected top-up or transfer; no state was changed."""


class UnknownVoucher(TopUpRejected):
    pass


class AlreadyRedeemed(TopUpRejected):
    pass


class IdMissing(TopUpRejected):
    pass


class IdMismatch(TopUpRejected):
    pass


class UnknownSubscriber(TopUpRejected):
    pass


class NonPositiveAmount(TopUpRejected):
    pass


class SelfTransfer(TopUpRejected):
    pass


class CallInProgress(TopUpRejected):
    """Mid-call top-up against an IN or service-node session; the countdown
    cannot be extended, so the request is rejected rather than applied."""


@dataclass
class Voucher:
    code: str
    face_value: Money
    state: VoucherState = VoucherState.ISSUED

    def __post_init__(self) -> None:
        if not VOUCHER_CODE_RE.match(self.code):
            raise ValueError(f"voucher code {self.code!r} is not VVVV-VVVV-VVVV-VVVV")
        if self.face_value <= 0:
            raise ValueError("voucher face value must be > 0")


@dataclass(frozen=True)
class TopUpRequest:
    channel: TopUpChannel
    target_msisdn: str
    voucher_code: str | None = None
    amount: Money | None = None
    presented_id: str | None = None


@dataclass(frozen=True)
class CountermeasurePolicy:
    id_required: bool = False


@dataclass(frozen=True)
class CreditEvent:
    """One executed balance-increasing operation, kept for the fraud audit."""

    sim_time: int
    kind: str  # "topup" | "transfer"
    channel: str
    msisdn: str
    amount: Money
    presented_id: str | None
    id_matched: bool
    reference: str


class SubscriberRegistry:
    """Accounts keyed by MSISDN and IMSI, the voucher inventory, and the credit log."""

    def __init__(self) -> None:
        self.by_msisdn: dict[str, PrepaidAccount] = {}
        self.by_imsi: dict[str, PrepaidAccount] = {}
        self.vouchers: dict[str, Voucher] = {}
        self.credit_log: list[CreditEvent] = []

    def register(self, account: PrepaidAccount) -> None:
        sub = account.subscriber
        if sub.msisdn in self.by_msisdn:
            raise ValueError(f"duplicate msisdn {sub.msisdn}")
        if sub.imsi in self.by_imsi:
            raise ValueError(f"duplicate imsi {sub.imsi}")
        self.by_msisdn[sub.msisdn] = account
        self.by_imsi[sub.imsi] = account

    def add_voucher(self, voucher: Voucher) -> None:
        if voucher.code in self.vouchers:
            raise ValueError(f"duplicate voucher code {voucher.code}")
        self.vouchers[voucher.code] = voucher

    def import_voucher_batch(self, text: str) -> int:
        """Load `CODE<TAB>FACE_VALUE_MINOR_UNITS` lines; returns the count imported."""
        count = 0
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"voucher batch line {lineno}: expected CODE<TAB>VALUE")
            code, value_text = parts
            try:
                value = int(value_text)
            except ValueError:
                raise ValueError(f"voucher batch line {lineno}: bad face value {value_text!r}")
            self.add_voucher(Voucher(code.strip(), value))
            count += 1
        return count

    def account(self, msisdn: str) -> PrepaidAccount:
        try:
            return self.by_msisdn[msisdn]
        except KeyError:
            raise UnknownSubscriber(f"no subscriber with msisdn {msisdn}")


def _id_gate(policy: CountermeasurePolicy, presented_id: str | None,
             account: PrepaidAccount) -> None:
    """Enforce the countermeasure: the presented ID must exactly equal the
    registered one. Matching is exact, case-sensitive text equality."""
    if not policy.id_required:
        return
    if presented_id is None:
        raise IdMissing(f"policy requires an ID for {account.msisdn}")
    if account.subscriber.id_number != presented_id:
        raise IdMismatch(f"presented ID does not match the one registered for {account.msisdn}")


def _id_matched(presented_id: str | None, account: PrepaidAccount) -> bool:
    return presented_id is not None and account.subscriber.id_number == presented_id


def redeem_voucher(request: TopUpRequest, policy: CountermeasurePolicy,
                   registry: SubscriberRegistry, sim_time: int = 0) -> Money:
    """Redeem a single-use voucher onto the target account; returns the new balance."""
    if request.channel is not TopUpChannel.VOUCHER:
        raise ValueError("redeem_voucher requires the voucher channel")
    if request.voucher_code is None:
        raise ValueError("voucher channel requires a voucher code")
    account = registry.account(request.target_msisdn)
    voucher = registry.vouchers.get(request.voucher_code)
    if voucher is None or voucher.state is VoucherState.VOID:
        raise UnknownVoucher(f"no redeemable voucher {request.voucher_code}")
    if voucher.state is VoucherState.REDEEMED:
        raise AlreadyRedeemed(f"voucher {voucher.code} was already redeemed")
    _id_gate(policy, request.presented_id, account)

    voucher.state = VoucherState.REDEEMED
    reference = f"voucher:{voucher.code}"
    balance = apply_credit(account, voucher.face_value, reference, sim_time)
    registry.credit_log.append(CreditEvent(
        sim_time, "topup", request.channel.value, account.msisdn, voucher.face_value,
        request.presented_id, _id_matched(request.presented_id, account), reference,
    ))
    return balance


def topup_direct(request: TopUpRequest, policy: CountermeasurePolicy,
                 registry: SubscriberRegistry, sim_time: int = 0) -> Money:
    """Cash-machine or card-on-file top-up for an explicit amount."""
    if request.channel is TopUpChannel.VOUCHER:
        raise ValueError("topup_direct does not take the voucher channel")
    if request.amount is None or request.amount <= 0:
        raise NonPositiveAmount(f"top-up amount must be > 0, got {request.amount}")
    account = registry.account(request.target_msisdn)
    _id_gate(policy, request.presented_id, account)

    reference = f"{request.channel.value}:{account.msisdn}:{sim_time}"
    balance = apply_credit(account, request.amount, reference, sim_time)
    registry.credit_log.append(CreditEvent(
        sim_time, "topup", request.channel.value, account.msisdn, request.amount,
        request.presented_id, _id_matched(request.presented_id, account), reference,
    ))
    return balance


def transfer_credit(from_msisdn: str, to_msisdn: str, amount: Money,
                    presented_id: str | None, policy: CountermeasurePolicy,
                    registry: SubscriberRegistry, sim_time: int = 0) -> tuple[Money, Money]:
    """Move credit between two accounts atomically; returns both new balances.

    The ID gate applies to the sender: transferring away someone's credit is
    exactly what the countermeasure exists to stop.
    """
    if amount <= 0:
        raise NonPositiveAmount(f"transfer amount must be > 0, got {amount}")
    if from_msisdn == to_msisdn:
        raise SelfTransfer(f"{from_msisdn} cannot transfer to itself")
    sender = registry.account(from_msisdn)
    receiver = registry.account(to_msisdn)
    _id_gate(policy, presented_id, sender)

    reference = f"transfer:{from_msisdn}->{to_msisdn}:{sim_time}"
    # Debit first: it is the only leg that can fail, so a raise leaves
    # both accounts untouched.
    sender_balance = apply_transfer_out(sender, amount, reference, sim_time)
    receiver_balance = apply_credit(receiver, amount, reference, sim_time,
                                    kind=EntryKind.TRANSFER_IN)
    registry.credit_log.append(CreditEvent(
        sim_time, "transfer", "transfer", receiver.msisdn, amount,
        presented_id, _id_matched(presented_id, sender), reference,
    ))
    return sender_balance, receiver_balance


@dataclass
class FraudAuditReport:
    anonymous_topup_count: int = 0
    anonymous_transfer_count: int = 0
    unverified_credited_accounts: list[str] = field(default_factory=list)
    total_credited: Money = 0


def audit_anonymous_activity(registry: SubscriberRegistry,
                             policy: CountermeasurePolicy) -> FraudAuditReport:
    """Count executed credits that were not covered by a matching ID.

    With the countermeasure on, both anonymous counts must come out zero; the
    report also lists accounts whose identity was never verified at
    registration yet still received credit.
    """
    report = FraudAuditReport()
    unverified: set[str] = set()
    for event in registry.credit_log:
        report.total_credited += event.amount
        if not event.id_matched:
            if event.kind == "topup":
                report.anonymous_topup_count += 1
            else:
                report.anonymous_transfer_count += 1
        account = registry.by_msisdn.get(event.msisdn)
        if account is not None and not account.subscriber.id_verified:
            unverified.add(event.msisdn)
    report.unverified_credited_accounts = sorted(unverified)
    return report
