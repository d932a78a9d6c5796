"""Comparative and fraud-audit runs plus all text/CSV report rendering.

Everything rendered here is deterministic for a fixed scenario and seed: no
wall-clock timestamps, fixed column order, LF line endings.
"""

from __future__ import annotations

from dataclasses import dataclass

from .accounts import Money
from .scenario import Scenario
from .schemes import SchemeKind
from .simulation import Simulation, SimulationResult
from .topup import audit_anonymous_activity

SCHEME_ORDER = (
    SchemeKind.INTELLIGENT_NETWORK,
    SchemeKind.SERVICE_NODE,
    SchemeKind.HOT_BILLING,
    SchemeKind.HANDSET,
)

LEDGER_CSV_HEADER = "msisdn,seq,sim_time,kind,amount,reference"


@dataclass(frozen=True)
class SchemeMetrics:
    scheme: SchemeKind
    total_revenue: Money
    credit_exposure: Money
    peak_channels: int
    rejected_calls: int
    suspended_accounts: int


@dataclass
class ComparisonReport:
    rows: list[SchemeMetrics]

    def row(self, scheme: SchemeKind) -> SchemeMetrics:
        return next(r for r in self.rows if r.scheme is scheme)


def metrics_from_result(result: SimulationResult, scheme: SchemeKind) -> SchemeMetrics:
    return SchemeMetrics(
        scheme=scheme,
        total_revenue=result.total_revenue,
        credit_exposure=result.credit_exposure,
        peak_channels=result.voice_pool.peak_in_use,
        rejected_calls=result.calls_rejected,
        suspended_accounts=result.suspended_accounts,
    )


def run_comparison(
    scenario: Scenario,
    *,
    seed: int | None = None,
    voucher_batch: str | None = None,
    order: tuple[SchemeKind, ...] = SCHEME_ORDER,
) -> ComparisonReport:
    """Run the identical workload once per scheme in four isolated instances."""
    rows = []
    for scheme in order:
        sim = Simulation(scenario, seed=seed, voucher_batch=voucher_batch,
                         scheme_override=scheme, record_trace=False)
        rows.append(metrics_from_result(sim.run(), scheme))
    canonical = {row.scheme: row for row in rows}
    return ComparisonReport([canonical[s] for s in SCHEME_ORDER if s in canonical])


@dataclass
class AuditRunSummary:
    id_required: bool
    anonymous_topup_count: int
    anonymous_transfer_count: int
    rejected_for_id: int
    topups_applied: int
    transfers_applied: int
    total_revenue: Money
    unverified_credited_accounts: list[str]


@dataclass
class AuditReportPair:
    off: AuditRunSummary
    on: AuditRunSummary

    @property
    def revenue_delta(self) -> Money:
        """Revenue the operator forgoes by enforcing the ID requirement."""
        return self.off.total_revenue - self.on.total_revenue


def _audit_run(scenario: Scenario, id_required: bool, seed: int | None,
               voucher_batch: str | None) -> AuditRunSummary:
    sim = Simulation(scenario, seed=seed, voucher_batch=voucher_batch,
                     policy_override=id_required, record_trace=False)
    result = sim.run()
    fraud = audit_anonymous_activity(result.registry, sim.policy)
    return AuditRunSummary(
        id_required=id_required,
        anonymous_topup_count=fraud.anonymous_topup_count,
        anonymous_transfer_count=fraud.anonymous_transfer_count,
        rejected_for_id=result.rejected_for_id,
        topups_applied=result.topups_applied,
        transfers_applied=result.transfers_applied,
        total_revenue=result.total_revenue,
        unverified_credited_accounts=fraud.unverified_credited_accounts,
    )


def run_audit(scenario: Scenario, *, seed: int | None = None,
              voucher_batch: str | None = None) -> AuditReportPair:
    """Same scenario and seed twice: countermeasure off, then on."""
    return AuditReportPair(
        off=_audit_run(scenario, False, seed, voucher_batch),
        on=_audit_run(scenario, True, seed, voucher_batch),
    )


# --- rendering -----------------------------------------------------------------


def export_ledger_csv(result: SimulationResult) -> bytes:
    """All ledger entries of all accounts, sorted by (msisdn, seq)."""
    lines = [LEDGER_CSV_HEADER]
    for account in result.accounts:
        for entry in account.ledger:
            fields = (account.msisdn, str(entry.seq), str(entry.sim_time),
                      entry.kind.value, str(entry.amount), entry.reference)
            for value in fields:
                if "," in value or "\n" in value:
                    raise ValueError(f"ledger field {value!r} would break the unquoted framing")
            lines.append(",".join(fields))
    return ("\n".join(lines) + "\n").encode("utf-8")


def run_report_text(result: SimulationResult) -> str:
    lines = [
        "simulation report",
        "=================",
        f"horizon_seconds      {result.horizon}",
        f"seed                 {result.seed}",
        f"events_processed     {result.events_processed}",
        f"calls_requested      {result.calls_requested}",
        f"calls_connected      {result.calls_connected}",
        f"calls_rejected       {result.calls_rejected}",
    ]
    for reason, count in result.rejects_by_reason.items():
        lines.append(f"  rejected_{reason:<20} {count}")
    lines += [
        f"topups_applied       {result.topups_applied}",
        f"transfers_applied    {result.transfers_applied}",
        f"operations_rejected  {len(result.rejected_operations)}",
        f"rejected_for_id      {result.rejected_for_id}",
        f"total_revenue        {result.total_revenue}",
        f"total_topup_credit   {result.total_topup_credit}",
        f"credit_exposure      {result.credit_exposure}",
        f"peak_voice_channels  {result.voice_pool.peak_in_use}",
        f"peak_notify_links    {result.notify_pool.peak_in_use}",
        f"suspended_accounts   {result.suspended_accounts}",
        "",
        "accounts",
        "--------",
    ]
    for account in result.accounts:
        lines.append(f"{account.msisdn}  balance={account.balance}  "
                     f"status={account.status.value}")
    return "\n".join(lines) + "\n"


_COMPARE_COLUMNS = ("scheme", "total_revenue", "credit_exposure", "peak_channels",
                    "rejected_calls", "suspended_accounts")


def comparison_text(report: ComparisonReport) -> str:
    widths = [18, 14, 16, 14, 15, 19]
    header = "".join(f"{name:<{w}}" for name, w in zip(_COMPARE_COLUMNS, widths))
    lines = ["scheme comparison", "=================", header.rstrip()]
    for row in report.rows:
        cells = (row.scheme.value, row.total_revenue, row.credit_exposure,
                 row.peak_channels, row.rejected_calls, row.suspended_accounts)
        lines.append("".join(f"{str(c):<{w}}" for c, w in zip(cells, widths)).rstrip())
    return "\n".join(lines) + "\n"


def comparison_csv(report: ComparisonReport) -> str:
    lines = [",".join(_COMPARE_COLUMNS)]
    for row in report.rows:
        lines.append(",".join(str(c) for c in (
            row.scheme.value, row.total_revenue, row.credit_exposure,
            row.peak_channels, row.rejected_calls, row.suspended_accounts)))
    return "\n".join(lines) + "\n"


def _audit_lines(summary: AuditRunSummary) -> list[str]:
    return [
        f"  anonymous_topup_count     {summary.anonymous_topup_count}",
        f"  anonymous_transfer_count  {summary.anonymous_transfer_count}",
        f"  rejected_for_id           {summary.rejected_for_id}",
        f"  topups_applied            {summary.topups_applied}",
        f"  transfers_applied         {summary.transfers_applied}",
        f"  total_revenue             {summary.total_revenue}",
        f"  unverified_credited       {','.join(summary.unverified_credited_accounts) or '-'}",
    ]


def audit_text(pair: AuditReportPair) -> str:
    lines = ["fraud audit", "===========", "policy id_required=off"]
    lines += _audit_lines(pair.off)
    lines.append("policy id_required=on")
    lines += _audit_lines(pair.on)
    lines.append(f"revenue_delta (off - on)    {pair.revenue_delta}")
    return "\n".join(lines) + "\n"


def audit_csv(pair: AuditReportPair) -> str:
    columns = ("id_required", "anonymous_topup_count", "anonymous_transfer_count",
               "rejected_for_id", "topups_applied", "transfers_applied", "total_revenue")
    lines = [",".join(columns)]
    for summary in (pair.off, pair.on):
        lines.append(",".join(str(v) for v in (
            "on" if summary.id_required else "off",
            summary.anonymous_topup_count, summary.anonymous_transfer_count,
            summary.rejected_for_id, summary.topups_applied,
            summary.transfers_applied, summary.total_revenue)))
    lines.append(f"revenue_delta,{pair.revenue_delta}")
    return "\n".join(lines) + "\n"


def trace_csv(result: SimulationResult) -> str:
    """Message trace as CSV (optional run output)."""
    lines = ["time,kind,source,destination,session_id,detail"]
    for message in result.trace or ():
        detail = message.detail.replace(",", ";")
        lines.append(f"{message.time},{message.kind.value},{message.source},"
                     f"{message.destination},{message.session_id or '-'},{detail}")
    return "\n".join(lines) + "\n"
