"""HTTP facade over the simulator: validate, run, compare, audit, GPRS rating.

Scenario text travels in the request body and every artifact (CDR CSV, ledger
CSV, report text) comes back verbatim in the response, so a thin client can
write byte-identical files without sharing a filesystem with the server.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .accounts import TariffPlan
from .cdr import merge_gprs_partials, parse_gprs_csv, rate_gprs_session, export_cdr_csv
from .reports import (
    audit_csv,
    audit_text,
    comparison_csv,
    comparison_text,
    export_ledger_csv,
    run_audit,
    run_comparison,
    run_report_text,
    trace_csv,
)
from .scenario import Scenario, ScenarioError, parse_scenario
from .simulation import InvariantViolation, Simulation


class DiagnosticModel(BaseModel):
    line: int
    column: int
    message: str


class ValidateRequest(BaseModel):
    scenario: str


class ValidateResponse(BaseModel):
    ok: bool
    diagnostics: list[DiagnosticModel]


class RunRequest(BaseModel):
    scenario: str
    seed: int | None = None
    voucher_batch: str | None = None
    include_trace: bool = False


class RunSummary(BaseModel):
    horizon: int
    seed: int
    events_processed: int
    calls_requested: int
    calls_connected: int
    calls_rejected: int
    topups_applied: int
    transfers_applied: int
    rejected_for_id: int
    total_revenue: int
    credit_exposure: int
    peak_channels: int
    suspended_accounts: int


class RunResponse(BaseModel):
    cdrs_csv: str
    ledger_csv: str
    report_txt: str
    trace_csv: str | None = None
    summary: RunSummary


class CompareRequest(BaseModel):
    scenario: str
    seed: int | None = None
    voucher_batch: str | None = None


class SchemeMetricsModel(BaseModel):
    scheme: str
    total_revenue: int
    credit_exposure: int
    peak_channels: int
    rejected_calls: int
    suspended_accounts: int


class CompareResponse(BaseModel):
    rows: list[SchemeMetricsModel]
    report_txt: str
    report_csv: str


class AuditRequest(BaseModel):
    scenario: str
    seed: int | None = None
    voucher_batch: str | None = None


class AuditRunModel(BaseModel):
    id_required: bool
    anonymous_topup_count: int
    anonymous_transfer_count: int
    rejected_for_id: int
    topups_applied: int
    transfers_applied: int
    total_revenue: int
    unverified_credited_accounts: list[str]


class AuditResponse(BaseModel):
    off: AuditRunModel
    on: AuditRunModel
    revenue_delta: int
    report_txt: str
    report_csv: str


class GprsRateRequest(BaseModel):
    partials_csv: str
    data_rate: int = Field(ge=0)


class GprsSessionModel(BaseModel):
    session_id: str
    total_kilobytes: int
    cost: int
    discrepancy: int


class GprsRateResponse(BaseModel):
    sessions: list[GprsSessionModel]
    malformed: int


def _parse_or_400(text: str) -> Scenario:
    scenario, diagnostics = parse_scenario(text)
    if scenario is None:
        raise HTTPException(status_code=400, detail={
            "diagnostics": [DiagnosticModel(line=d.line, column=d.column,
                                            message=d.message).model_dump()
                            for d in diagnostics]})
    return scenario


def create_app() -> FastAPI:
    app = FastAPI(title="prepaidsim", version="0.1.0")

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.post("/validate", response_model=ValidateResponse)
    def validate(request: ValidateRequest) -> ValidateResponse:
        _, diagnostics = parse_scenario(request.scenario)
        return ValidateResponse(
            ok=not diagnostics,
            diagnostics=[DiagnosticModel(line=d.line, column=d.column, message=d.message)
                         for d in diagnostics])

    @app.post("/run", response_model=RunResponse)
    def run(request: RunRequest) -> RunResponse:
        scenario = _parse_or_400(request.scenario)
        try:
            sim = Simulation(scenario, seed=request.seed,
                             voucher_batch=request.voucher_batch,
                             record_trace=request.include_trace)
            result = sim.run()
        except ScenarioError as exc:
            raise HTTPException(status_code=400, detail={
                "diagnostics": [DiagnosticModel(line=d.line, column=d.column,
                                                message=d.message).model_dump()
                                for d in exc.diagnostics]})
        except ValueError as exc:  # e.g. a malformed voucher batch
            raise HTTPException(status_code=400, detail=str(exc))
        except InvariantViolation as exc:
            raise HTTPException(status_code=500, detail=str(exc))
        return RunResponse(
            cdrs_csv=export_cdr_csv(result.cdrs).decode("utf-8"),
            ledger_csv=export_ledger_csv(result).decode("utf-8"),
            report_txt=run_report_text(result),
            trace_csv=trace_csv(result) if request.include_trace else None,
            summary=RunSummary(
                horizon=result.horizon,
                seed=result.seed,
                events_processed=result.events_processed,
                calls_requested=result.calls_requested,
                calls_connected=result.calls_connected,
                calls_rejected=result.calls_rejected,
                topups_applied=result.topups_applied,
                transfers_applied=result.transfers_applied,
                rejected_for_id=result.rejected_for_id,
                total_revenue=result.total_revenue,
                credit_exposure=result.credit_exposure,
                peak_channels=result.voice_pool.peak_in_use,
                suspended_accounts=result.suspended_accounts,
            ),
        )

    @app.post("/compare", response_model=CompareResponse)
    def compare(request: CompareRequest) -> CompareResponse:
        scenario = _parse_or_400(request.scenario)
        try:
            report = run_comparison(scenario, seed=request.seed,
                                    voucher_batch=request.voucher_batch)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        except InvariantViolation as exc:
            raise HTTPException(status_code=500, detail=str(exc))
        return CompareResponse(
            rows=[SchemeMetricsModel(
                scheme=row.scheme.value,
                total_revenue=row.total_revenue,
                credit_exposure=row.credit_exposure,
                peak_channels=row.peak_channels,
                rejected_calls=row.rejected_calls,
                suspended_accounts=row.suspended_accounts,
            ) for row in report.rows],
            report_txt=comparison_text(report),
            report_csv=comparison_csv(report),
        )

    @app.post("/audit", response_model=AuditResponse)
    def audit(request: AuditRequest) -> AuditResponse:
        scenario = _parse_or_400(request.scenario)
        try:
            pair = run_audit(scenario, seed=request.seed,
                             voucher_batch=request.voucher_batch)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        except InvariantViolation as exc:
            raise HTTPException(status_code=500, detail=str(exc))

        def model(summary) -> AuditRunModel:
            return AuditRunModel(
                id_required=summary.id_required,
                anonymous_topup_count=summary.anonymous_topup_count,
                anonymous_transfer_count=summary.anonymous_transfer_count,
                rejected_for_id=summary.rejected_for_id,
                topups_applied=summary.topups_applied,
                transfers_applied=summary.transfers_applied,
                total_revenue=summary.total_revenue,
                unverified_credited_accounts=summary.unverified_credited_accounts,
            )

        return AuditResponse(
            off=model(pair.off), on=model(pair.on),
            revenue_delta=pair.revenue_delta,
            report_txt=audit_text(pair), report_csv=audit_csv(pair),
        )

    @app.post("/gprs/rate", response_model=GprsRateResponse)
    def gprs_rate(request: GprsRateRequest) -> GprsRateResponse:
        try:
            records, malformed_lines = parse_gprs_csv(request.partials_csv)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        merged = merge_gprs_partials(records)
        tariff = TariffPlan("gprs", 0, 60, request.data_rate)
        sessions = [rate_gprs_session(merged.sessions[sid], tariff)
                    for sid in sorted(merged.sessions)]
        return GprsRateResponse(
            sessions=[GprsSessionModel(
                session_id=s.session_id,
                total_kilobytes=s.total_kilobytes,
                cost=s.cost,
                discrepancy=s.discrepancy,
            ) for s in sessions],
            malformed=malformed_lines + merged.malformed,
        )

    return app


app = create_app()
