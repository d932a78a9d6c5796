"""Call detail records, the GPRS dual-source merge, rating, and CSV framing.

The CSV formats are bit-exact external interfaces: LF line endings, no quoting
(fields are constrained to exclude commas), and a fixed sort order, so a rerun
of the same scenario produces byte-identical files.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

from .accounts import InsufficientBalance, Money, PrepaidAccount, TariffPlan, apply_charge
from .schemes import SchemeKind

CDR_CSV_HEADER = (
    "record_id,session_id,imsi,msisdn,scheme,start_time,billed_duration,cost,termination_reason"
)
GPRS_CSV_HEADER = "session_id,source,seq_no,bytes,service_tag"


@dataclass(frozen=True)
class CallDetailRecord:
    record_id: str
    session_id: str
    imsi: str
    msisdn: str
    scheme: SchemeKind
    start_time: int
    billed_duration: int
    cost: Money
    termination_reason: str


def export_cdr_csv(records: Iterable[CallDetailRecord]) -> bytes:
    """Render CDRs as CSV bytes, sorted by (start_time, record_id)."""
    lines = [CDR_CSV_HEADER]
    for r in sorted(records, key=lambda r: (r.start_time, r.record_id)):
        fields = (r.record_id, r.session_id, r.imsi, r.msisdn, r.scheme.value,
                  str(r.start_time), str(r.billed_duration), str(r.cost),
                  r.termination_reason)
        for value in fields:
            if "," in value or "\n" in value:
                raise ValueError(f"CDR field {value!r} would break the unquoted framing")
        lines.append(",".join(fields))
    return ("\n".join(lines) + "\n").encode("utf-8")


def parse_cdr_csv(data: bytes | str) -> list[CallDetailRecord]:
    """Inverse of export_cdr_csv."""
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    lines = text.split("\n")
    if not lines or lines[0] != CDR_CSV_HEADER:
        raise ValueError("missing or wrong CDR CSV header")
    records = []
    for line in lines[1:]:
        if not line:
            continue
        (record_id, session_id, imsi, msisdn, scheme, start_time,
         billed_duration, cost, reason) = line.split(",")
        records.append(CallDetailRecord(
            record_id, session_id, imsi, msisdn, SchemeKind(scheme),
            int(start_time), int(billed_duration), int(cost), reason,
        ))
    return records


# --- GPRS partial records ------------------------------------------------------


class GprsSource(Enum):
    CORE_NETWORK = "core"
    ISP_NETWORK = "isp"


@dataclass(frozen=True)
class GprsPartialRecord:
    session_id: str
    source: GprsSource
    seq_no: int
    byte_count: int
    service_tag: str = ""


@dataclass
class MergedGprsSession:
    session_id: str
    core_bytes: int = 0
    isp_bytes: int = 0

    @property
    def billable_bytes(self) -> int:
        # The core network is authoritative; ISP records exist for reconciliation.
        return self.core_bytes

    @property
    def discrepancy(self) -> int:
        return self.isp_bytes - self.core_bytes


@dataclass
class GprsMergeResult:
    sessions: dict[str, MergedGprsSession] = field(default_factory=dict)
    malformed: int = 0


def merge_gprs_partials(records: Iterable[GprsPartialRecord]) -> GprsMergeResult:
    """Dedupe partial records and total bytes per session and source.

    Duplicates share a (session_id, source, seq_no) key; the first occurrence
    wins. Malformed records (negative counters, blank session) are counted and
    skipped rather than failing the batch.
    """
    result = GprsMergeResult()
    seen: set[tuple[str, GprsSource, int]] = set()
    for record in records:
        if not record.session_id or record.seq_no < 0 or record.byte_count < 0:
            result.malformed += 1
            continue
        key = (record.session_id, record.source, record.seq_no)
        if key in seen:
            continue
        seen.add(key)
        session = result.sessions.get(record.session_id)
        if session is None:
            session = MergedGprsSession(record.session_id)
            result.sessions[record.session_id] = session
        if record.source is GprsSource.CORE_NETWORK:
            session.core_bytes += record.byte_count
        else:
            session.isp_bytes += record.byte_count
    return result


@dataclass
class RatedSession:
    session_id: str
    total_kilobytes: int
    cost: Money
    discrepancy: int
    unrecovered: bool = False


def rate_gprs_session(merged: MergedGprsSession, tariff: TariffPlan) -> RatedSession:
    """Rate one merged session: whole kilobytes rounded up times the data rate."""
    kilobytes = -(-merged.billable_bytes // 1024)
    return RatedSession(merged.session_id, kilobytes, kilobytes * tariff.data_rate,
                        merged.discrepancy)


def charge_rated_session(rated: RatedSession, account: PrepaidAccount,
                         sim_time: int = 0) -> RatedSession:
    """Apply a rated session's cost to the account.

    GPRS charging is deferred like hot billing, but overdraft is not granted:
    an unpayable session is flagged unrecovered instead, which is the shape the
    credit risk takes on the data side.
    """
    try:
        apply_charge(account, rated.cost, f"gprs:{rated.session_id}", sim_time,
                     allow_negative=False)
    except InsufficientBalance:
        rated.unrecovered = True
    return rated


def parse_gprs_csv(data: bytes | str) -> tuple[list[GprsPartialRecord], int]:
    """Parse `session_id,source,seq_no,bytes,service_tag` lines.

    Returns the well-formed records plus a count of malformed lines, which are
    skipped (same contract as the merge itself).
    """
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    lines = text.split("\n")
    if not lines or lines[0] != GPRS_CSV_HEADER:
        raise ValueError("missing or wrong GPRS CSV header")
    records: list[GprsPartialRecord] = []
    malformed = 0
    for line in lines[1:]:
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 5:
            malformed += 1
            continue
        session_id, source, seq_no, byte_count, service_tag = parts
        try:
            records.append(GprsPartialRecord(
                session_id, GprsSource(source), int(seq_no), int(byte_count), service_tag,
            ))
        except ValueError:
            malformed += 1
    return records, malformed
