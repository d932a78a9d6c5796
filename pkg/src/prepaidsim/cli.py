"""`sim` command line: a thin HTTP client over the service.

Without --server the requests run against an in-process instance of the app
through an ASGI transport, so no daemon is needed; with --server URL the same
requests go to a remote deployment. Either way the client only ever writes the
bytes the service returned.

Exit codes: 0 success, 1 scenario errors, 2 internal invariant violation.
"""

from __future__ import annotations

import argparse
import asyncio
import os
import sys
from pathlib import Path

import httpx


def _use_color() -> bool:
    return "SIM_NO_COLOR" not in os.environ and sys.stdout.isatty()


def _style(text: str, code: str) -> str:
    if not _use_color():
        return text
    return f"\033[{code}m{text}\033[0m"


def _red(text: str) -> str:
    return _style(text, "31")


def _green(text: str) -> str:
    return _style(text, "32")


def _post(path: str, payload: dict, server: str | None) -> httpx.Response:
    if server:
        return httpx.post(server.rstrip("/") + path, json=payload, timeout=120.0)

    from .service import create_app

    async def go() -> httpx.Response:
        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(transport=transport, base_url="http://sim") as client:
            return await client.post(path, json=payload, timeout=120.0)

    return asyncio.run(go())


def _print_diagnostics(diagnostics: list[dict]) -> None:
    for d in diagnostics:
        print(_red(f"line {d['line']}, col {d['column']}: {d['message']}"), file=sys.stderr)


def _handle_failure(response: httpx.Response) -> int:
    if response.status_code == 400:
        detail = response.json().get("detail", {})
        if isinstance(detail, dict) and "diagnostics" in detail:
            _print_diagnostics(detail["diagnostics"])
        else:
            print(_red(str(detail)), file=sys.stderr)
        return 1
    print(_red(f"internal error: {response.text}"), file=sys.stderr)
    return 2


class _InputError(Exception):
    pass


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise _InputError(f"cannot read {path}: {exc.strerror or exc}")


def _scenario_payload(args: argparse.Namespace) -> dict:
    payload: dict = {"scenario": _read(args.scenario)}
    if args.seed is not None:
        payload["seed"] = args.seed
    if getattr(args, "vouchers", None):
        payload["voucher_batch"] = _read(args.vouchers)
    return payload


def cmd_run(args: argparse.Namespace) -> int:
    payload = _scenario_payload(args)
    payload["include_trace"] = args.trace
    response = _post("/run", payload, args.server)
    if response.status_code != 200:
        return _handle_failure(response)
    body = response.json()
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "cdrs.csv").write_bytes(body["cdrs_csv"].encode("utf-8"))
    (out / "ledger.csv").write_bytes(body["ledger_csv"].encode("utf-8"))
    (out / "report.txt").write_bytes(body["report_txt"].encode("utf-8"))
    if args.trace and body.get("trace_csv"):
        (out / "trace.csv").write_bytes(body["trace_csv"].encode("utf-8"))
    summary = body["summary"]
    print(_green(f"run complete: {summary['calls_requested']} calls, "
                 f"revenue {summary['total_revenue']}, "
                 f"exposure {summary['credit_exposure']} -> {out}"))
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    response = _post("/compare", _scenario_payload(args), args.server)
    if response.status_code != 200:
        return _handle_failure(response)
    body = response.json()
    sys.stdout.write(body["report_csv"] if args.format == "csv" else body["report_txt"])
    return 0


def cmd_audit(args: argparse.Namespace) -> int:
    response = _post("/audit", _scenario_payload(args), args.server)
    if response.status_code != 200:
        return _handle_failure(response)
    body = response.json()
    sys.stdout.write(body["report_csv"] if args.format == "csv" else body["report_txt"])
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    payload = {"scenario": _read(args.scenario)}
    response = _post("/validate", payload, args.server)
    if response.status_code != 200:
        return _handle_failure(response)
    body = response.json()
    if body["ok"]:
        print(_green("scenario ok"))
        return 0
    _print_diagnostics(body["diagnostics"])
    return 1


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sim", description="prepaid charging scheme simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("scenario", help="scenario file")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--vouchers", default=None,
                       help="voucher batch file (CODE<TAB>FACE_VALUE per line)")
        p.add_argument("--server", default=os.environ.get("SIM_SERVER"),
                       help="remote service URL (default: run in process)")

    p_run = sub.add_parser("run", help="run a scenario and write cdrs/ledger/report")
    scenario_args(p_run)
    p_run.add_argument("-o", "--output", required=True, help="output directory")
    p_run.add_argument("--trace", action="store_true", help="also write trace.csv")
    p_run.set_defaults(func=cmd_run)

    p_compare = sub.add_parser("compare", help="run the workload once per scheme")
    scenario_args(p_compare)
    p_compare.add_argument("--format", choices=("text", "csv"), default="text")
    p_compare.set_defaults(func=cmd_compare)

    p_audit = sub.add_parser("audit", help="run twice with the ID policy off then on")
    scenario_args(p_audit)
    p_audit.add_argument("--format", choices=("text", "csv"), default="text")
    p_audit.set_defaults(func=cmd_audit)

    p_validate = sub.add_parser("validate", help="parse and check a scenario only")
    p_validate.add_argument("scenario", help="scenario file")
    p_validate.add_argument("--server", default=os.environ.get("SIM_SERVER"))
    p_validate.set_defaults(func=cmd_validate)

    p_serve = sub.add_parser("serve", help="start the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _InputError as exc:
        print(_red(str(exc)), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
