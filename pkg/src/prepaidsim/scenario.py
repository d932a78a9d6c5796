"""Line-oriented scenario files: parsing, diagnostics, and referential checks.

One directive per line, `#` starts a comment, tokens are whitespace separated.
Errors never abort the parse; every problem is collected as a (line, column,
message) diagnostic so a scenario author sees all of them at once.

Directives:
    tariff ID VOICE_RATE INCREMENT_S DATA_RATE
    account MSISDN IMSI ID_NUMBER|- BALANCE TARIFF_ID
    policy id_required on|off
    channels N|unlimited
    call T FROM TO DURATION SCHEME
    topup T CHANNEL MSISDN AMOUNT|VOUCHER_CODE ID|-
    transfer T FROM TO AMOUNT ID|-
    random seed=S rate=R mean_duration=D [schemes=LIST]
    horizon T
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .accounts import Money, SubscriberRecord, TariffPlan
from .engine import RandomWorkload, ScriptedCall, WorkloadMode, WorkloadSpec
from .schemes import SchemeKind
from .topup import CountermeasurePolicy, TopUpChannel, TopUpRequest


@dataclass(frozen=True)
class Diagnostic:
    line: int
    column: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line}, col {self.column}: {self.message}"


class ScenarioError(Exception):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


@dataclass
class ScenarioAccount:
    subscriber: SubscriberRecord
    initial_balance: Money
    tariff_id: str


@dataclass
class ScheduledTopUp:
    time: int
    request: TopUpRequest


@dataclass
class ScheduledTransfer:
    time: int
    from_msisdn: str
    to_msisdn: str
    amount: Money
    presented_id: str | None


@dataclass
class Scenario:
    tariffs: dict[str, TariffPlan] = field(default_factory=dict)
    accounts: list[ScenarioAccount] = field(default_factory=list)
    policy: CountermeasurePolicy = CountermeasurePolicy(False)
    channel_capacity: int | None = None  # None = unlimited
    workload: WorkloadSpec = field(
        default_factory=lambda: WorkloadSpec(WorkloadMode.SCRIPTED))
    topups: list[ScheduledTopUp] = field(default_factory=list)
    transfers: list[ScheduledTransfer] = field(default_factory=list)
    horizon: int = 0
    seed: int = 1


_SCHEME_TOKENS = {kind.value: kind for kind in SchemeKind}
_CHANNEL_TOKENS = {ch.value: ch for ch in TopUpChannel}


def _tokenize(raw: str) -> list[tuple[str, int]]:
    """Split a line into (token, 1-based column) pairs, dropping `#` comments."""
    if "#" in raw:
        raw = raw[: raw.index("#")]
    tokens = []
    col = 0
    for part in raw.split():
        col = raw.index(part, col)
        tokens.append((part, col + 1))
        col += len(part)
    return tokens


class _Parser:
    def __init__(self) -> None:
        self.scenario = Scenario()
        self.diagnostics: list[Diagnostic] = []
        self.random_spec: RandomWorkload | None = None
        self.scripted: list[tuple[int, ScriptedCall]] = []
        self.seen_once: set[str] = set()
        self.msisdns: set[str] = set()
        self.imsis: set[str] = set()
        # (line, column, name) references resolved after the whole file is read
        self.account_refs: list[tuple[int, int, str]] = []
        self.tariff_refs: list[tuple[int, int, str]] = []

    def error(self, line: int, col: int, message: str) -> None:
        self.diagnostics.append(Diagnostic(line, col, message))

    def parse(self, text: str) -> tuple[Scenario | None, list[Diagnostic]]:
        for lineno, raw in enumerate(text.splitlines(), start=1):
            tokens = _tokenize(raw)
            if not tokens:
                continue
            (keyword, col), args = tokens[0], tokens[1:]
            handler = getattr(self, f"_parse_{keyword}", None)
            if handler is None:
                self.error(lineno, col, f"unknown directive {keyword!r}")
                continue
            handler(lineno, args)
        self._finish()
        if self.diagnostics:
            return None, sorted(self.diagnostics, key=lambda d: (d.line, d.column))
        return self.scenario, []

    # --- shared field readers ---

    def _want(self, line: int, args: list[tuple[str, int]], count: int, usage: str) -> bool:
        if len(args) != count:
            col = args[-1][1] if args else 1
            self.error(line, col, f"expected {usage}")
            return False
        return True

    def _int(self, line: int, token: str, col: int, name: str,
             minimum: int | None = None) -> int | None:
        try:
            value = int(token)
        except ValueError:
            self.error(line, col, f"{name} must be an integer, got {token!r}")
            return None
        if minimum is not None and value < minimum:
            self.error(line, col, f"{name} must be >= {minimum}, got {value}")
            return None
        return value

    def _identifier(self, line: int, token: str, col: int, name: str) -> str | None:
        if "," in token:
            self.error(line, col, f"{name} must not contain a comma")
            return None
        return token

    def _once(self, line: int, col: int, keyword: str) -> bool:
        if keyword in self.seen_once:
            self.error(line, col, f"duplicate {keyword} directive")
            return False
        self.seen_once.add(keyword)
        return True

    # --- directives ---

    def _parse_tariff(self, line: int, args) -> None:
        if not self._want(line, args, 4, "tariff ID VOICE_RATE INCREMENT_S DATA_RATE"):
            return
        (tid, c0), (rate, c1), (inc, c2), (data, c3) = args
        tariff_id = self._identifier(line, tid, c0, "tariff id")
        voice_rate = self._int(line, rate, c1, "voice rate", minimum=0)
        increment = self._int(line, inc, c2, "increment seconds", minimum=1)
        data_rate = self._int(line, data, c3, "data rate", minimum=0)
        if None in (tariff_id, voice_rate, increment, data_rate):
            return
        if tariff_id in self.scenario.tariffs:
            self.error(line, c0, f"duplicate tariff id {tariff_id!r}")
            return
        self.scenario.tariffs[tariff_id] = TariffPlan(tariff_id, voice_rate, increment, data_rate)

    def _parse_account(self, line: int, args) -> None:
        if not self._want(line, args, 5, "account MSISDN IMSI ID_NUMBER|- BALANCE TARIFF_ID"):
            return
        (msisdn, c0), (imsi, c1), (id_number, c2), (balance, c3), (tariff_id, c4) = args
        msisdn = self._identifier(line, msisdn, c0, "msisdn")
        imsi = self._identifier(line, imsi, c1, "imsi")
        balance_value = self._int(line, balance, c3, "balance", minimum=0)
        if None in (msisdn, imsi, balance_value):
            return
        if msisdn in self.msisdns:
            self.error(line, c0, f"duplicate msisdn {msisdn!r}")
            return
        if imsi in self.imsis:
            self.error(line, c1, f"duplicate imsi {imsi!r}")
            return
        self.msisdns.add(msisdn)
        self.imsis.add(imsi)
        self.tariff_refs.append((line, c4, tariff_id))
        identity = None if id_number == "-" else id_number
        subscriber = SubscriberRecord(msisdn, imsi, identity, id_verified=identity is not None)
        self.scenario.accounts.append(ScenarioAccount(subscriber, balance_value, tariff_id))

    def _parse_policy(self, line: int, args) -> None:
        if not self._want(line, args, 2, "policy id_required on|off"):
            return
        (name, c0), (value, c1) = args
        if name != "id_required":
            self.error(line, c0, f"unknown policy {name!r}")
            return
        if value not in ("on", "off"):
            self.error(line, c1, "policy value must be on or off")
            return
        if self._once(line, c0, "policy"):
            self.scenario.policy = CountermeasurePolicy(value == "on")

    def _parse_channels(self, line: int, args) -> None:
        if not self._want(line, args, 1, "channels N|unlimited"):
            return
        (value, c0) = args[0]
        if not self._once(line, c0, "channels"):
            return
        if value == "unlimited":
            self.scenario.channel_capacity = None
        else:
            capacity = self._int(line, value, c0, "channel capacity", minimum=0)
            if capacity is not None:
                self.scenario.channel_capacity = capacity

    def _parse_call(self, line: int, args) -> None:
        if not self._want(line, args, 5, "call T FROM TO DURATION SCHEME"):
            return
        (t, c0), (caller, c1), (callee, c2), (duration, c3), (scheme, c4) = args
        start = self._int(line, t, c0, "call time", minimum=0)
        caller = self._identifier(line, caller, c1, "caller")
        callee = self._identifier(line, callee, c2, "callee")
        seconds = self._int(line, duration, c3, "duration", minimum=0)
        kind = _SCHEME_TOKENS.get(scheme.upper())
        if kind is None:
            self.error(line, c4, f"unknown scheme {scheme!r} (expected IN, SN, HOT or HANDSET)")
        if None in (start, caller, callee, seconds, kind):
            return
        self.account_refs.append((line, c1, caller))
        self.scripted.append((line, ScriptedCall(start, caller, callee, seconds, kind)))

    def _parse_topup(self, line: int, args) -> None:
        if not self._want(line, args, 5, "topup T CHANNEL MSISDN AMOUNT|VOUCHER_CODE ID|-"):
            return
        (t, c0), (channel, c1), (msisdn, c2), (value, c3), (presented, c4) = args
        when = self._int(line, t, c0, "topup time", minimum=0)
        ch = _CHANNEL_TOKENS.get(channel.lower())
        if ch is None:
            self.error(line, c1, f"unknown top-up channel {channel!r} "
                                 "(expected voucher, cash or card)")
        msisdn = self._identifier(line, msisdn, c2, "msisdn")
        if None in (when, ch, msisdn):
            return
        self.account_refs.append((line, c2, msisdn))
        presented_id = None if presented == "-" else presented
        if ch is TopUpChannel.VOUCHER:
            request = TopUpRequest(ch, msisdn, voucher_code=value, presented_id=presented_id)
        else:
            amount = self._int(line, value, c3, "topup amount")
            if amount is None:
                return
            request = TopUpRequest(ch, msisdn, amount=amount, presented_id=presented_id)
        self.scenario.topups.append(ScheduledTopUp(when, request))

    def _parse_transfer(self, line: int, args) -> None:
        if not self._want(line, args, 5, "transfer T FROM TO AMOUNT ID|-"):
            return
        (t, c0), (origin, c1), (target, c2), (amount, c3), (presented, c4) = args
        when = self._int(line, t, c0, "transfer time", minimum=0)
        origin = self._identifier(line, origin, c1, "sender msisdn")
        target = self._identifier(line, target, c2, "receiver msisdn")
        value = self._int(line, amount, c3, "transfer amount")
        if None in (when, origin, target, value):
            return
        self.account_refs.append((line, c1, origin))
        self.account_refs.append((line, c2, target))
        presented_id = None if presented == "-" else presented
        self.scenario.transfers.append(ScheduledTransfer(when, origin, target, value, presented_id))

    def _parse_random(self, line: int, args) -> None:
        if not args:
            self.error(line, 1, "expected random seed=S rate=R mean_duration=D [schemes=LIST]")
            return
        if not self._once(line, args[0][1], "random"):
            return
        values: dict[str, str] = {}
        for token, col in args:
            if "=" not in token:
                self.error(line, col, f"expected key=value, got {token!r}")
                return
            key, _, value = token.partition("=")
            if key not in ("seed", "rate", "mean_duration", "schemes"):
                self.error(line, col, f"unknown random parameter {key!r}")
                return
            values[key] = value
        missing = [k for k in ("seed", "rate", "mean_duration") if k not in values]
        if missing:
            self.error(line, args[0][1], f"random directive missing {', '.join(missing)}")
            return
        try:
            seed = int(values["seed"])
            rate = float(values["rate"])
            mean_duration = float(values["mean_duration"])
        except ValueError:
            self.error(line, args[0][1], "random parameters must be numeric")
            return
        if rate <= 0 or mean_duration < 0:
            self.error(line, args[0][1], "random rate must be > 0 and mean_duration >= 0")
            return
        schemes: list[SchemeKind] = []
        for token in filter(None, values.get("schemes", "").split(",")):
            kind = _SCHEME_TOKENS.get(token.upper())
            if kind is None:
                self.error(line, args[0][1], f"unknown scheme {token!r} in schemes list")
                return
            schemes.append(kind)
        self.random_spec = RandomWorkload(seed, rate, mean_duration, (), tuple(schemes))
        self.scenario.seed = seed

    def _parse_horizon(self, line: int, args) -> None:
        if not self._want(line, args, 1, "horizon T"):
            return
        (value, c0) = args[0]
        if not self._once(line, c0, "horizon"):
            return
        horizon = self._int(line, value, c0, "horizon", minimum=1)
        if horizon is not None:
            self.scenario.horizon = horizon

    # --- whole-file checks ---

    def _finish(self) -> None:
        if "horizon" not in self.seen_once:
            self.error(0, 0, "missing horizon directive")
        for line, col, tariff_id in self.tariff_refs:
            if tariff_id not in self.scenario.tariffs:
                self.error(line, col, f"undefined tariff {tariff_id!r}")
        for line, col, msisdn in self.account_refs:
            if msisdn not in self.msisdns:
                self.error(line, col, f"undefined account {msisdn!r}")
        if self.random_spec is not None and self.scripted:
            self.error(self.scripted[0][0], 1,
                       "scripted call directives cannot be combined with a random workload")
        if self.random_spec is not None:
            if not self.scenario.accounts:
                self.error(0, 0, "random workload requires at least one account")
            universe = tuple(a.subscriber.msisdn for a in self.scenario.accounts)
            self.scenario.workload = WorkloadSpec(
                WorkloadMode.RANDOM,
                random=RandomWorkload(self.random_spec.seed, self.random_spec.arrival_rate,
                                      self.random_spec.mean_duration, universe,
                                      self.random_spec.schemes),
            )
        else:
            calls = sorted((c for _, c in self.scripted), key=lambda c: c.start_time)
            self.scenario.workload = WorkloadSpec(WorkloadMode.SCRIPTED, scripted_calls=calls)


def parse_scenario(text: str) -> tuple[Scenario | None, list[Diagnostic]]:
    """Parse scenario text; returns (scenario, []) or (None, diagnostics)."""
    return _Parser().parse(text)


def load_scenario(text: str) -> Scenario:
    """parse_scenario, raising ScenarioError when the text has any diagnostic."""
    scenario, diagnostics = parse_scenario(text)
    if scenario is None:
        raise ScenarioError(diagnostics)
    return scenario
