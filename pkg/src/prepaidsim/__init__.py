"""Deterministic simulator for prepaid mobile charging schemes.

Models the four classic prepaid architectures (intelligent network, service
node, hot billing, handset/SIM based) plus top-up channels and the
ID-verification countermeasure, so they can be compared on revenue, credit
exposure, and channel consumption.
"""

from .accounts import (
    AccountStatus,
    EntryKind,
    InsufficientBalance,
    LedgerEntry,
    Money,
    PrepaidAccount,
    SubscriberRecord,
    TariffPlan,
    apply_charge,
    apply_credit,
    max_chargeable_duration,
    rate_voice_cost,
    replay_balance,
)
from .scenario import Scenario, load_scenario, parse_scenario
from .schemes import SchemeKind
from .simulation import Simulation, SimulationResult

__version__ = "0.1.0"

__all__ = [
    "AccountStatus",
    "EntryKind",
    "InsufficientBalance",
    "LedgerEntry",
    "Money",
    "PrepaidAccount",
    "Scenario",
    "SchemeKind",
    "Simulation",
    "SimulationResult",
    "SubscriberRecord",
    "TariffPlan",
    "apply_charge",
    "apply_credit",
    "load_scenario",
    "max_chargeable_duration",
    "parse_scenario",
    "rate_voice_cost",
    "replay_balance",
    "__version__",
]
