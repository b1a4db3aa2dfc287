"""The ATM case study: bank server, state-dependent controllers, devices,
and scripted scenario runs."""

from .bank import (
    Account,
    Approved,
    BalanceAmount,
    BalanceQuery,
    Bank,
    CardRecord,
    InsufficientFunds,
    PinBad,
    PinOk,
    Transfer,
    ValidatePin,
    Withdraw,
    parse_accounts,
    server_behavior,
)
from .machine import (
    ATM_STATES,
    AtmController,
    CashCollector,
    EventLog,
    TransactionData,
    card_reader_behavior,
    dispenser_behavior,
    printer_behavior,
    touchscreen_behavior,
)
from .scenario import ScenarioStep, parse_scenario, split_scenario
from .simulation import (
    AtmCell,
    AtmNames,
    ConservationReport,
    RunResult,
    build_atm_architecture,
    multi_atm_run,
    run_scenario,
)

__all__ = [
    "Account", "Approved", "BalanceAmount", "BalanceQuery", "Bank",
    "CardRecord", "InsufficientFunds", "PinBad", "PinOk", "Transfer",
    "ValidatePin", "Withdraw", "parse_accounts", "server_behavior",
    "ATM_STATES", "AtmController", "CashCollector", "EventLog",
    "TransactionData", "card_reader_behavior", "dispenser_behavior",
    "printer_behavior", "touchscreen_behavior",
    "ScenarioStep", "parse_scenario", "split_scenario",
    "AtmCell", "AtmNames", "ConservationReport", "RunResult",
    "build_atm_architecture", "multi_atm_run", "run_scenario",
]
