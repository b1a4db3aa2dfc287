"""Wiring and running whole ATM systems from scripted scenarios.

run_scenario() is the file-driven entry point: parse the architecture,
accounts, and scenario files, instantiate, start, wait for every card
reader to finish its script, shut down, and write the trace and log
artifacts. multi_atm_run() generates the n-machine variant of the same
design (one server, shared request connector) and reports on cash
conservation across the concurrent sessions.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from random import Random
from typing import Optional

from ..architecture import (
    ArchitectureSpec,
    ArchitectureError,
    Binding,
    ComponentSpec,
    ConnectorSpec,
    TraceabilityMap,
    instantiate,
    parse_architecture,
    validate,
)
from ..runtime import System, SystemTrace
from .bank import Bank, parse_accounts, server_behavior
from .machine import (
    AtmController,
    CashCollector,
    EventLog,
    card_reader_behavior,
    dispenser_behavior,
    printer_behavior,
    touchscreen_behavior,
)
from .scenario import ScenarioStep, parse_scenario, split_scenario

SERVER_NAME = "server"
SERVER_CONNECTOR = "to_server"

#: jitter amplitude applied to device scripts when a seed is given; small
#: enough to never matter for any asserted property
_JITTER_MS = 1.0


@dataclass(frozen=True)
class AtmNames:
    """Design-element names for one machine and its private connectors."""

    atm: str
    reader: str
    screen: str
    printer: str
    dispenser: str
    log: str
    transaction: str
    card_to_atm: str
    atm_to_card: str
    screen_io: str
    to_printer: str
    to_dispenser: str
    to_log: str

    @classmethod
    def standard(cls, index: Optional[int] = None) -> "AtmNames":
        p = "" if index is None else f"atm{index}_"
        atm = "atm" if index is None else f"atm{index}"
        return cls(
            atm=atm,
            reader=f"{p}card_reader",
            screen=f"{p}touchscreen",
            printer=f"{p}printer",
            dispenser=f"{p}dispenser",
            log=f"{p}log",
            transaction=f"{p}transaction",
            card_to_atm=f"{p}card_to_atm",
            atm_to_card=f"{p}atm_to_card",
            screen_io=f"{p}screen_io",
            to_printer=f"{p}to_printer",
            to_dispenser=f"{p}to_dispenser",
            to_log=f"{p}to_log",
        )


def build_atm_architecture(n_atms: int = 1, *, log_period_ms: int = 25,
                           server_capacity: int = 16) -> ArchitectureSpec:
    """The case-study design: one server, n machines with their devices."""
    if n_atms < 1:
        raise ValueError("n_atms must be >= 1")
    spec = ArchitectureSpec()
    spec.connectors.append(ConnectorSpec(name=SERVER_CONNECTOR,
                                         kind="queue_and_callback",
                                         capacity=server_capacity,
                                         message="server_request"))
    spec.components.append(ComponentSpec(
        name=SERVER_NAME, role="control", concurrency="demand_driven",
        bindings=[Binding("requests", SERVER_CONNECTOR, "receiver")],
    ))
    for i in range(n_atms):
        names = AtmNames.standard(None if n_atms == 1 else i + 1)
        spec.connectors.extend([
            ConnectorSpec(names.card_to_atm, "message_buffer", message="card_event"),
            ConnectorSpec(names.atm_to_card, "message_buffer", message="card_event"),
            ConnectorSpec(names.screen_io, "buffer_and_reply", message="prompt"),
            ConnectorSpec(names.to_printer, "message_buffer", message="print_job"),
            ConnectorSpec(names.to_dispenser, "message_buffer", message="cash_job"),
            ConnectorSpec(names.to_log, "message_queue", capacity=64,
                          message="log_record"),
        ])
        spec.components.extend([
            ComponentSpec(
                name=names.atm, role="coordinator", concurrency="demand_driven",
                bindings=[
                    Binding("card_in", names.card_to_atm, "receiver"),
                    Binding("card_out", names.atm_to_card, "sender"),
                    Binding("screen", names.screen_io, "sender"),
                    Binding("printer", names.to_printer, "sender"),
                    Binding("dispenser", names.to_dispenser, "sender"),
                    Binding("log", names.to_log, "sender"),
                    Binding("server", SERVER_CONNECTOR, "sender"),
                ],
            ),
            ComponentSpec(
                name=names.reader, role="io", concurrency="event_driven",
                bindings=[
                    Binding("to_atm", names.card_to_atm, "sender"),
                    Binding("from_atm", names.atm_to_card, "receiver"),
                ],
            ),
            ComponentSpec(
                name=names.screen, role="io", concurrency="demand_driven",
                bindings=[Binding("io", names.screen_io, "receiver")],
            ),
            ComponentSpec(
                name=names.printer, role="io", concurrency="demand_driven",
                bindings=[Binding("jobs", names.to_printer, "receiver")],
            ),
            ComponentSpec(
                name=names.dispenser, role="io", concurrency="demand_driven",
                bindings=[Binding("jobs", names.to_dispenser, "receiver")],
            ),
            ComponentSpec(
                name=names.log, role="io", concurrency="periodic",
                bindings=[Binding("records", names.to_log, "receiver")],
                params={"period_ms": str(log_period_ms)},
            ),
            ComponentSpec(
                name=names.transaction, role="entity", concurrency="passive",
                host=names.atm,
            ),
        ])
    return spec


@dataclass
class AtmCell:
    """Per-machine run state: script completion flag and collected output."""

    names: AtmNames
    done: threading.Event = field(default_factory=threading.Event)
    receipts: list = field(default_factory=list)
    collector: CashCollector = field(default_factory=CashCollector)
    log: Optional[EventLog] = None

    @property
    def dispensed(self) -> int:
        return self.collector.total

    @property
    def log_lines(self) -> list[str]:
        return [] if self.log is None else list(self.log.lines)


def _registry_for(bank: Bank, cells: list[AtmCell],
                  scenarios: list[list[ScenarioStep]], *,
                  log_dir: Optional[Path], seed: Optional[int]):
    registry = {SERVER_NAME: lambda _spec: server_behavior(bank)}
    rng = Random(seed) if seed is not None else None
    jitter = _JITTER_MS if seed is not None else 0.0
    for cell, steps in zip(cells, scenarios):
        names = cell.names
        scripts = split_scenario(steps)
        log_path = None if log_dir is None else Path(log_dir) / f"{names.log}.log"

        def make_log(_spec, cell=cell, log_path=log_path):
            cell.log = EventLog(path=log_path)
            return cell.log

        registry[names.atm] = (
            lambda _spec, names=names:
            AtmController(names.atm, transaction=names.transaction).behavior)
        registry[names.reader] = (
            lambda _spec, s=scripts.reader, cell=cell:
            card_reader_behavior(s, cell.done, rng, jitter))
        registry[names.screen] = (
            lambda _spec, s=scripts.screen: touchscreen_behavior(s))
        registry[names.printer] = (
            lambda _spec, cell=cell: printer_behavior(cell.receipts))
        registry[names.dispenser] = (
            lambda _spec, cell=cell: dispenser_behavior(cell.collector))
        registry[names.log] = make_log
        registry[names.transaction] = lambda _spec: None
    return registry


@dataclass
class RunResult:
    exit_code: int
    error: Optional[str] = None
    completed: bool = False
    trace: Optional[SystemTrace] = None
    tmap: Optional[TraceabilityMap] = None
    system: Optional[System] = None
    bank: Optional[Bank] = None
    cells: list[AtmCell] = field(default_factory=list)
    trace_path: Optional[Path] = None
    log_paths: list[Path] = field(default_factory=list)

    @property
    def dispensed_total(self) -> int:
        return sum(cell.dispensed for cell in self.cells)


def _execute(spec: ArchitectureSpec, bank: Bank,
             scenarios: list[list[ScenarioStep]], cells: list[AtmCell], *,
             timeout_ms: int, log_dir: Optional[Path], seed: Optional[int],
             trace_path: Optional[Path], grace: float) -> RunResult:
    if log_dir is not None:
        Path(log_dir).mkdir(parents=True, exist_ok=True)
    registry = _registry_for(bank, cells, scenarios, log_dir=log_dir, seed=seed)
    system, tmap = instantiate(spec, registry)
    system.start_all()

    deadline = time.monotonic() + timeout_ms / 1000.0
    completed = True
    for cell in cells:
        remaining = deadline - time.monotonic()
        if remaining <= 0 or not cell.done.wait(remaining):
            completed = False
            break
    trace = system.shutdown(grace)

    if trace_path is not None:
        trace.save(trace_path)
    log_paths = [Path(log_dir) / f"{c.names.log}.log"
                 for c in cells] if log_dir is not None else []
    return RunResult(
        exit_code=0 if completed else 1,
        error=None if completed else f"timeout after {timeout_ms} ms",
        completed=completed,
        trace=trace,
        tmap=tmap,
        system=system,
        bank=bank,
        cells=cells,
        trace_path=Path(trace_path) if trace_path is not None else None,
        log_paths=log_paths,
    )


def run_scenario(arch_path, accounts_path, scenario_path, *, atms: int = 1,
                 timeout_ms: int = 10_000, trace_path=None, log_dir=None,
                 seed: Optional[int] = None, grace: float = 2.0) -> RunResult:
    """Run one scripted scenario against the described architecture.

    With atms > 1 the architecture file must be the standard single-ATM
    design; it is expanded to the n-machine variant and the scenario is
    replayed by every machine. Returns a RunResult whose exit_code follows
    the CLI contract (0 ok, 1 parse/validation failure or timeout).
    """
    try:
        accounts_text = Path(accounts_path).read_text(encoding="utf-8")
        scenario_text = Path(scenario_path).read_text(encoding="utf-8")
        arch_text = Path(arch_path).read_text(encoding="utf-8")
        bank = parse_accounts(accounts_text)
        steps = parse_scenario(scenario_text)
        spec = parse_architecture(arch_text)
    except (OSError, ValueError, ArchitectureError) as exc:
        return RunResult(exit_code=1, error=str(exc))

    if atms <= 1:
        errors = [f for f in validate(spec) if f.severity == "error"]
        if errors:
            return RunResult(exit_code=1,
                             error="; ".join(str(f) for f in errors))
        names = AtmNames.standard(None)
        declared = {c.name for c in spec.components}
        expected = {names.atm, names.reader, names.screen, names.printer,
                    names.dispenser, names.log, names.transaction, SERVER_NAME}
        missing = expected - declared
        if missing:
            return RunResult(
                exit_code=1,
                error=f"architecture lacks standard components: {sorted(missing)}")
        cells = [AtmCell(names=names)]
    else:
        spec = build_atm_architecture(atms)
        cells = [AtmCell(names=AtmNames.standard(i + 1)) for i in range(atms)]

    scenarios = [list(steps) for _ in cells]
    return _execute(spec, bank, scenarios, cells, timeout_ms=timeout_ms,
                    log_dir=log_dir, seed=seed, trace_path=trace_path, grace=grace)


@dataclass
class ConservationReport:
    """Money accounting across a concurrent multi-machine run."""

    initial_total: int
    final_total: int
    dispensed: int
    completed: bool
    min_ledger_balance: int
    result: RunResult

    @property
    def holds(self) -> bool:
        return self.completed and self.final_total + self.dispensed == self.initial_total


def multi_atm_run(n_atms: int, scenarios: list[list[ScenarioStep]],
                  accounts_text: str, *, timeout_ms: int = 30_000,
                  seed: Optional[int] = None, log_dir=None, trace_path=None,
                  grace: float = 2.0) -> ConservationReport:
    """Run n machines concurrently against one server and audit the cash.

    Each machine plays its own scenario; conservation means the initial
    total balance equals the final total plus everything dispensed.
    """
    if len(scenarios) != n_atms:
        raise ValueError(f"need one scenario per ATM: {n_atms} != {len(scenarios)}")
    bank = parse_accounts(accounts_text)
    initial_total = bank.total_balance()
    spec = build_atm_architecture(n_atms)
    cells = [AtmCell(names=AtmNames.standard(None if n_atms == 1 else i + 1))
             for i in range(n_atms)]
    result = _execute(spec, bank, [list(s) for s in scenarios], cells,
                      timeout_ms=timeout_ms, log_dir=log_dir, seed=seed,
                      trace_path=trace_path, grace=grace)
    min_balance = min((balance for _op, _acct, balance in bank.ledger),
                      default=initial_total)
    return ConservationReport(
        initial_total=initial_total,
        final_total=bank.total_balance(),
        dispensed=result.dispensed_total,
        completed=result.completed,
        min_ledger_balance=min_balance,
        result=result,
    )
