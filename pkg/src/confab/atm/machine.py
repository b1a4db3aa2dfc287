"""The ATM itself: a state-dependent controller and its simple devices.

The controller's loop runs one customer session per card insertion:
receive the card-inserted message, create the transaction entity on its
own context, collect the pin over the touchscreen's reply connector,
validate it with the server over the shared queue-and-callback connector,
log the result, act on the customer's menu choice, and finally send the
return-card message back to the reader. Devices are small components:
the card reader plays the scripted inserts, the touchscreen answers
prompts from the script, the printer and dispenser accept buffer sends,
and the log drains its queue periodically.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from random import Random
from typing import Optional

from ..components import PassiveEntity, PeriodicTask, demand_loop, entity_access
from ..connectors import HandlerFault
from ..runtime import ComponentContext, Stopped
from .bank import (
    Approved,
    BalanceAmount,
    BalanceQuery,
    InsufficientFunds,
    PinBad,
    PinOk,
    Transfer,
    ValidatePin,
    Withdraw,
)
from .scenario import ScenarioStep

ATM_STATES = (
    "idle",
    "waiting_pin",
    "validating",
    "menu",
    "processing",
    "dispensing",
    "printing",
    "ejecting",
)


@dataclass
class TransactionData:
    """Intermediate results of one customer session, confined to the ATM."""

    card: str
    pin: str = ""
    account_ids: tuple[str, ...] = ()
    phase: str = "created"


class AtmController:
    """State-dependent coordinator for one machine.

    Ports: card_in/card_out (buffers to the reader), screen (reply
    connector), printer and dispenser (buffers), log (queue), server
    (callback sender). The passive transaction entity is looked up in the
    controller's attached entities by name.
    """

    def __init__(self, name: str, transaction: str = "transaction"):
        self.name = name
        self.transaction_name = transaction
        self.state = "idle"
        self.sessions = 0

    def _to(self, ctx: ComponentContext, new_state: str) -> None:
        assert new_state in ATM_STATES
        ctx.emit("state_change", f"{self.state}->{new_state}")
        self.state = new_state

    def _log(self, ctx: ComponentContext, event: str, detail: str) -> None:
        ctx.port("log").send((self.name, event, detail))

    def _eject(self, ctx: ComponentContext, tx: PassiveEntity, card: str) -> None:
        self._to(ctx, "ejecting")
        self._log(ctx, "card_returned", f"card={card}")
        ctx.port("card_out").send(("return_card", card))
        entity_access(tx, lambda _state: (None, None))  # transaction ends here
        self._to(ctx, "idle")

    def behavior(self, ctx: ComponentContext) -> None:
        screen = ctx.port("screen")
        server = ctx.port("server")
        tx = ctx.attached[self.transaction_name]
        while True:
            try:
                self._session(ctx, screen, server, tx)
            except Stopped:
                break

    def _session(self, ctx: ComponentContext, screen, server, tx: PassiveEntity) -> None:
        _kind, card = ctx.port("card_in").receive()
        self.sessions += 1
        entity_access(tx, lambda _state: (TransactionData(card=card), None))
        self._to(ctx, "waiting_pin")

        pin = screen.request(("get_pin",))
        if isinstance(pin, HandlerFault):
            self._log(ctx, "screen_fault", pin.error)
            self._eject(ctx, tx, card)
            return
        self._to(ctx, "validating")

        # asynchronous validation: send, keep working, then accept
        server.send(ValidatePin(card, pin))
        def note_pin(state):
            state.pin = pin
            state.phase = "validating"
            return (state, None)
        entity_access(tx, note_pin)
        verdict = server.accept()

        if not isinstance(verdict, PinOk):
            self._log(ctx, "auth", f"card={card} result=pin_bad")
            self._eject(ctx, tx, card)
            return
        self._log(ctx, "auth", f"card={card} result=pin_ok")
        def note_accounts(state):
            state.account_ids = verdict.account_ids
            state.phase = "menu"
            return (state, None)
        entity_access(tx, note_accounts)

        self._to(ctx, "menu")
        choice = screen.request(("get_choice",))
        if isinstance(choice, HandlerFault):
            self._log(ctx, "screen_fault", choice.error)
            self._eject(ctx, tx, card)
            return

        self._to(ctx, "processing")
        action = choice[0]
        if action == "withdraw":
            self._withdraw(ctx, server, tx, card, int(choice[1]))
        elif action == "balance":
            self._balance(ctx, server, card, verdict.account_ids[0])
        elif action == "transfer":
            self._transfer(ctx, server, card, choice[1], choice[2], int(choice[3]))
        else:
            self._log(ctx, "choice_unknown", f"card={card} choice={action}")
        self._eject(ctx, tx, card)

    def _withdraw(self, ctx, server, tx: PassiveEntity, card: str, amount: int) -> None:
        account = entity_access(tx, lambda s: (s, s.account_ids[0]))
        server.send(Withdraw(account, amount))
        outcome = server.accept()
        if isinstance(outcome, Approved):
            self._log(ctx, "withdraw",
                      f"card={card} amount={amount} balance={outcome.new_balance}")
            self._to(ctx, "dispensing")
            ctx.port("dispenser").send(("dispense", amount))
            self._to(ctx, "printing")
            ctx.port("printer").send(
                ("receipt", f"withdrew {amount}, balance {outcome.new_balance}"))
        else:
            self._log(ctx, "withdraw_declined", f"card={card} amount={amount}")

    def _balance(self, ctx, server, card: str, account: str) -> None:
        server.send(BalanceQuery(account))
        outcome = server.accept()
        if isinstance(outcome, BalanceAmount):
            self._log(ctx, "balance", f"card={card} amount={outcome.amount}")
            self._to(ctx, "printing")
            ctx.port("printer").send(("receipt", f"balance {outcome.amount}"))
        else:
            self._log(ctx, "balance_failed", f"card={card}")

    def _transfer(self, ctx, server, card: str, source: str, target: str,
                  amount: int) -> None:
        server.send(Transfer(source, target, amount))
        outcome = server.accept()
        if isinstance(outcome, Approved):
            self._log(ctx, "transfer",
                      f"card={card} from={source} to={target} amount={amount}")
            self._to(ctx, "printing")
            ctx.port("printer").send(
                ("receipt", f"transferred {amount} from {source} to {target}"))
        else:
            self._log(ctx, "transfer_declined", f"card={card} amount={amount}")


# ---------------------------------------------------------------------------
# Devices


def card_reader_behavior(steps: list[ScenarioStep], done: threading.Event,
                         rng: Optional[Random] = None, jitter_ms: float = 0.0):
    """Event-driven reader: plays scripted inserts, waits for each return.

    The return-card message is consumed right after the insert, so every
    inserted card is taken back exactly once; take_card steps are pacing
    beats. Sets *done* once the script is exhausted.
    """

    def run(ctx: ComponentContext) -> None:
        to_atm = ctx.port("to_atm")
        from_atm = ctx.port("from_atm")
        for step in steps:
            if rng is not None and jitter_ms > 0:
                if ctx.stop.wait(rng.uniform(0.0, jitter_ms) / 1000.0):
                    raise Stopped()
            if step.action == "insert_card":
                card = step.args[0]
                to_atm.send(("card_inserted", card))
                ctx.emit("step", f"insert:{card}")
                from_atm.receive()
                ctx.emit("step", f"returned:{card}")
            elif step.action == "take_card":
                ctx.emit("step", "take_card")
        done.set()

    return run


def touchscreen_behavior(answers: list[ScenarioStep]):
    """Demand-driven screen: answers prompts from the customer's script.

    An exhausted script stalls the handler until shutdown, which is how a
    scenario that forgets an input surfaces as a timeout rather than a
    wrong answer. A mismatched script raises, so the controller receives
    a fault reply and ejects the card.
    """

    script = list(answers)

    def run(ctx: ComponentContext) -> None:
        io = ctx.port("io")

        def handler(prompt):
            if not script:
                ctx.stop.wait(3600.0)
                raise Stopped()
            step = script.pop(0)
            want = prompt[0]
            if want == "get_pin":
                if step.action != "enter_pin":
                    raise ValueError(f"expected enter_pin, script has {step.action}")
                return step.args[0]
            if want == "get_choice":
                if step.action == "choose_withdraw":
                    return ("withdraw", step.args[0])
                if step.action == "choose_balance":
                    return ("balance",)
                if step.action == "choose_transfer":
                    return ("transfer", *step.args)
                raise ValueError(f"expected a choice, script has {step.action}")
            raise ValueError(f"unknown prompt {want!r}")

        while True:
            try:
                io.serve(handler)
            except Stopped:
                break
            ctx.emit("step", "answered")

    return run


def printer_behavior(receipts: list):
    """Prints whatever the controller hands it; keeps the paper trail."""

    def run(ctx: ComponentContext) -> None:
        def on_job(ctx_, msg):
            receipts.append(msg[1])
        demand_loop(ctx, on_job, port="jobs")

    return run


class CashCollector:
    """Post-run accounting of what one dispenser paid out."""

    def __init__(self) -> None:
        self.amounts: list[int] = []

    @property
    def total(self) -> int:
        return sum(self.amounts)


def dispenser_behavior(collector: CashCollector):
    def run(ctx: ComponentContext) -> None:
        def on_dispense(ctx_, msg):
            amount = int(msg[1])
            collector.amounts.append(amount)
            ctx_.emit("custom", f"dispense:{amount}")
        demand_loop(ctx, on_dispense, port="jobs")

    return run


class EventLog(PeriodicTask):
    """Periodic log: each step drains the queue to the append-only file."""

    def __init__(self, path=None, period_ms: float = 25.0):
        super().__init__(period_ms)
        self.path = path
        self.lines: list[str] = []
        self._n = 0

    def step(self, ctx: ComponentContext) -> None:
        self._drain(ctx)

    def finish(self, ctx: ComponentContext) -> None:
        # final drain at shutdown: nothing queued may be lost
        self._drain(ctx)

    def _drain(self, ctx: ComponentContext) -> None:
        inbox = ctx.port("records")
        new_lines = []
        while True:
            record = inbox.try_receive()
            if record is None:
                break
            atm_id, event, detail = record
            self._n += 1
            new_lines.append(f"{self._n}\t{atm_id}\t{event}\t{detail}")
        if not new_lines:
            return
        self.lines.extend(new_lines)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                for line in new_lines:
                    fh.write(line + "\n")
