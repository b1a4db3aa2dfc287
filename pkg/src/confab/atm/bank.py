"""Central bank server: card records, accounts, and the request handler.

The store is confined to the server's context; every mutation goes through
handle() and is appended to an in-order ledger so tests can check the
no-overdraft guard after the fact. Money is integer cents throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

from ..runtime import ComponentContext, Stopped

__all__ = [
    "Account",
    "CardRecord",
    "Bank",
    "parse_accounts",
    "server_behavior",
    "ValidatePin",
    "Withdraw",
    "Transfer",
    "BalanceQuery",
    "PinOk",
    "PinBad",
    "Approved",
    "InsufficientFunds",
    "BalanceAmount",
]


@dataclass
class Account:
    account_id: str
    balance: int  # cents, never negative


@dataclass
class CardRecord:
    card_number: str
    pin: str
    account_ids: list[str] = field(default_factory=list)


# -- requests ---------------------------------------------------------------

@dataclass(frozen=True)
class ValidatePin:
    card: str
    pin: str


@dataclass(frozen=True)
class Withdraw:
    account: str
    amount: int


@dataclass(frozen=True)
class Transfer:
    source: str
    target: str
    amount: int


@dataclass(frozen=True)
class BalanceQuery:
    account: str


# -- responses ---------------------------------------------------------------

@dataclass(frozen=True)
class PinOk:
    account_ids: tuple[str, ...]


@dataclass(frozen=True)
class PinBad:
    pass


@dataclass(frozen=True)
class Approved:
    new_balance: int


@dataclass(frozen=True)
class InsufficientFunds:
    pass


@dataclass(frozen=True)
class BalanceAmount:
    amount: int


Request = Union[ValidatePin, Withdraw, Transfer, BalanceQuery]


class Bank:
    def __init__(self, cards: dict[str, CardRecord], accounts: dict[str, Account]):
        self.cards = cards
        self.accounts = accounts
        # (operation, account_id, new_balance) in mutation order
        self.ledger: list[tuple[str, str, int]] = []

    def total_balance(self) -> int:
        return sum(a.balance for a in self.accounts.values())

    def handle(self, request: Request):
        if isinstance(request, ValidatePin):
            record = self.cards.get(request.card)
            if record is None or record.pin != request.pin:
                return PinBad()
            return PinOk(tuple(record.account_ids))

        if isinstance(request, Withdraw):
            account = self.accounts[request.account]
            if request.amount <= 0 or account.balance < request.amount:
                return InsufficientFunds()
            account.balance -= request.amount
            assert account.balance >= 0
            self.ledger.append(("withdraw", account.account_id, account.balance))
            return Approved(account.balance)

        if isinstance(request, Transfer):
            source = self.accounts[request.source]
            target = self.accounts[request.target]
            if request.amount <= 0 or source.balance < request.amount:
                return InsufficientFunds()
            source.balance -= request.amount
            target.balance += request.amount
            assert source.balance >= 0
            self.ledger.append(("transfer_out", source.account_id, source.balance))
            self.ledger.append(("transfer_in", target.account_id, target.balance))
            return Approved(source.balance)

        if isinstance(request, BalanceQuery):
            return BalanceAmount(self.accounts[request.account].balance)

        raise ValueError(f"unknown request {request!r}")


def parse_accounts(text: str) -> Bank:
    """Parse account lines: ``card <n> pin <p> account <id> balance <cents>``.

    The account/balance pair may repeat for cards with several accounts.
    """
    cards: dict[str, CardRecord] = {}
    accounts: dict[str, Account] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 8 or parts[0] != "card" or parts[2] != "pin":
            raise ValueError(f"line {lineno}: expected 'card <n> pin <p> "
                             f"account <id> balance <cents>'")
        card_number, pin = parts[1], parts[3]
        if card_number in cards:
            raise ValueError(f"line {lineno}: duplicate card {card_number!r}")
        record = CardRecord(card_number=card_number, pin=pin)
        rest = parts[4:]
        if len(rest) % 4 != 0:
            raise ValueError(f"line {lineno}: ragged account/balance pairs")
        for i in range(0, len(rest), 4):
            if rest[i] != "account" or rest[i + 2] != "balance":
                raise ValueError(f"line {lineno}: expected 'account <id> balance <cents>'")
            account_id = rest[i + 1]
            balance = int(rest[i + 3])
            if balance < 0:
                raise ValueError(f"line {lineno}: negative balance for {account_id}")
            if account_id in accounts:
                raise ValueError(f"line {lineno}: duplicate account {account_id!r}")
            accounts[account_id] = Account(account_id=account_id, balance=balance)
            record.account_ids.append(account_id)
        cards[card_number] = record
    return Bank(cards, accounts)


def server_behavior(bank: Bank):
    """Main loop of the bank server: serve one callback request at a time."""

    def run(ctx: ComponentContext) -> None:
        requests = ctx.port("requests")
        while True:
            try:
                requests.serve(bank.handle)
            except Stopped:
                break
            ctx.emit("step", "served")

    return run
