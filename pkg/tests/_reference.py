"""Sequential reference model for scenario runs.

Replays a customer scenario against plain dictionaries, with no threads,
no connectors, and no framework imports, to predict what a correct run
must produce: final balances, total cash dispensed, the receipts printed,
and the kinds of events logged. The concurrent implementation is checked
against these predictions.
"""

from dataclasses import dataclass, field


@dataclass
class RefOutcome:
    balances: dict
    dispensed: int = 0
    receipts: list = field(default_factory=list)
    log_kinds: list = field(default_factory=list)


def reference_run(cards, balances, steps):
    """cards: {card: (pin, [account_ids])}; balances: {account: cents};
    steps: parsed ScenarioStep sequence for one machine."""
    out = RefOutcome(balances=dict(balances))
    queue = list(steps)

    def next_screen_action():
        while queue:
            step = queue.pop(0)
            if step.action in ("enter_pin", "choose_withdraw", "choose_balance",
                               "choose_transfer"):
                return step
        return None

    while queue:
        step = queue.pop(0)
        if step.action != "insert_card":
            continue
        card = step.args[0]
        pin_step = next_screen_action()
        if pin_step is None or pin_step.action != "enter_pin":
            break  # the real system would stall waiting for input
        known = cards.get(card)
        if known is None or known[0] != pin_step.args[0]:
            out.log_kinds.append("auth")
            out.log_kinds.append("card_returned")
            continue
        out.log_kinds.append("auth")
        accounts = known[1]

        choice = next_screen_action()
        if choice is None:
            break
        if choice.action == "choose_withdraw":
            amount = int(choice.args[0])
            account = accounts[0]
            if 0 < amount <= out.balances[account]:
                out.balances[account] -= amount
                out.dispensed += amount
                out.log_kinds.append("withdraw")
                out.receipts.append(
                    f"withdrew {amount}, balance {out.balances[account]}")
            else:
                out.log_kinds.append("withdraw_declined")
        elif choice.action == "choose_balance":
            account = accounts[0]
            out.log_kinds.append("balance")
            out.receipts.append(f"balance {out.balances[account]}")
        elif choice.action == "choose_transfer":
            source, target, amount = choice.args[0], choice.args[1], int(choice.args[2])
            if 0 < amount <= out.balances[source]:
                out.balances[source] -= amount
                out.balances[target] += amount
                out.log_kinds.append("transfer")
                out.receipts.append(
                    f"transferred {amount} from {source} to {target}")
            else:
                out.log_kinds.append("transfer_declined")
        out.log_kinds.append("card_returned")
    return out
