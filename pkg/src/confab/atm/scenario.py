"""Customer scenario scripts and their distribution to the ATM's devices.

A scenario file is line-based, ``<actor> <action> [args]``; steps are
consumed strictly in order. The splitter routes each step to the device
that acts it out: card insert/return beats go to the card reader, pin and
menu answers go to the touchscreen, take_cash beats to the dispenser.
"""

from __future__ import annotations

from dataclasses import dataclass, field

ACTORS = frozenset({"customer", "device"})
ACTIONS = frozenset(
    {
        "insert_card",
        "enter_pin",
        "choose_withdraw",
        "choose_balance",
        "choose_transfer",
        "take_cash",
        "take_card",
    }
)

_ARG_COUNTS = {
    "insert_card": 1,
    "enter_pin": 1,
    "choose_withdraw": 1,
    "choose_balance": 0,
    "choose_transfer": 3,  # from, to, amount
    "take_cash": 0,
    "take_card": 0,
}


@dataclass(frozen=True)
class ScenarioStep:
    actor: str
    action: str
    args: tuple[str, ...] = ()


def parse_scenario(text: str) -> list[ScenarioStep]:
    steps = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 2:
            raise ValueError(f"line {lineno}: expected '<actor> <action> [args]'")
        actor, action, args = parts[0], parts[1], tuple(parts[2:])
        if actor not in ACTORS:
            raise ValueError(f"line {lineno}: unknown actor {actor!r}")
        if action not in ACTIONS:
            raise ValueError(f"line {lineno}: unknown action {action!r}")
        if len(args) != _ARG_COUNTS[action]:
            raise ValueError(f"line {lineno}: {action} takes "
                             f"{_ARG_COUNTS[action]} arg(s), got {len(args)}")
        steps.append(ScenarioStep(actor=actor, action=action, args=args))
    return steps


@dataclass
class DeviceScripts:
    """One scenario fanned out to the devices that will play it."""

    reader: list[ScenarioStep] = field(default_factory=list)
    screen: list[ScenarioStep] = field(default_factory=list)
    dispenser: list[ScenarioStep] = field(default_factory=list)


_SCREEN_ACTIONS = frozenset(
    {"enter_pin", "choose_withdraw", "choose_balance", "choose_transfer"}
)


def split_scenario(steps: list[ScenarioStep]) -> DeviceScripts:
    scripts = DeviceScripts()
    for step in steps:
        if step.action in ("insert_card", "take_card"):
            scripts.reader.append(step)
        elif step.action in _SCREEN_ACTIONS:
            scripts.screen.append(step)
        elif step.action == "take_cash":
            scripts.dispenser.append(step)
    return scripts
