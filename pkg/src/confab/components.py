"""Reusable behaviors for the component taxonomy.

Four activation styles: event-driven I/O components woken by (simulated)
device events, demand-driven components woken by arriving messages,
periodic components driven by a pacemaker, and passive entities with no
thread of control that live inside a host component's context.

The periodic component is the interesting one. The task itself never
sleeps; a companion pacemaker on a separate context does the waiting and
pokes the task through a one-slot notify channel. Between steps the
task's context sits on its wait condition, so cross-context status
queries (a small reply connector served from the same wait) are answered
immediately instead of after the remaining sleep.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from types import SimpleNamespace
from typing import Any, Callable, Optional

from .connectors import (
    BufferConduit,
    BufferReceiver,
    BufferSender,
    ReplyConduit,
    ReplyReceiver,
    ReplySender,
    _Monitor,
)
from .runtime import (
    ComponentContext,
    ComponentHandle,
    Stopped,
    System,
    WrongContext,
    current_context,
    digest_of,
)

__all__ = [
    "ScriptedEvent",
    "parse_event_script",
    "demand_loop",
    "io_loop",
    "PassiveEntity",
    "entity_access",
    "PeriodicTask",
    "PeriodicProbe",
    "spawn_periodic",
    "make_periodic",
]


# ---------------------------------------------------------------------------
# Scripted event sources

@dataclass(slots=True)
class ScriptedEvent:
    delay_ms: float
    name: str
    args: tuple[str, ...] = ()


def parse_event_script(text: str) -> list[ScriptedEvent]:
    """Parse a line-based device script: ``<delay_ms> <event_name> [<arg>...]``."""
    events = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 2:
            raise ValueError(f"line {lineno}: expected '<delay_ms> <event_name> [args]'")
        try:
            delay = float(parts[0])
        except ValueError:
            raise ValueError(f"line {lineno}: bad delay {parts[0]!r}") from None
        events.append(ScriptedEvent(delay_ms=delay, name=parts[1], args=tuple(parts[2:])))
    return events


# ---------------------------------------------------------------------------
# Demand-driven and event-driven loops

def demand_loop(ctx: ComponentContext, handler: Callable[[ComponentContext, Any], None],
                port: str = "inbox") -> None:
    """Repeat {receive -> handler} until stopped; one step event per message."""
    inbox = ctx.port(port)
    while True:
        try:
            msg = inbox.receive()
        except Stopped:
            break
        handler(ctx, msg)
        ctx.emit("step", digest_of(msg))


def io_loop(ctx: ComponentContext, events: list[ScriptedEvent],
            port: str = "out",
            encode: Optional[Callable[[ScriptedEvent], Any]] = None) -> None:
    """Send one message per scripted device event; ends when the script does."""
    out = ctx.port(port)
    for event in events:
        if event.delay_ms > 0 and ctx.stop.wait(event.delay_ms / 1000.0):
            raise Stopped()
        msg = encode(event) if encode is not None else (event.name, *event.args)
        out.send(msg)
        ctx.emit("step", event.name)


# ---------------------------------------------------------------------------
# Passive entities

class PassiveEntity:
    """Data with no thread of its own, confined to the host's context.

    Access is mutually exclusive by construction: only the host context
    may call access(), so no two actions can ever overlap. The depth
    counter exists to let tests assert exactly that.
    """

    def __init__(self, host: ComponentHandle, state: Any = None):
        self.host = host
        self.state = state
        self._depth = 0
        self.max_depth = 0

    def access(self, action: Callable[[Any], tuple[Any, Any]]) -> Any:
        ctx = current_context()
        if ctx is None or ctx.context_id != self.host.context_id:
            raise WrongContext(
                f"entity of {self.host.component_id} accessed from "
                f"{'outside any context' if ctx is None else ctx.context_id}"
            )
        self._depth += 1
        self.max_depth = max(self.max_depth, self._depth)
        try:
            new_state, result = action(self.state)
            self.state = new_state
            return result
        finally:
            self._depth -= 1


def entity_access(entity: PassiveEntity, action: Callable[[Any], tuple[Any, Any]]) -> Any:
    return entity.access(action)


# ---------------------------------------------------------------------------
# Periodic tasks and their pacemakers

class PeriodicTask:
    """One unit of recurring work. Subclasses implement step(); setting
    is_done inside a step ends the schedule. finish() runs once at
    shutdown (e.g. a final drain)."""

    def __init__(self, period_ms: float = 100.0):
        self.period_ms = period_ms
        self.step_count = 0
        self.is_done = False

    def step(self, ctx: ComponentContext) -> None:
        raise NotImplementedError

    def finish(self, ctx: ComponentContext) -> None:
        pass


class PeriodicProbe:
    """Cross-context status queries against a running periodic task."""

    def __init__(self, sender: ReplySender):
        self._sender = sender
        self._lock = threading.Lock()

    def status(self) -> tuple[bool, int]:
        with self._lock:
            return self._sender.request("status")

    def is_done(self) -> bool:
        return self.status()[0]

    def step_count(self) -> int:
        return self.status()[1]


def spawn_periodic(system: System, spec: Any, task: PeriodicTask):
    """Create a periodic component: task runner plus pacemaker companion.

    The two occupy distinct contexts. Three internal conduits wire them:
    a one-slot tick channel (pacemaker -> task), a one-slot ack channel
    (task -> pacemaker, carrying is_done), and a reply channel for status
    queries. Tick and query share one monitor so the runner waits on both
    with a single wait condition.

    Returns (handle, probe); the probe answers is_done/step_count from
    any other context without waiting out the period.
    """
    name = spec.name
    period_ms = float(spec.params.get("period_ms", task.period_ms))
    task.period_ms = period_ms

    mon = _Monitor(system)
    tick = BufferConduit(f"{name}/tick", mon)
    query = ReplyConduit(f"{name}/query", mon)
    ack = BufferConduit(f"{name}/ack", _Monitor(system))
    for conduit_id in (f"{name}/tick", f"{name}/query", f"{name}/ack"):
        system.register_object(conduit_id, name, "conduit")

    tick_sender = BufferSender(f"{name}/tick:s0", tick)
    tick_receiver = BufferReceiver(f"{name}/tick:r0", tick)
    ack_sender = BufferSender(f"{name}/ack:s0", ack)
    ack_receiver = BufferReceiver(f"{name}/ack:r0", ack)
    query_receiver = ReplyReceiver(f"{name}/query:r0", query)
    probe_sender = ReplySender(f"{name}/query:s0", query)
    for endpoint_id in (f"{name}/tick:s0", f"{name}/tick:r0", f"{name}/ack:s0",
                        f"{name}/ack:r0", f"{name}/query:r0", f"{name}/query:s0"):
        system.register_object(endpoint_id, name, "endpoint")

    def status_handler(_msg: Any) -> tuple[bool, int]:
        return (bool(task.is_done), task.step_count)

    def runner(ctx: ComponentContext) -> None:
        def has_work() -> bool:
            return query.has_request() or not tick.is_empty()

        try:
            while True:
                with mon.cond:
                    mon.await_pred(has_work)
                if query.has_request():
                    query_receiver.serve(status_handler)
                    continue
                tick_receiver.receive()
                if not task.is_done:
                    task.step(ctx)
                    task.step_count += 1
                    ctx.emit("step", f"step:{task.step_count}")
                ack_sender.send(bool(task.is_done))
        except Stopped:
            task.finish(ctx)
            raise

    def pace() -> None:
        period_s = period_ms / 1000.0
        while True:
            if system.stop.wait(period_s):
                break
            tick_sender.send("tick")
            if ack_receiver.receive():
                break

    handle = system.spawn_component(spec, behavior=runner)
    system.spawn_auxiliary(handle, f"{name}.pacer", pace, design_name=name)
    probe = PeriodicProbe(probe_sender)
    handle.periodic_probe = probe  # type: ignore[attr-defined]
    return handle, probe


def make_periodic(system: System, name: str, task: PeriodicTask, *,
                  role: str = "algorithm", params: Optional[dict] = None):
    """spawn_periodic without an architecture description."""
    spec = SimpleNamespace(
        name=name, role=role, concurrency="periodic", host=None,
        bindings=[], params=dict(params or {}),
    )
    return spawn_periodic(system, spec, task)
