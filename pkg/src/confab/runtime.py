"""Execution contexts, component lifecycle, and the global event trace.

Every active component runs on its own execution context (a real OS
thread); component state is confined to that context and is never touched
from another one. Conduits (see ``confab.connectors``) are the only
objects shared between contexts. A single serialized trace sink gives
every event a globally unique, strictly increasing sequence number, which
is what the test suite's ordering assertions lean on.
"""

from __future__ import annotations

import hashlib
import threading
import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Callable, Iterable, Optional

if TYPE_CHECKING:
    from .architecture import ComponentSpec

ROLES = frozenset({"io", "control", "algorithm", "entity", "coordinator"})
CONCURRENCY = frozenset({"event_driven", "demand_driven", "periodic", "passive"})
EVENT_KINDS = frozenset(
    {
        "send_begin",
        "send_end",
        "receive_begin",
        "receive_end",
        "reply",
        "step",
        "state_change",
        "custom",
    }
)

#: kinds that must be emitted from the component's own context
_CONFINED_KINDS = frozenset({"step", "state_change"})


class Stopped(Exception):
    """Raised at a wait point once shutdown has been signalled."""


class SinkClosed(RuntimeError):
    """Raised by emit() after the trace sink has been closed."""


class UnknownConduit(KeyError):
    """A binding referenced a connector that does not exist."""


class HostRequired(ValueError):
    """A passive component was spawned without a host component."""


class AlreadyStarted(RuntimeError):
    """start_all() was given a handle whose loop is already running."""


class WrongContext(RuntimeError):
    """An operation ran on a context other than the one that owns it."""


class StopToken:
    """Cooperative shutdown signal shared by a system's wait points.

    Conduits register their condition variable here so that trigger()
    wakes every blocked waiter promptly; the waiter then observes the
    token and raises :class:`Stopped`.
    """

    def __init__(self) -> None:
        self._event = threading.Event()
        self._conds: list[threading.Condition] = []
        self._lock = threading.Lock()

    def attach(self, cond: threading.Condition) -> None:
        with self._lock:
            if cond not in self._conds:
                self._conds.append(cond)

    def trigger(self) -> None:
        self._event.set()
        with self._lock:
            conds = list(self._conds)
        for cond in conds:
            with cond:
                cond.notify_all()

    def is_set(self) -> bool:
        return self._event.is_set()

    def wait(self, timeout: float) -> bool:
        """Sleep until *timeout* elapses or stop is signalled; True if stopped."""
        return self._event.wait(timeout)


@dataclass(slots=True)
class TraceEvent:
    seq: int
    source: str
    kind: str
    digest: str
    ctx_id: Optional[str] = None  # executing context; not exported

    def export_line(self) -> str:
        return f"{self.seq}\t{self.source}\t{self.kind}\t{self.digest}"


class SystemTrace:
    """Immutable, queryable record of every event a run emitted."""

    def __init__(self, events: Iterable[TraceEvent]):
        self.events: tuple[TraceEvent, ...] = tuple(events)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def by_source(self, source: str) -> list[TraceEvent]:
        return [e for e in self.events if e.source == source]

    def by_kind(self, *kinds: str) -> list[TraceEvent]:
        wanted = set(kinds)
        return [e for e in self.events if e.kind in wanted]

    def by_digest(self, digest: str) -> list[TraceEvent]:
        return [e for e in self.events if e.digest == digest]

    def first(self, *, source: str | None = None, kind: str | None = None,
              digest: str | None = None) -> Optional[TraceEvent]:
        for e in self.events:
            if source is not None and e.source != source:
                continue
            if kind is not None and e.kind != kind:
                continue
            if digest is not None and e.digest != digest:
                continue
            return e
        return None

    def export_lines(self) -> list[str]:
        return [e.export_line() for e in self.events]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.export_lines():
                fh.write(line + "\n")


class TraceSink:
    """Single serialized append point; gives events their total order."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._events: list[TraceEvent] = []
        self._next_seq = 1
        self._closed = False

    def emit(self, source: str, kind: str, digest: str) -> TraceEvent:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        ctx = current_context()
        with self._lock:
            if self._closed:
                raise SinkClosed("trace sink is closed")
            event = TraceEvent(
                seq=self._next_seq,
                source=source,
                kind=kind,
                digest=digest,
                ctx_id=ctx.context_id if ctx is not None else None,
            )
            self._next_seq += 1
            self._events.append(event)
        return event

    def snapshot(self) -> SystemTrace:
        with self._lock:
            return SystemTrace(self._events)

    def close(self) -> SystemTrace:
        with self._lock:
            self._closed = True
            return SystemTrace(self._events)

    @property
    def closed(self) -> bool:
        return self._closed


_current = threading.local()


def current_context() -> Optional["ExecutionContext"]:
    """The context executing on this thread, or None off-framework."""
    return getattr(_current, "ctx", None)


class ExecutionContext:
    """An autonomous thread of control that objects are confined to.

    ``auxiliary`` marks framework-internal companions (pacemakers) that
    belong to a component but are not components themselves.
    """

    def __init__(self, context_id: str, label: str, *, auxiliary: bool = False):
        self.context_id = context_id
        self.label = label
        self.auxiliary = auxiliary
        self.status = "created"
        self._thread: Optional[threading.Thread] = None

    def launch(self, fn: Callable[[], None]) -> None:
        if self.status != "created":
            raise AlreadyStarted(f"context {self.context_id} is {self.status}")

        def run() -> None:
            _current.ctx = self
            try:
                fn()
            finally:
                self.status = "stopped"

        self.status = "running"
        self._thread = threading.Thread(target=run, name=self.label, daemon=True)
        self._thread.start()

    def join(self, timeout: float) -> bool:
        """True if the context has finished within *timeout*."""
        if self._thread is None:
            return True
        self._thread.join(timeout)
        return not self._thread.is_alive()


@dataclass
class ComponentHandle:
    component_id: str
    context: ExecutionContext
    role: str
    concurrency: str

    @property
    def context_id(self) -> str:
        return self.context.context_id

    @property
    def passive(self) -> bool:
        return self.concurrency == "passive"


@dataclass
class ComponentContext:
    """What a behavior sees: its ports, parameters, and trace access."""

    system: "System"
    handle: ComponentHandle
    ports: dict[str, Any]
    params: dict[str, str] = field(default_factory=dict)
    attached: dict[str, Any] = field(default_factory=dict)

    def port(self, name: str) -> Any:
        try:
            return self.ports[name]
        except KeyError:
            raise KeyError(f"{self.handle.component_id} has no port {name!r}") from None

    @property
    def stop(self) -> StopToken:
        return self.system.stop

    def stopped(self) -> bool:
        return self.system.stop.is_set()

    def emit(self, kind: str, digest: str) -> None:
        self.system.emit_for(self.handle, kind, digest)


Behavior = Callable[[ComponentContext], None]


def digest_of(value: Any, limit: int = 24) -> str:
    """Short printable digest of an arbitrary payload."""
    text = repr(value)
    if len(text) <= limit:
        return text
    return text[: limit - 9] + "~" + hashlib.sha1(text.encode()).hexdigest()[:8]


class System:
    """Owns the trace sink, the stop token, and every runtime object.

    Assembly order is: add connectors, spawn components against them,
    start_all(), eventually shutdown(grace) which returns the completed
    trace. The object registry (id -> design name) is what the
    architecture layer turns into a traceability map.
    """

    def __init__(self) -> None:
        self.trace = TraceSink()
        self.stop = StopToken()
        self._lock = threading.Lock()
        self._next_ctx = 1
        self.contexts: list[ExecutionContext] = []
        self.handles: dict[str, ComponentHandle] = {}
        self.connectors: dict[str, Any] = {}
        self.objects: dict[str, tuple[str, str]] = {}  # id -> (design name, category)
        self._behaviors: dict[str, tuple[Behavior, ComponentContext]] = {}
        self._aux: dict[str, list[tuple[ExecutionContext, Callable[[], None]]]] = {}
        self._result: Optional[SystemTrace] = None

    # -- registry ----------------------------------------------------------

    def register_object(self, object_id: str, design_name: str, category: str) -> None:
        with self._lock:
            if object_id in self.objects:
                raise ValueError(f"duplicate runtime object id {object_id!r}")
            self.objects[object_id] = (design_name, category)

    def new_context(self, label: str, *, auxiliary: bool = False) -> ExecutionContext:
        with self._lock:
            ctx = ExecutionContext(f"ctx-{self._next_ctx}", label, auxiliary=auxiliary)
            self._next_ctx += 1
            self.contexts.append(ctx)
        return ctx

    def add_connector(self, name: str, connector: Any) -> Any:
        with self._lock:
            if name in self.connectors:
                raise ValueError(f"duplicate connector name {name!r}")
            self.connectors[name] = connector
        return connector

    # -- tracing -----------------------------------------------------------

    def emit(self, source: str, kind: str, digest: str) -> TraceEvent:
        return self.trace.emit(source, kind, digest)

    def emit_for(self, handle: ComponentHandle, kind: str, digest: str) -> TraceEvent:
        if kind in _CONFINED_KINDS:
            ctx = current_context()
            if ctx is None or ctx.context_id != handle.context_id:
                where = "outside any context" if ctx is None else ctx.context_id
                raise WrongContext(
                    f"{kind} for {handle.component_id} emitted from {where}, "
                    f"owned by {handle.context_id}"
                )
        return self.trace.emit(handle.component_id, kind, digest)

    # -- lifecycle ---------------------------------------------------------

    def spawn_component(
        self,
        spec: "ComponentSpec",
        behavior: Optional[Behavior] = None,
        *,
        host: Optional[ComponentHandle] = None,
    ) -> ComponentHandle:
        """Create a component from its spec, binding ports to connectors.

        Non-passive specs get a fresh dedicated context; passive specs
        attach to *host*'s context and never run a loop. The component is
        not executing until start_all().
        """
        if spec.concurrency == "passive":
            if host is None:
                raise HostRequired(f"passive component {spec.name!r} needs a host")
            context = host.context
        else:
            context = self.new_context(spec.name)

        ports: dict[str, Any] = {}
        for binding in spec.bindings:
            try:
                connector = self.connectors[binding.connector]
            except KeyError:
                raise UnknownConduit(
                    f"{spec.name}: binding {binding.port!r} references unknown "
                    f"connector {binding.connector!r}"
                ) from None
            if binding.end == "sender":
                ports[binding.port] = connector.sender()
            else:
                ports[binding.port] = connector.receiver()

        handle = ComponentHandle(
            component_id=spec.name,
            context=context,
            role=spec.role,
            concurrency=spec.concurrency,
        )
        self.register_object(spec.name, spec.name, "component")
        if not handle.passive:
            self.register_object(context.context_id, spec.name, "context")
        with self._lock:
            self.handles[spec.name] = handle

        comp_ctx = ComponentContext(
            system=self, handle=handle, ports=ports, params=dict(spec.params)
        )
        if behavior is not None and not handle.passive:
            self._behaviors[spec.name] = (behavior, comp_ctx)
        handle.component_context = comp_ctx  # type: ignore[attr-defined]
        return handle

    def attach_entity(self, host: ComponentHandle, name: str, entity: Any) -> None:
        host.component_context.attached[name] = entity  # type: ignore[attr-defined]

    def spawn_auxiliary(
        self,
        owner: ComponentHandle,
        label: str,
        fn: Callable[[], None],
        design_name: str,
    ) -> ExecutionContext:
        """Companion context (e.g. a pacemaker) attributed to *owner*'s design element."""
        ctx = self.new_context(label, auxiliary=True)
        self.register_object(ctx.context_id, design_name, "context")
        with self._lock:
            self._aux.setdefault(owner.component_id, []).append((ctx, fn))
        return ctx

    def start_all(self, handles: Optional[list[ComponentHandle]] = None) -> None:
        """Launch every non-passive handle's main loop; returns once launched."""
        if handles is None:
            handles = list(self.handles.values())
        for handle in handles:
            if not handle.passive and handle.context.status == "running":
                raise AlreadyStarted(f"{handle.component_id} already running")
        for handle in handles:
            if handle.passive:
                continue
            entry = self._behaviors.get(handle.component_id)
            if entry is None:
                continue
            behavior, comp_ctx = entry
            handle.context.launch(self._component_main(handle, behavior, comp_ctx))
            for aux_ctx, fn in self._aux.get(handle.component_id, ()):
                aux_ctx.launch(self._aux_main(fn))

    def _component_main(
        self, handle: ComponentHandle, behavior: Behavior, comp_ctx: ComponentContext
    ) -> Callable[[], None]:
        def run() -> None:
            try:
                self.emit(handle.component_id, "custom", "start")
                behavior(comp_ctx)
                self.emit(handle.component_id, "custom", "stop")
            except Stopped:
                try:
                    self.emit(handle.component_id, "custom", "stop")
                except SinkClosed:
                    pass
            except SinkClosed:
                pass
            except Exception as exc:  # pragma: no cover - behavior bug escape hatch
                try:
                    self.emit(handle.component_id, "custom", f"crash:{digest_of(exc)}")
                except SinkClosed:
                    pass

        return run

    def _aux_main(self, fn: Callable[[], None]) -> Callable[[], None]:
        def run() -> None:
            try:
                fn()
            except (Stopped, SinkClosed):
                pass

        return run

    def shutdown(self, grace: float = 2.0) -> SystemTrace:
        """Signal stop, wait up to *grace* for loops to exit, seal the trace.

        Idempotent: repeated calls return the same SystemTrace. Contexts
        that do not confirm exit within the grace period are marked
        stopped and recorded with a forced_stop event.
        """
        with self._lock:
            if self._result is not None:
                return self._result
        self.stop.trigger()
        deadline = time.monotonic() + grace
        for ctx in list(self.contexts):
            if ctx.status != "running":
                continue
            finished = ctx.join(max(deadline - time.monotonic(), 0.01))
            if not finished:
                ctx.status = "stopped"
                owner = self.objects.get(ctx.context_id, (ctx.label, ""))[0]
                try:
                    self.trace.emit(owner, "custom", "forced_stop")
                except SinkClosed:  # pragma: no cover
                    pass
        result = self.trace.close()
        with self._lock:
            self._result = result
        return result
