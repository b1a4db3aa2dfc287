"""Declarative architecture descriptions and their mechanical instantiation.

An architecture file names the components (role, concurrency, bindings,
parameters) and the connectors (kind, capacity, message tag) of a design;
instantiate() turns a validated description plus a behavior registry into
a ready-to-start system: conduits first, then components in controller-
first order, then passive attachments. Every runtime object created along
the way is attributed to exactly one design element, which is what the
traceability map records.

File format (see docs/architecture-format.md; '#' starts a comment):

    connector <name> {
      kind <message_buffer|message_queue|buffer_and_reply|queue_and_callback>
      capacity <int>            # queue-based kinds only, default 16
      message <tag>
    }

    component <name> {
      role <io|control|algorithm|entity|coordinator>
      concurrency <event_driven|demand_driven|periodic|passive>
      host <component>          # passive components only
      bind <port> -> <connector> as <sender|receiver>
      param <key>=<value>
    }
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from . import components as components_mod
from .connectors import connector_for
from .runtime import CONCURRENCY, ROLES, System, SystemTrace, TraceEvent

CONNECTOR_KINDS = frozenset(
    {"message_buffer", "message_queue", "buffer_and_reply", "queue_and_callback"}
)
QUEUE_KINDS = frozenset({"message_queue", "queue_and_callback"})
SINGLE_ENDED_KINDS = frozenset({"message_buffer", "buffer_and_reply"})

#: conduit objects a connector of each kind expands into
CONDUITS_PER_KIND = {
    "message_buffer": 1,
    "message_queue": 1,
    "buffer_and_reply": 1,
    "queue_and_callback": 2,
}

_ROLE_ORDER = {"coordinator": 0, "control": 1, "algorithm": 2, "io": 3, "entity": 4}


class ArchitectureError(Exception):
    pass


class ParseError(ArchitectureError):
    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class DuplicateName(ParseError):
    pass


class DanglingReference(ParseError):
    pass


class InvalidArchitecture(ArchitectureError):
    """instantiate() was given a spec that validate() rejects."""


class MissingBehavior(KeyError):
    """The behavior registry lacks an entry for a declared component."""


class UnknownObject(KeyError):
    """A trace event's source is not a runtime object of this run."""


@dataclass(frozen=True)
class Binding:
    port: str
    connector: str
    end: str  # "sender" | "receiver"


@dataclass
class ComponentSpec:
    name: str
    role: str
    concurrency: str
    host: Optional[str] = None
    bindings: list[Binding] = field(default_factory=list)
    params: dict[str, str] = field(default_factory=dict)


@dataclass
class ConnectorSpec:
    name: str
    kind: str
    capacity: Optional[int] = None
    message: str = "msg"


@dataclass
class ArchitectureSpec:
    components: list[ComponentSpec] = field(default_factory=list)
    connectors: list[ConnectorSpec] = field(default_factory=list)

    def component(self, name: str) -> ComponentSpec:
        for c in self.components:
            if c.name == name:
                return c
        raise KeyError(name)

    def connector(self, name: str) -> ConnectorSpec:
        for c in self.connectors:
            if c.name == name:
                return c
        raise KeyError(name)

    def active_components(self) -> list[ComponentSpec]:
        return [c for c in self.components if c.concurrency != "passive"]

    def bindings_of(self, connector: str, end: str) -> list[tuple[ComponentSpec, Binding]]:
        found = []
        for comp in self.components:
            for b in comp.bindings:
                if b.connector == connector and b.end == end:
                    found.append((comp, b))
        return found


@dataclass(frozen=True)
class Finding:
    severity: str  # "error" | "warning"
    subject: str
    message: str

    def __str__(self) -> str:
        return f"{self.severity}: {self.subject}: {self.message}"


# ---------------------------------------------------------------------------
# Parsing and printing


def _column_of(raw: str, token: str) -> int:
    idx = raw.find(token)
    return idx + 1 if idx >= 0 else 1


def parse_architecture(text: str) -> ArchitectureSpec:
    """Parse an architecture description; raises ParseError with position."""
    spec = ArchitectureSpec()
    names: dict[str, int] = {}
    # deferred reference checks: (kind, referenced name, line, column)
    refs: list[tuple[str, str, int, int]] = []

    block: Optional[str] = None  # "component" | "connector"
    current: Any = None
    open_line = 0

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()

        if block is None:
            if parts[0] not in ("component", "connector"):
                raise ParseError(f"expected 'component' or 'connector', got {parts[0]!r}",
                                 lineno, _column_of(raw, parts[0]))
            if len(parts) != 3 or parts[2] != "{":
                raise ParseError(f"expected '{parts[0]} <name> {{'", lineno)
            name = parts[1]
            if name in names:
                raise DuplicateName(
                    f"name {name!r} already declared on line {names[name]}",
                    lineno, _column_of(raw, name))
            names[name] = lineno
            block = parts[0]
            open_line = lineno
            if block == "component":
                current = ComponentSpec(name=name, role="", concurrency="")
            else:
                current = ConnectorSpec(name=name, kind="")
            continue

        if parts[0] == "}":
            if len(parts) != 1:
                raise ParseError("unexpected text after '}'", lineno)
            if block == "component":
                if current.role == "":
                    raise ParseError(f"component {current.name!r} has no role", lineno)
                if current.concurrency == "":
                    raise ParseError(f"component {current.name!r} has no concurrency",
                                     lineno)
                spec.components.append(current)
            else:
                if current.kind == "":
                    raise ParseError(f"connector {current.name!r} has no kind", lineno)
                spec.connectors.append(current)
            block, current = None, None
            continue

        if block == "connector":
            key = parts[0]
            if key == "kind":
                if len(parts) != 2 or parts[1] not in CONNECTOR_KINDS:
                    raise ParseError(
                        f"kind must be one of {sorted(CONNECTOR_KINDS)}", lineno)
                current.kind = parts[1]
            elif key == "capacity":
                if len(parts) != 2:
                    raise ParseError("expected 'capacity <int>'", lineno)
                try:
                    current.capacity = int(parts[1])
                except ValueError:
                    raise ParseError(f"bad capacity {parts[1]!r}", lineno,
                                     _column_of(raw, parts[1])) from None
            elif key == "message":
                if len(parts) != 2:
                    raise ParseError("expected 'message <tag>'", lineno)
                current.message = parts[1]
            else:
                raise ParseError(f"unknown connector field {key!r}", lineno,
                                 _column_of(raw, key))
            continue

        # component block
        key = parts[0]
        if key == "role":
            if len(parts) != 2 or parts[1] not in ROLES:
                raise ParseError(f"role must be one of {sorted(ROLES)}", lineno)
            current.role = parts[1]
        elif key == "concurrency":
            if len(parts) != 2 or parts[1] not in CONCURRENCY:
                raise ParseError(f"concurrency must be one of {sorted(CONCURRENCY)}",
                                 lineno)
            current.concurrency = parts[1]
        elif key == "host":
            if len(parts) != 2:
                raise ParseError("expected 'host <component>'", lineno)
            current.host = parts[1]
            refs.append(("component", parts[1], lineno, _column_of(raw, parts[1])))
        elif key == "bind":
            if len(parts) != 6 or parts[2] != "->" or parts[4] != "as" \
                    or parts[5] not in ("sender", "receiver"):
                raise ParseError(
                    "expected 'bind <port> -> <connector> as sender|receiver'", lineno)
            current.bindings.append(Binding(port=parts[1], connector=parts[3],
                                            end=parts[5]))
            refs.append(("connector", parts[3], lineno, _column_of(raw, parts[3])))
        elif key == "param":
            if len(parts) != 2 or "=" not in parts[1]:
                raise ParseError("expected 'param <key>=<value>'", lineno)
            k, v = parts[1].split("=", 1)
            if not k:
                raise ParseError("empty param key", lineno)
            current.params[k] = v
        else:
            raise ParseError(f"unknown component field {key!r}", lineno,
                             _column_of(raw, key))

    if block is not None:
        raise ParseError(f"unclosed block opened on line {open_line}", open_line)

    declared_components = {c.name for c in spec.components}
    declared_connectors = {c.name for c in spec.connectors}
    for ref_kind, ref_name, lineno, col in refs:
        pool = declared_components if ref_kind == "component" else declared_connectors
        if ref_name not in pool:
            raise DanglingReference(
                f"reference to undeclared {ref_kind} {ref_name!r}", lineno, col)
    return spec


def print_architecture(spec: ArchitectureSpec) -> str:
    """Canonical text for a spec; parse(print(spec)) == spec."""
    chunks: list[str] = []
    for conn in spec.connectors:
        lines = [f"connector {conn.name} {{", f"  kind {conn.kind}"]
        if conn.capacity is not None:
            lines.append(f"  capacity {conn.capacity}")
        lines.append(f"  message {conn.message}")
        lines.append("}")
        chunks.append("\n".join(lines))
    for comp in spec.components:
        lines = [f"component {comp.name} {{",
                 f"  role {comp.role}",
                 f"  concurrency {comp.concurrency}"]
        if comp.host is not None:
            lines.append(f"  host {comp.host}")
        for b in comp.bindings:
            lines.append(f"  bind {b.port} -> {b.connector} as {b.end}")
        for k, v in comp.params.items():
            lines.append(f"  param {k}={v}")
        lines.append("}")
        chunks.append("\n".join(lines))
    return "\n\n".join(chunks) + "\n"


# ---------------------------------------------------------------------------
# Validation


def validate(spec: ArchitectureSpec) -> list[Finding]:
    """Check design invariants; an empty list means instantiable."""
    findings: list[Finding] = []

    def err(subject: str, message: str) -> None:
        findings.append(Finding("error", subject, message))

    def warn(subject: str, message: str) -> None:
        findings.append(Finding("warning", subject, message))

    for conn in spec.connectors:
        senders = spec.bindings_of(conn.name, "sender")
        receivers = spec.bindings_of(conn.name, "receiver")
        if not senders:
            err(conn.name, "connector has no sender binding")
        if not receivers:
            err(conn.name, "connector has no receiver binding")
        if conn.kind in SINGLE_ENDED_KINDS:
            if len(senders) > 1:
                err(conn.name, f"{conn.kind} permits exactly one sender, "
                               f"found {len(senders)}")
            if len(receivers) > 1:
                err(conn.name, f"{conn.kind} permits exactly one receiver, "
                               f"found {len(receivers)}")
        if conn.kind in QUEUE_KINDS:
            if conn.capacity is not None and conn.capacity < 1:
                err(conn.name, f"capacity must be >= 1, got {conn.capacity}")
            if conn.capacity is not None and conn.capacity >= 1_000_000:
                warn(conn.name, "very large capacity: effectively unbounded")
        elif conn.capacity is not None:
            err(conn.name, f"capacity is not permitted for kind {conn.kind}")

    for comp in spec.components:
        passive = comp.concurrency == "passive"
        if passive and comp.host is None:
            err(comp.name, "passive component must declare a host")
        if not passive and comp.host is not None:
            err(comp.name, "only passive components may declare a host")
        if passive and comp.bindings:
            err(comp.name, "passive components may not bind connectors; "
                           "access them through the host")
        if comp.concurrency == "periodic" and "period_ms" not in comp.params:
            err(comp.name, "periodic component needs 'param period_ms=<ms>'")
        if not passive and not comp.bindings and comp.concurrency != "periodic":
            warn(comp.name, "active component has no bindings")

    # host chains must reach a non-passive component without cycles
    by_name = {c.name: c for c in spec.components}
    for comp in spec.components:
        if comp.concurrency != "passive" or comp.host is None:
            continue
        seen = {comp.name}
        cursor = comp
        while cursor.host is not None:
            if cursor.host in seen:
                err(comp.name, "host chain forms a cycle")
                break
            seen.add(cursor.host)
            cursor = by_name.get(cursor.host)
            if cursor is None:
                break  # dangling host is a parse-time error already
        else:
            if cursor is not None and cursor.concurrency == "passive":
                err(comp.name, "host chain never reaches a non-passive component")
    return findings


# ---------------------------------------------------------------------------
# Instantiation and traceability


@dataclass(frozen=True)
class TraceabilityMap:
    """Design name <-> runtime object ids, total and disjoint by build."""

    forward: dict[str, frozenset[str]]
    backward: dict[str, str]

    def design_of(self, object_id: str) -> str:
        try:
            return self.backward[object_id]
        except KeyError:
            raise UnknownObject(object_id) from None


def _build_traceability(system: System) -> TraceabilityMap:
    forward: dict[str, set[str]] = {}
    backward: dict[str, str] = {}
    for object_id, (design, _category) in system.objects.items():
        forward.setdefault(design, set()).add(object_id)
        backward[object_id] = design
    return TraceabilityMap(
        forward={k: frozenset(v) for k, v in forward.items()},
        backward=backward,
    )


Registry = dict[str, Callable[[ComponentSpec], Any]]


def instantiate(spec: ArchitectureSpec, registry: Registry,
                system: Optional[System] = None) -> tuple[System, TraceabilityMap]:
    """Build a ready-to-start system from a validated description.

    The registry maps each component name to a factory taking its
    ComponentSpec; the factory returns the component's behavior (a
    callable run on its context), a PeriodicTask for periodic components,
    or the entity object for passive ones. Nothing is started: calling
    start_all() on the returned system is the caller's step.
    """
    errors = [f for f in validate(spec) if f.severity == "error"]
    if errors:
        raise InvalidArchitecture("; ".join(str(f) for f in errors))
    missing = [c.name for c in spec.components if c.name not in registry]
    if missing:
        raise MissingBehavior(f"registry lacks behaviors for: {', '.join(missing)}")

    system = system if system is not None else System()
    for conn in spec.connectors:
        system.add_connector(conn.name,
                             connector_for(conn.kind, conn.name, conn.capacity, system))

    actives = sorted(spec.active_components(),
                     key=lambda c: _ROLE_ORDER.get(c.role, 9))
    for comp in actives:
        made = registry[comp.name](comp)
        if comp.concurrency == "periodic":
            if not isinstance(made, components_mod.PeriodicTask):
                raise TypeError(f"{comp.name}: periodic components need a "
                                f"PeriodicTask, got {type(made).__name__}")
            components_mod.spawn_periodic(system, comp, made)
        else:
            if not callable(made):
                raise TypeError(f"{comp.name}: expected a behavior callable, "
                                f"got {type(made).__name__}")
            system.spawn_component(comp, behavior=made)

    by_name = {c.name: c for c in spec.components}
    for comp in spec.components:
        if comp.concurrency != "passive":
            continue
        host = by_name[comp.host]
        while host.concurrency == "passive":
            host = by_name[host.host]
        host_handle = system.handles[host.name]
        handle = system.spawn_component(comp, host=host_handle)
        # passive factories return the entity's initial state
        state = registry[comp.name](comp)
        entity = components_mod.PassiveEntity(host_handle, state=state)
        system.attach_entity(host_handle, comp.name, entity)
        handle.entity = entity  # type: ignore[attr-defined]

    return system, _build_traceability(system)


def trace_to_design(tmap: TraceabilityMap,
                    trace: SystemTrace) -> dict[str, list[TraceEvent]]:
    """Partition a run's events into per-design-element streams.

    Stream lengths sum to the trace length; an event whose source is not
    a mapped runtime object raises UnknownObject.
    """
    streams: dict[str, list[TraceEvent]] = {name: [] for name in tmap.forward}
    for event in trace:
        streams[tmap.design_of(event.source)].append(event)
    return streams
