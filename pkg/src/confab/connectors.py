"""The four connector stereotypes, each built from conduit(s) plus endpoints.

A connector is a cohesive unit of three parts: the sender endpoint, the
receiver endpoint, and the conduit(s) between them. Conduits are the only
objects shared across execution contexts; every conduit operation is a
single atomic transaction guarded by a wait condition (a predicate that
blocks the caller until it holds). Endpoints enforce the protocol and are
what component code sees; components never touch conduits directly.

Connector families:

* message buffer      -- synchronous, no reply: single cell, rendezvous
                         (the sender proceeds only after the receiver took
                         the message).
* message queue       -- asynchronous: bounded FIFO, producer suspends
                         only when full, consumer suspends when empty.
* buffer and reply    -- synchronous with reply: the client blocks for the
                         full round trip.
* queue and callback  -- asynchronous with reply: requests carry the
                         client's id, replies are routed back by that id
                         through a second, independent conduit.

Payloads move on send. Wrapping a payload in :class:`Owned` makes the
transfer checkable: the sender's box is emptied and later access raises.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Any, Callable, Optional

from .runtime import SinkClosed, Stopped, System

__all__ = [
    "Owned",
    "OwnershipError",
    "Envelope",
    "HandlerFault",
    "InvalidCapacity",
    "ProtocolViolation",
    "BufferConnector",
    "QueueConnector",
    "ReplyConnector",
    "CallbackConnector",
    "make_buffer",
    "make_queue",
    "make_reply",
    "make_callback",
]

PROTOCOL_KINDS = ("send_begin", "send_end", "receive_begin", "receive_end", "reply")


class InvalidCapacity(ValueError):
    """Queue-based connectors need capacity >= 1."""


class OwnershipError(RuntimeError):
    """A moved-out value was accessed by its former owner."""


class ProtocolViolation(RuntimeError):
    """An endpoint was used against its protocol's precondition."""


class Owned:
    """Single-owner box for a payload; sending moves the value out.

    After take() the box is empty and .value raises OwnershipError, which
    is how the test suite demonstrates that a sender retains no access to
    a message once it is in transit.
    """

    __slots__ = ("_value", "_moved")

    def __init__(self, value: Any):
        self._value = value
        self._moved = False

    def take(self) -> Any:
        if self._moved:
            raise OwnershipError("value was already moved out")
        value = self._value
        self._value = None
        self._moved = True
        return value

    @property
    def value(self) -> Any:
        if self._moved:
            raise OwnershipError("value was moved to the receiver")
        return self._value

    @property
    def moved(self) -> bool:
        return self._moved


def _unwrap(msg: Any) -> Any:
    return msg.take() if isinstance(msg, Owned) else msg


@dataclass(slots=True)
class Envelope:
    """A payload joined with its origin; the unit of ownership transfer.

    ``sender_id`` is the client id and is set only by callback connectors;
    ``seq`` counts envelopes per sender endpoint; ``tag`` is the globally
    unique trace digest for this envelope.
    """

    payload: Any
    sender_id: Optional[int]
    seq: int
    tag: str


@dataclass(slots=True)
class HandlerFault:
    """Error-variant reply delivered when a service handler raised.

    Dropping the reply would leave the blocked requester waiting forever,
    so the fault travels back in-band instead.
    """

    error: str


class _Monitor:
    """Mutual exclusion plus notification for one or more conduits.

    Conduits sharing a monitor can be waited on together with a single
    combined predicate (used by the periodic component to stay available
    for queries between steps).
    """

    def __init__(self, system: System):
        self.cond = threading.Condition()
        self.stop = system.stop
        self.trace = system.trace
        self._waiting = 0
        system.stop.attach(self.cond)

    def await_pred(self, pred: Callable[[], bool]) -> None:
        """Block until *pred* holds; raise Stopped rather than wait after
        shutdown signals. A condition that is already satisfied still
        completes, so in-flight handoffs finish cleanly."""
        while True:
            if pred():
                return
            if self.stop.is_set():
                raise Stopped()
            self._waiting += 1
            try:
                self.cond.wait()
            finally:
                self._waiting -= 1

    def wake(self) -> None:
        if self._waiting:
            self.cond.notify_all()

    def emit_quiet(self, source: str, kind: str, digest: str) -> None:
        try:
            self.trace.emit(source, kind, digest)
        except SinkClosed:
            pass


class _Conduit:
    """Shared communication state: transactions are atomic, waits are
    predicate-governed, and commits may emit trace events in the same
    critical section (ordering assertions depend on that)."""

    def __init__(self, object_id: str, monitor: _Monitor):
        self.object_id = object_id
        self._mon = monitor

    def entry_guard(self) -> None:
        """Blocking protocol operations refuse to begin after shutdown."""
        if self._mon.stop.is_set():
            raise Stopped()

    def _transact(self, pred: Callable[[], bool], action: Callable[[], Any]) -> Any:
        with self._mon.cond:
            self._mon.await_pred(pred)
            result = action()
            self._mon.wake()
            return result

    def _try_transact(self, pred: Callable[[], bool], action: Callable[[], Any]):
        """Non-blocking variant; works during shutdown (final drains)."""
        with self._mon.cond:
            if not pred():
                return None, False
            result = action()
            self._mon.wake()
            return result, True

    def emit(self, kind: str, digest: str) -> None:
        self._mon.emit_quiet(self.object_id, kind, digest)


class BufferConduit(_Conduit):
    """Single message cell: put requires empty, remove requires non-empty."""

    def __init__(self, object_id: str, monitor: _Monitor):
        super().__init__(object_id, monitor)
        self._cell: Optional[Envelope] = None

    def is_empty(self) -> bool:
        with self._mon.cond:
            return self._cell is None

    def put(self, env: Envelope) -> None:
        def action():
            self._cell = env

        self._transact(lambda: self._cell is None, action)

    def remove(self) -> Envelope:
        def action():
            env = self._cell
            self._cell = None
            self.emit("receive_end", env.tag)
            return env

        return self._transact(lambda: self._cell is not None, action)

    def try_remove(self) -> Optional[Envelope]:
        def action():
            env = self._cell
            self._cell = None
            self.emit("receive_end", env.tag)
            return env

        env, ok = self._try_transact(lambda: self._cell is not None, action)
        return env if ok else None

    def await_empty(self) -> None:
        self._transact(lambda: self._cell is None, lambda: None)


class QueueConduit(_Conduit):
    """Bounded FIFO: append suspends when full, pop suspends when empty.

    max_occupancy is updated inside every transaction, so the capacity
    bound can be asserted exactly rather than by sampling.
    """

    def __init__(self, object_id: str, monitor: _Monitor, capacity: int):
        if capacity < 1:
            raise InvalidCapacity(f"capacity must be >= 1, got {capacity}")
        super().__init__(object_id, monitor)
        self.capacity = capacity
        self._items: list[Envelope] = []
        self.max_occupancy = 0

    def __len__(self) -> int:
        with self._mon.cond:
            return len(self._items)

    def is_full(self) -> bool:
        with self._mon.cond:
            return len(self._items) >= self.capacity

    def append(self, env: Envelope) -> None:
        def action():
            self._items.append(env)
            self.max_occupancy = max(self.max_occupancy, len(self._items))

        self._transact(lambda: len(self._items) < self.capacity, action)

    def pop(self) -> Envelope:
        def action():
            env = self._items.pop(0)
            self.emit("receive_end", env.tag)
            return env

        return self._transact(lambda: bool(self._items), action)

    def try_pop(self) -> Optional[Envelope]:
        def action():
            env = self._items.pop(0)
            self.emit("receive_end", env.tag)
            return env

        env, ok = self._try_transact(lambda: bool(self._items), action)
        return env if ok else None


class ReplyConduit(_Conduit):
    """One request cell and one reply cell; at most one outstanding request."""

    def __init__(self, object_id: str, monitor: _Monitor):
        super().__init__(object_id, monitor)
        self._request: Optional[Envelope] = None
        self._reply: Optional[Envelope] = None
        self._busy = False

    def has_request(self) -> bool:
        with self._mon.cond:
            return self._request is not None

    def put_request(self, env: Envelope) -> None:
        def action():
            self._request = env
            self._busy = True

        self._transact(lambda: not self._busy, action)

    def take_request(self) -> Envelope:
        def action():
            env = self._request
            self._request = None
            self.emit("receive_end", env.tag)
            return env

        return self._transact(lambda: self._request is not None, action)

    def put_reply(self, env: Envelope) -> None:
        def action():
            self._reply = env
            self.emit("reply", env.tag)

        self._transact(lambda: self._busy and self._reply is None, action)

    def take_reply(self) -> Envelope:
        def action():
            env = self._reply
            self._reply = None
            self._busy = False
            self.emit("receive_end", env.tag)
            return env

        return self._transact(lambda: self._reply is not None, action)


class CallbackTableConduit(_Conduit):
    """Reply routing table: per-client FIFO queues keyed by client id."""

    def __init__(self, object_id: str, monitor: _Monitor):
        super().__init__(object_id, monitor)
        self._table: dict[int, list[Envelope]] = {}

    def has_answer_for(self, client_id: int) -> bool:
        with self._mon.cond:
            return bool(self._table.get(client_id))

    def push(self, client_id: int, env: Envelope) -> None:
        def action():
            self._table.setdefault(client_id, []).append(env)
            self.emit("reply", env.tag)

        self._transact(lambda: True, action)

    def pop_for(self, client_id: int) -> Envelope:
        def action():
            env = self._table[client_id].pop(0)
            self.emit("receive_end", env.tag)
            return env

        return self._transact(lambda: bool(self._table.get(client_id)), action)


# ---------------------------------------------------------------------------
# Endpoints


class _Endpoint:
    def __init__(self, endpoint_id: str):
        self.endpoint_id = endpoint_id
        self._next_seq = 0

    def _envelope(self, payload: Any, sender_id: Optional[int] = None) -> Envelope:
        self._next_seq += 1
        return Envelope(
            payload=payload,
            sender_id=sender_id,
            seq=self._next_seq,
            tag=f"{self.endpoint_id}.{self._next_seq}",
        )


class BufferSender(_Endpoint):
    def __init__(self, endpoint_id: str, conduit: BufferConduit):
        super().__init__(endpoint_id)
        self._conduit = conduit

    def send(self, msg: Any) -> None:
        """Rendezvous send: returns only after the receiver took the message."""
        self._conduit.entry_guard()
        env = self._envelope(_unwrap(msg))
        self._conduit.emit("send_begin", env.tag)
        self._conduit.put(env)
        self._conduit.await_empty()
        self._conduit.emit("send_end", env.tag)


class BufferReceiver(_Endpoint):
    def __init__(self, endpoint_id: str, conduit: BufferConduit):
        super().__init__(endpoint_id)
        self._conduit = conduit

    def receive(self) -> Any:
        self._conduit.entry_guard()
        self._conduit.emit("receive_begin", self.endpoint_id)
        return self._conduit.remove().payload

    def try_receive(self) -> Optional[Any]:
        env = self._conduit.try_remove()
        return None if env is None else env.payload


class QueueSender(_Endpoint):
    def __init__(self, endpoint_id: str, conduit: QueueConduit):
        super().__init__(endpoint_id)
        self._conduit = conduit

    def send(self, msg: Any) -> None:
        """FIFO send: waits only while the queue is at capacity."""
        self._conduit.entry_guard()
        env = self._envelope(_unwrap(msg))
        self._conduit.emit("send_begin", env.tag)
        self._conduit.append(env)
        self._conduit.emit("send_end", env.tag)


class QueueReceiver(_Endpoint):
    def __init__(self, endpoint_id: str, conduit: QueueConduit):
        super().__init__(endpoint_id)
        self._conduit = conduit

    def receive(self) -> Any:
        self._conduit.entry_guard()
        self._conduit.emit("receive_begin", self.endpoint_id)
        return self._conduit.pop().payload

    def try_receive(self) -> Optional[Any]:
        """Non-blocking pop; usable during final drains after shutdown."""
        env = self._conduit.try_pop()
        return None if env is None else env.payload


class ReplySender(_Endpoint):
    def __init__(self, endpoint_id: str, conduit: ReplyConduit):
        super().__init__(endpoint_id)
        self._conduit = conduit
        self._outstanding = False

    def request(self, msg: Any) -> Any:
        """Place a request and block for the full round trip."""
        if self._outstanding:
            raise ProtocolViolation(f"{self.endpoint_id}: request already outstanding")
        self._conduit.entry_guard()
        env = self._envelope(_unwrap(msg))
        self._conduit.emit("send_begin", env.tag)
        self._outstanding = True
        try:
            self._conduit.put_request(env)
            self._conduit.emit("send_end", env.tag)
            reply = self._conduit.take_reply()
        finally:
            self._outstanding = False
        return reply.payload


class ReplyReceiver(_Endpoint):
    def __init__(self, endpoint_id: str, conduit: ReplyConduit):
        super().__init__(endpoint_id)
        self._conduit = conduit

    def serve(self, handler: Callable[[Any], Any]) -> None:
        """Take one request, run *handler*, deposit exactly one reply."""
        self._conduit.entry_guard()
        self._conduit.emit("receive_begin", self.endpoint_id)
        env = self._conduit.take_request()
        try:
            result = handler(env.payload)
        except Stopped:
            raise
        except Exception as exc:
            result = HandlerFault(error=f"{type(exc).__name__}: {exc}")
        reply = Envelope(payload=result, sender_id=env.sender_id, seq=env.seq,
                         tag=f"{env.tag}/r")
        self._conduit.put_reply(reply)


class CallbackSender(_Endpoint):
    """Client side of the queue-and-callback connector.

    Carries the client id that the service uses to route the reply back;
    send returns as soon as the request is queued, and accept picks up
    this client's oldest reply later.
    """

    def __init__(self, endpoint_id: str, client_id: int,
                 send_conduit: QueueConduit, cb_conduit: CallbackTableConduit):
        super().__init__(endpoint_id)
        self.client_id = client_id
        self._send_conduit = send_conduit
        self._cb_conduit = cb_conduit

    def send(self, msg: Any) -> None:
        self._send_conduit.entry_guard()
        env = self._envelope(_unwrap(msg), sender_id=self.client_id)
        self._send_conduit.emit("send_begin", env.tag)
        self._send_conduit.append(env)
        self._send_conduit.emit("send_end", env.tag)

    def accept(self) -> Any:
        """Oldest reply addressed to this client; never another client's."""
        self._cb_conduit.entry_guard()
        self._cb_conduit.emit("receive_begin", self.endpoint_id)
        return self._cb_conduit.pop_for(self.client_id).payload

    def has_answer(self) -> bool:
        return self._cb_conduit.has_answer_for(self.client_id)


class CallbackReceiver(_Endpoint):
    def __init__(self, endpoint_id: str,
                 send_conduit: QueueConduit, cb_conduit: CallbackTableConduit):
        super().__init__(endpoint_id)
        self._send_conduit = send_conduit
        self._cb_conduit = cb_conduit

    def serve(self, handler: Callable[[Any], Any]) -> None:
        """Dequeue one request, run *handler*, route the reply to its sender."""
        self._send_conduit.entry_guard()
        self._send_conduit.emit("receive_begin", self.endpoint_id)
        env = self._send_conduit.pop()
        try:
            result = handler(env.payload)
        except Stopped:
            raise
        except Exception as exc:
            result = HandlerFault(error=f"{type(exc).__name__}: {exc}")
        reply = Envelope(payload=result, sender_id=env.sender_id, seq=env.seq,
                         tag=f"{env.tag}/r")
        self._cb_conduit.push(env.sender_id, reply)


# ---------------------------------------------------------------------------
# Connector families


class _Connector:
    """One connector instance: owns its conduit(s) and mints endpoints."""

    kind = ""

    def __init__(self, name: str, system: Optional[System]):
        self.name = name
        self.system = system if system is not None else System()
        self._n_senders = 0
        self._n_receivers = 0
        self.conduits: list[_Conduit] = []

    def _register(self, object_id: str, category: str) -> None:
        self.system.register_object(object_id, self.name, category)

    def _sender_id(self) -> str:
        sid = f"{self.name}:s{self._n_senders}"
        self._n_senders += 1
        self._register(sid, "endpoint")
        return sid

    def _receiver_id(self) -> str:
        rid = f"{self.name}:r{self._n_receivers}"
        self._n_receivers += 1
        self._register(rid, "endpoint")
        return rid

    def _new_monitor(self) -> _Monitor:
        return _Monitor(self.system)


class BufferConnector(_Connector):
    kind = "message_buffer"

    def __init__(self, name: str = "buffer", system: Optional[System] = None):
        super().__init__(name, system)
        self.conduit = BufferConduit(name, self._new_monitor())
        self.conduits = [self.conduit]
        self._register(name, "conduit")

    def sender(self) -> BufferSender:
        return BufferSender(self._sender_id(), self.conduit)

    def receiver(self) -> BufferReceiver:
        return BufferReceiver(self._receiver_id(), self.conduit)


class QueueConnector(_Connector):
    kind = "message_queue"

    def __init__(self, name: str = "queue", capacity: int = 16,
                 system: Optional[System] = None):
        super().__init__(name, system)
        self.conduit = QueueConduit(name, self._new_monitor(), capacity)
        self.conduits = [self.conduit]
        self._register(name, "conduit")

    def sender(self) -> QueueSender:
        return QueueSender(self._sender_id(), self.conduit)

    def receiver(self) -> QueueReceiver:
        return QueueReceiver(self._receiver_id(), self.conduit)


class ReplyConnector(_Connector):
    kind = "buffer_and_reply"

    def __init__(self, name: str = "reply", system: Optional[System] = None):
        super().__init__(name, system)
        self.conduit = ReplyConduit(name, self._new_monitor())
        self.conduits = [self.conduit]
        self._register(name, "conduit")

    def sender(self) -> ReplySender:
        return ReplySender(self._sender_id(), self.conduit)

    def receiver(self) -> ReplyReceiver:
        return ReplyReceiver(self._receiver_id(), self.conduit)


class CallbackConnector(_Connector):
    """Queue-and-callback: two independent conduits, one carrying requests
    out and one carrying replies back, keyed by client id."""

    kind = "queue_and_callback"

    def __init__(self, name: str = "callback", capacity: int = 16,
                 system: Optional[System] = None):
        super().__init__(name, system)
        self.send_conduit = QueueConduit(f"{name}/send", self._new_monitor(), capacity)
        self.cb_conduit = CallbackTableConduit(f"{name}/cb", self._new_monitor())
        self.conduits = [self.send_conduit, self.cb_conduit]
        self._register(f"{name}/send", "conduit")
        self._register(f"{name}/cb", "conduit")
        self._next_client = 0

    def sender(self) -> CallbackSender:
        client_id = self._next_client
        self._next_client += 1
        return CallbackSender(self._sender_id(), client_id,
                              self.send_conduit, self.cb_conduit)

    def receiver(self) -> CallbackReceiver:
        return CallbackReceiver(self._receiver_id(),
                                self.send_conduit, self.cb_conduit)


def make_buffer(name: str = "buffer", system: Optional[System] = None):
    """Connected (sender, receiver, connector) triple for a message buffer."""
    connector = BufferConnector(name, system)
    return connector.sender(), connector.receiver(), connector


def make_queue(name: str = "queue", capacity: int = 16,
               system: Optional[System] = None):
    connector = QueueConnector(name, capacity, system)
    return connector.sender(), connector.receiver(), connector


def make_reply(name: str = "reply", system: Optional[System] = None):
    connector = ReplyConnector(name, system)
    return connector.sender(), connector.receiver(), connector


def make_callback(name: str = "callback", capacity: int = 16,
                  system: Optional[System] = None):
    connector = CallbackConnector(name, capacity, system)
    return connector.sender(), connector.receiver(), connector


def connector_for(kind: str, name: str, capacity: Optional[int],
                  system: System) -> _Connector:
    """Instantiate a connector family by its stereotype name."""
    if kind == "message_buffer":
        return BufferConnector(name, system)
    if kind == "message_queue":
        return QueueConnector(name, capacity if capacity is not None else 16, system)
    if kind == "buffer_and_reply":
        return ReplyConnector(name, system)
    if kind == "queue_and_callback":
        return CallbackConnector(name, capacity if capacity is not None else 16, system)
    raise ValueError(f"unknown connector kind {kind!r}")
