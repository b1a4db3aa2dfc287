"""confab: components in conversation.

A message-passing concurrency framework: active components confined to
their own execution contexts, communicating only through connector
endpoints (message buffer, message queue, buffer-and-reply,
queue-and-callback), described declaratively and instantiated
mechanically, with a globally ordered event trace for checking protocol
properties. Ships with a complete ATM simulation as the worked example.
"""

from .architecture import (
    ArchitectureSpec,
    Binding,
    ComponentSpec,
    ConnectorSpec,
    Finding,
    TraceabilityMap,
    instantiate,
    parse_architecture,
    print_architecture,
    trace_to_design,
    validate,
)
from .components import (
    PassiveEntity,
    PeriodicProbe,
    PeriodicTask,
    ScriptedEvent,
    demand_loop,
    entity_access,
    io_loop,
    make_periodic,
    parse_event_script,
    spawn_periodic,
)
from .connectors import (
    Envelope,
    HandlerFault,
    InvalidCapacity,
    Owned,
    OwnershipError,
    ProtocolViolation,
    make_buffer,
    make_callback,
    make_queue,
    make_reply,
)
from .runtime import (
    AlreadyStarted,
    ComponentContext,
    ComponentHandle,
    ExecutionContext,
    HostRequired,
    SinkClosed,
    Stopped,
    System,
    SystemTrace,
    TraceEvent,
    UnknownConduit,
    WrongContext,
)

__version__ = "0.1.0"
