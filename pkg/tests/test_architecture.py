import threading

import pytest
from hypothesis import given, strategies as st

from confab.architecture import (
    ArchitectureSpec,
    Binding,
    ComponentSpec,
    ConnectorSpec,
    DanglingReference,
    DuplicateName,
    InvalidArchitecture,
    MissingBehavior,
    ParseError,
    UnknownObject,
    instantiate,
    parse_architecture,
    print_architecture,
    trace_to_design,
    validate,
)
from confab.atm.simulation import build_atm_architecture
from confab.runtime import Stopped, System

from conftest import SCENARIOS, wait_until

MINIMAL = """
connector pipe {
  kind message_buffer
  message item
}

component producer {
  role io
  concurrency event_driven
  bind out -> pipe as sender
}

component consumer {
  role control
  concurrency demand_driven
  bind inbox -> pipe as receiver
}
"""


def minimal_registry(n=3, produced=None, consumed=None):
    produced = produced if produced is not None else []
    consumed = consumed if consumed is not None else []

    def producer(ctx):
        out = ctx.port("out")
        for i in range(n):
            out.send(i)
            produced.append(i)

    def consumer(ctx):
        inbox = ctx.port("inbox")
        while True:
            try:
                consumed.append(inbox.receive())
            except Stopped:
                break

    return {"producer": lambda _s: producer, "consumer": lambda _s: consumer}


# ---------------------------------------------------------------------------
# parsing


def test_parse_minimal_design():
    spec = parse_architecture(MINIMAL)
    assert [c.name for c in spec.components] == ["producer", "consumer"]
    assert [c.name for c in spec.connectors] == ["pipe"]
    assert spec.connector("pipe").kind == "message_buffer"
    assert spec.component("producer").bindings == [Binding("out", "pipe", "sender")]


def test_parse_dangling_reference_carries_line():
    text = MINIMAL.replace("bind inbox -> pipe as receiver",
                           "bind inbox -> q9 as receiver")
    with pytest.raises(DanglingReference) as err:
        parse_architecture(text)
    assert "q9" in str(err.value)
    assert err.value.line == text.splitlines().index(
        "  bind inbox -> q9 as receiver") + 1


def test_parse_duplicate_name():
    with pytest.raises(DuplicateName):
        parse_architecture(MINIMAL + "\ncomponent producer {\n  role io\n"
                                     "  concurrency demand_driven\n}\n")


@pytest.mark.parametrize("mutation", [
    ("role io", "role pilot"),
    ("concurrency event_driven", "concurrency sometimes"),
    ("kind message_buffer", "kind message_pigeon"),
    ("bind out -> pipe as sender", "bind out pipe sender"),
    ("component producer {", "component producer"),
])
def test_parse_syntax_errors(mutation):
    old, new = mutation
    with pytest.raises(ParseError):
        parse_architecture(MINIMAL.replace(old, new))


def test_parse_unclosed_block():
    with pytest.raises(ParseError) as err:
        parse_architecture("connector pipe {\n  kind message_buffer")
    assert "unclosed" in str(err.value)


def test_shipped_atm_file_declares_case_study():
    spec = parse_architecture((SCENARIOS / "atm.arch").read_text())
    names = {c.name for c in spec.components}
    assert names == {"atm", "server", "card_reader", "touchscreen",
                     "printer", "dispenser", "transaction", "log"}
    assert spec.component("transaction").host == "atm"
    kinds = {c.name: c.kind for c in spec.connectors}
    assert kinds["to_server"] == "queue_and_callback"
    assert kinds["screen_io"] == "buffer_and_reply"
    assert kinds["to_log"] == "message_queue"
    assert kinds["card_to_atm"] == kinds["atm_to_card"] == "message_buffer"


def test_shipped_file_matches_builder():
    # the reference file and the programmatic builder must agree exactly
    shipped = parse_architecture((SCENARIOS / "atm.arch").read_text())
    assert shipped == build_atm_architecture(1)


# ---------------------------------------------------------------------------
# validation


def _two_sender_buffer_spec():
    return ArchitectureSpec(
        components=[
            ComponentSpec("a", "io", "event_driven",
                          bindings=[Binding("out", "pipe", "sender")]),
            ComponentSpec("b", "io", "event_driven",
                          bindings=[Binding("out", "pipe", "sender")]),
            ComponentSpec("c", "control", "demand_driven",
                          bindings=[Binding("inbox", "pipe", "receiver")]),
        ],
        connectors=[ConnectorSpec("pipe", "message_buffer")],
    )


def test_validate_buffer_two_senders_is_error():
    findings = validate(_two_sender_buffer_spec())
    assert any(f.severity == "error" and "exactly one sender" in f.message
               for f in findings)


def test_validate_passive_without_host_is_error():
    spec = parse_architecture(MINIMAL)
    spec.components.append(ComponentSpec("orphan", "entity", "passive"))
    findings = validate(spec)
    assert any(f.severity == "error" and f.subject == "orphan" for f in findings)


def test_validate_shipped_atm_zero_errors():
    spec = parse_architecture((SCENARIOS / "atm.arch").read_text())
    assert [f for f in validate(spec) if f.severity == "error"] == []


def test_validate_capacity_on_buffer_is_error():
    spec = parse_architecture(MINIMAL)
    spec.connector("pipe").capacity = 4
    assert any("not permitted" in f.message for f in validate(spec))


def test_validate_huge_capacity_warns():
    spec = parse_architecture(MINIMAL.replace("kind message_buffer",
                                              "kind message_queue"))
    spec.connector("pipe").capacity = 10_000_000
    findings = validate(spec)
    assert any(f.severity == "warning" and "unbounded" in f.message
               for f in findings)
    assert not any(f.severity == "error" for f in findings)


def test_validate_periodic_needs_period():
    spec = parse_architecture(MINIMAL.replace(
        "concurrency demand_driven", "concurrency periodic"))
    assert any("period_ms" in f.message and f.severity == "error"
               for f in validate(spec))


def test_validate_connector_without_receiver():
    spec = parse_architecture(MINIMAL)
    spec.component("consumer").bindings.clear()
    assert any("no receiver" in f.message for f in validate(spec))


def test_validate_host_chain_must_reach_active():
    spec = parse_architecture(MINIMAL)
    spec.components += [
        ComponentSpec("p1", "entity", "passive", host="p2"),
        ComponentSpec("p2", "entity", "passive", host="p1"),
    ]
    findings = validate(spec)
    assert any("cycle" in f.message for f in findings)


# ---------------------------------------------------------------------------
# round-trip printing


def test_roundtrip_shipped_file():
    spec = parse_architecture((SCENARIOS / "atm.arch").read_text())
    assert parse_architecture(print_architecture(spec)) == spec


_name = st.from_regex(r"[a-z][a-z0-9_]{0,10}", fullmatch=True)
_word = st.from_regex(r"[a-zA-Z0-9_.:-]{1,12}", fullmatch=True)


@st.composite
def architectures(draw):
    connector_names = draw(st.lists(_name, min_size=1, max_size=4, unique=True))
    connectors = []
    for name in connector_names:
        kind = draw(st.sampled_from(sorted(
            {"message_buffer", "message_queue", "buffer_and_reply",
             "queue_and_callback"})))
        capacity = draw(st.one_of(st.none(), st.integers(1, 64)))
        connectors.append(ConnectorSpec(name=name, kind=kind, capacity=capacity,
                                        message=draw(_word)))
    component_names = draw(st.lists(_name, min_size=1, max_size=4,
                                    unique=True).filter(
        lambda names: not set(names) & set(connector_names)))
    components = []
    for name in component_names:
        bindings = [
            Binding(port=draw(_name), connector=draw(st.sampled_from(connector_names)),
                    end=draw(st.sampled_from(["sender", "receiver"])))
            for _ in range(draw(st.integers(0, 3)))
        ]
        params = draw(st.dictionaries(_name, _word, max_size=2))
        host = draw(st.one_of(st.none(), st.sampled_from(component_names)))
        components.append(ComponentSpec(
            name=name,
            role=draw(st.sampled_from(sorted(
                {"io", "control", "algorithm", "entity", "coordinator"}))),
            concurrency=draw(st.sampled_from(sorted(
                {"event_driven", "demand_driven", "periodic", "passive"}))),
            host=host, bindings=bindings, params=params))
    return ArchitectureSpec(components=components, connectors=connectors)


@given(architectures())
def test_roundtrip_any_printable_spec(spec):
    # printer/parser round-trip holds for structurally representable
    # specs whether or not they validate semantically
    assert parse_architecture(print_architecture(spec)) == spec


# ---------------------------------------------------------------------------
# instantiation


def test_instantiate_producer_consumer_counts():
    spec = parse_architecture(MINIMAL)
    system, tmap = instantiate(spec, minimal_registry())
    contexts = [c for c in system.contexts if not c.auxiliary]
    assert len(contexts) == 2
    conduits = [oid for oid, (_d, cat) in system.objects.items() if cat == "conduit"]
    assert conduits == ["pipe"]
    assert set(tmap.forward) == {"producer", "consumer", "pipe"}
    assert all(len(ids) >= 1 for ids in tmap.forward.values())
    assert sum(len(ids) for ids in tmap.forward.values()) == len(tmap.backward)
    system.shutdown()


def test_instantiate_atm_structure():
    spec = build_atm_architecture(1)
    registry = {c.name: (lambda _s: (lambda ctx: None)) for c in spec.components}
    registry["transaction"] = lambda _s: None
    from confab.components import PeriodicTask

    class Noop(PeriodicTask):
        def step(self, ctx):
            pass

    registry["log"] = lambda _s: Noop()
    system, tmap = instantiate(spec, registry)
    active = [c for c in spec.components if c.concurrency != "passive"]
    assert len([c for c in system.contexts if not c.auxiliary]) == len(active)
    # passive transaction shares the ATM's context
    assert (system.handles["transaction"].context_id
            == system.handles["atm"].context_id)
    # callback connector expands to two conduits, the others to one each
    conduit_design = [design for _oid, (design, cat) in system.objects.items()
                      if cat == "conduit"]
    assert conduit_design.count("to_server") == 2
    for single in ("card_to_atm", "atm_to_card", "screen_io",
                   "to_printer", "to_dispenser", "to_log"):
        assert conduit_design.count(single) == 1
    system.shutdown()


def test_instantiate_missing_behavior_is_atomic():
    spec = parse_architecture(MINIMAL)
    registry = minimal_registry()
    del registry["consumer"]
    system = System()
    with pytest.raises(MissingBehavior):
        instantiate(spec, registry, system=system)
    assert system.contexts == []
    assert system.connectors == {}


def test_instantiate_rejects_invalid_spec():
    with pytest.raises(InvalidArchitecture):
        instantiate(_two_sender_buffer_spec(), {})


# ---------------------------------------------------------------------------
# traceability


def run_minimal(n=3):
    spec = parse_architecture(MINIMAL)
    consumed = []
    system, tmap = instantiate(spec, minimal_registry(n=n, consumed=consumed))
    system.start_all()
    wait_until(lambda: len(consumed) == n)
    trace = system.shutdown()
    return trace, tmap


def test_trace_partitions_into_design_streams():
    trace, tmap = run_minimal()
    streams = trace_to_design(tmap, trace)
    assert set(streams) == {"producer", "consumer", "pipe"}
    assert sum(len(s) for s in streams.values()) == len(trace)
    assert all(e.kind in ("send_begin", "send_end", "receive_begin", "receive_end")
               for e in streams["pipe"])


def test_trace_to_design_empty_trace():
    _trace, tmap = run_minimal()
    from confab.runtime import SystemTrace
    streams = trace_to_design(tmap, SystemTrace([]))
    assert all(s == [] for s in streams.values())


def test_trace_to_design_unknown_object():
    trace, tmap = run_minimal()
    from confab.runtime import SystemTrace, TraceEvent
    rogue = SystemTrace([TraceEvent(1, "ghost", "custom", "boo")])
    with pytest.raises(UnknownObject):
        trace_to_design(tmap, rogue)
