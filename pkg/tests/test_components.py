import statistics
import threading
import time

import pytest

from confab.components import (
    PassiveEntity,
    PeriodicTask,
    ScriptedEvent,
    demand_loop,
    entity_access,
    io_loop,
    make_periodic,
    parse_event_script,
)
from confab.connectors import BufferConnector, QueueConnector
from confab.runtime import Stopped, System, WrongContext

from conftest import spec_of, wait_until


class DoneAfter(PeriodicTask):
    def __init__(self, n, period_ms=10.0):
        super().__init__(period_ms)
        self.n = n

    def step(self, ctx):
        if self.step_count + 1 >= self.n:
            self.is_done = True


def run_periodic_until_done(task, name="ticker", extra_wait=0.0):
    system = System()
    handle, probe = make_periodic(system, name, task)
    system.start_all()
    assert wait_until(probe.is_done, timeout=10.0)
    if extra_wait:
        time.sleep(extra_wait)
    trace = system.shutdown()
    return system, handle, trace


# ---------------------------------------------------------------------------
# periodic + pacemaker


def test_periodic_exact_step_count():
    # counting oracle: done after 3 steps means exactly 3 step events
    task = DoneAfter(3, period_ms=10)
    _, handle, trace = run_periodic_until_done(task, extra_wait=0.06)
    steps = [e for e in trace.by_kind("step") if e.source == "ticker"]
    assert [e.digest for e in steps] == ["step:1", "step:2", "step:3"]
    assert task.step_count == 3
    assert task.is_done


def test_periodic_done_never_rescheduled():
    task = DoneAfter(1, period_ms=5)
    _, _, trace = run_periodic_until_done(task, extra_wait=0.05)
    assert len([e for e in trace.by_kind("step") if e.source == "ticker"]) == 1


def test_periodic_query_answered_mid_period():
    # the pacemaker sleeps, not the task: a status query issued while the
    # pacemaker is mid-period comes back without waiting out the period
    system = System()
    task = DoneAfter(10_000, period_ms=500)
    _handle, probe = make_periodic(system, "slow", task)
    system.start_all()
    assert wait_until(lambda: task.step_count >= 1, timeout=5.0)
    t0 = time.perf_counter()
    done, count = probe.status()
    elapsed = time.perf_counter() - t0
    assert elapsed < 0.25  # far less than the 500 ms period
    assert not done and count >= 1
    system.shutdown()


def test_pacemaker_and_task_on_distinct_contexts():
    system = System()
    handle, _probe = make_periodic(system, "ticker", DoneAfter(1))
    aux = [ctx for ctx in system.contexts if ctx.auxiliary]
    assert len(aux) == 1
    assert aux[0].context_id != handle.context_id
    system.start_all()
    system.shutdown()


def test_periodic_query_latency_distribution():
    system = System()
    task = DoneAfter(10_000, period_ms=100)
    _handle, probe = make_periodic(system, "svc", task)
    system.start_all()
    wait_until(lambda: task.step_count >= 1, timeout=5.0)
    samples = []
    for _ in range(20):
        time.sleep(0.01)  # land mid-period
        t0 = time.perf_counter()
        probe.status()
        samples.append(time.perf_counter() - t0)
    system.shutdown()
    assert statistics.median(samples) < 0.05


# ---------------------------------------------------------------------------
# demand-driven loop


def _demand_system(handler):
    system = System()
    system.add_connector("q", QueueConnector("q", system=system))
    sender = system.connectors["q"].sender()
    system.spawn_component(
        spec_of("worker", bindings=[("inbox", "q", "receiver")]),
        behavior=lambda ctx: demand_loop(ctx, handler))
    return system, sender


def test_demand_loop_handles_in_fifo_order():
    seen = []
    system, sender = _demand_system(lambda ctx, msg: seen.append(msg))
    for i in range(3):
        sender.send(i)
    system.start_all()
    assert wait_until(lambda: len(seen) == 3)
    assert seen == [0, 1, 2]
    trace = system.shutdown()
    assert len([e for e in trace.by_kind("step") if e.source == "worker"]) == 3


def test_demand_loop_blocked_consumes_nothing():
    seen = []
    system, _sender = _demand_system(lambda ctx, msg: seen.append(msg))
    system.start_all()
    assert not wait_until(lambda: seen, timeout=0.1)
    system.shutdown()
    assert seen == []


def test_demand_loop_stop_while_blocked_emits_stop():
    system, _sender = _demand_system(lambda ctx, msg: None)
    system.start_all()
    wait_until(lambda: system.trace.snapshot().by_source("worker"))
    trace = system.shutdown(grace=1.0)
    assert trace.first(source="worker", kind="custom", digest="stop") is not None
    assert trace.first(digest="forced_stop") is None


# ---------------------------------------------------------------------------
# event-driven I/O loop


def _io_system(events):
    system = System()
    system.add_connector("out", BufferConnector("out", system=system))
    receiver = system.connectors["out"].receiver()
    system.spawn_component(
        spec_of("device", role="io", concurrency="event_driven",
                bindings=[("out", "out", "sender")]),
        behavior=lambda ctx: io_loop(ctx, events))
    return system, receiver


def test_io_loop_single_card_inserted_event():
    system, receiver = _io_system([ScriptedEvent(0, "card_inserted", ("42",))])
    system.start_all()
    assert receiver.receive() == ("card_inserted", "42")
    trace = system.shutdown()
    assert len(trace.by_kind("send_end")) == 1


def test_io_loop_empty_script_sends_nothing():
    system, _receiver = _io_system([])
    system.start_all()
    trace = system.shutdown()
    assert trace.by_kind("send_begin") == []
    assert trace.first(source="device", kind="custom", digest="stop") is not None


def test_io_loop_n_events_n_send_ends():
    n = 5
    events = [ScriptedEvent(0, f"ev{i}") for i in range(n)]
    system, receiver = _io_system(events)
    got = []

    def drain():
        for _ in range(n):
            got.append(receiver.receive())

    t = threading.Thread(target=drain)
    t.start()
    system.start_all()
    t.join()
    trace = system.shutdown()
    assert len(trace.by_kind("send_end")) == n
    assert got == [(f"ev{i}",) for i in range(n)]


def test_parse_event_script():
    script = parse_event_script("""
        # device warm-up
        0 card_inserted 42
        12.5 button menu ok
    """)
    assert script == [
        ScriptedEvent(0.0, "card_inserted", ("42",)),
        ScriptedEvent(12.5, "button", ("menu", "ok")),
    ]
    with pytest.raises(ValueError):
        parse_event_script("oops")
    with pytest.raises(ValueError):
        parse_event_script("soon tick")


# ---------------------------------------------------------------------------
# passive entities


def _entity_host(initial_state):
    """Run actions against an entity from inside its host's context."""
    system = System()
    system.add_connector("q", QueueConnector("q", system=system))
    sender = system.connectors["q"].sender()
    results = []

    def host_behavior(ctx):
        entity = ctx.attached["data"]
        def on_msg(ctx_, action):
            results.append(entity_access(entity, action))
        demand_loop(ctx, on_msg)

    handle = system.spawn_component(
        spec_of("host", bindings=[("inbox", "q", "receiver")]),
        behavior=host_behavior)
    entity = PassiveEntity(handle, state=initial_state)
    system.attach_entity(handle, "data", entity)
    return system, sender, entity, results


def test_entity_deduct_arithmetic():
    system, sender, entity, results = _entity_host({"balance": 100})

    def deduct(state):
        state["balance"] -= 30
        return (state, "ok")

    sender.send(deduct)
    system.start_all()
    assert wait_until(lambda: results)
    assert results == ["ok"]
    assert entity.state["balance"] == 70
    system.shutdown()


def test_entity_identity_action():
    system, sender, entity, results = _entity_host(("frozen",))
    sender.send(lambda state: (state, state))
    system.start_all()
    assert wait_until(lambda: results)
    assert results == [("frozen",)]
    assert entity.state == ("frozen",)
    system.shutdown()


def test_entity_access_from_foreign_context_raises():
    system, _sender, entity, _results = _entity_host(0)
    with pytest.raises(WrongContext):  # main thread is not the host context
        entity.access(lambda s: (s, s))
    system.start_all()
    system.shutdown()


def test_entity_accesses_never_overlap():
    system, sender, entity, results = _entity_host(0)
    system.start_all()
    for i in range(50):
        sender.send(lambda s: (s + 1, s))
    assert wait_until(lambda: len(results) == 50)
    system.shutdown()
    assert entity.state == 50
    assert entity.max_depth == 1
