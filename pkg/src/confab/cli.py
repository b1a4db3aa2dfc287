"""Command line: validate architecture files, run scenarios, demo patterns.

Exit codes: 0 success, 1 validation or scenario failure, 2 usage error.
Demos print the connector-level trace (protocol events only) so each
communication pattern's ordering is directly observable.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .architecture import (
    ArchitectureError,
    Binding,
    ComponentSpec,
    parse_architecture,
    validate,
)
from .atm.simulation import run_scenario
from .components import PeriodicTask, make_periodic
from .connectors import PROTOCOL_KINDS, QueueConnector
from .runtime import ComponentContext, Stopped, System

_DEMO_PATTERNS = ("buffer", "queue", "reply", "callback", "periodic")


def _print_protocol(trace) -> None:
    print("seq\tsource\tkind\tpayload")
    for event in trace.by_kind(*PROTOCOL_KINDS):
        print(event.export_line())


def _spec(name: str, role: str, concurrency: str, bindings) -> ComponentSpec:
    return ComponentSpec(name=name, role=role, concurrency=concurrency,
                         bindings=[Binding(*b) for b in bindings])


def _demo_pipe(kind: str, n: int) -> None:
    """Producer/consumer over a buffer (rendezvous) or bounded queue."""
    system = System()
    if kind == "queue":
        system.add_connector("pipe", QueueConnector("pipe", capacity=4, system=system))
    else:
        from .connectors import BufferConnector
        system.add_connector("pipe", BufferConnector("pipe", system=system))
    received = []

    def producer(ctx: ComponentContext) -> None:
        out = ctx.port("out")
        for i in range(n):
            out.send(f"msg-{i}")

    def consumer(ctx: ComponentContext) -> None:
        inbox = ctx.port("inbox")
        for _ in range(n):
            received.append(inbox.receive())

    system.spawn_component(
        _spec("producer", "io", "event_driven", [("out", "pipe", "sender")]),
        behavior=producer)
    system.spawn_component(
        _spec("consumer", "control", "demand_driven", [("inbox", "pipe", "receiver")]),
        behavior=consumer)
    system.start_all()
    trace = system.shutdown()
    _print_protocol(trace)
    print(f"delivered {len(received)}/{n} messages in order:",
          received == [f"msg-{i}" for i in range(n)])


def _demo_reply(n: int) -> None:
    """Client blocks for each round trip against a doubling service."""
    system = System()
    from .connectors import ReplyConnector
    system.add_connector("svc", ReplyConnector("svc", system=system))
    pairs = []

    def client(ctx: ComponentContext) -> None:
        svc = ctx.port("svc")
        for i in range(n):
            pairs.append((i, svc.request(i)))

    def service(ctx: ComponentContext) -> None:
        port = ctx.port("requests")
        while True:
            try:
                port.serve(lambda x: x * 2)
            except Stopped:
                break

    system.spawn_component(
        _spec("client", "control", "demand_driven", [("svc", "svc", "sender")]),
        behavior=client)
    system.spawn_component(
        _spec("service", "algorithm", "demand_driven",
              [("requests", "svc", "receiver")]),
        behavior=service)
    system.start_all()
    trace = system.shutdown()
    _print_protocol(trace)
    for sent, got in pairs:
        print(f"request {sent} -> reply {got}")


def _demo_callback(n: int) -> None:
    """Two clients share an echo service; replies route home by client id."""
    system = System()
    from .connectors import CallbackConnector
    system.add_connector("svc", CallbackConnector("svc", capacity=8, system=system))
    results: dict[int, list] = {0: [], 1: []}

    def make_client(slot: int):
        def client(ctx: ComponentContext) -> None:
            ep = ctx.port("svc")
            for i in range(n):
                ep.send(f"c{slot}-req{i}")
            for _ in range(n):
                results[slot].append(ep.accept())
        return client

    def service(ctx: ComponentContext) -> None:
        port = ctx.port("requests")
        while True:
            try:
                port.serve(lambda msg: f"echo:{msg}")
            except Stopped:
                break

    for slot in (0, 1):
        system.spawn_component(
            _spec(f"client{slot}", "control", "demand_driven",
                  [("svc", "svc", "sender")]),
            behavior=make_client(slot))
    system.spawn_component(
        _spec("service", "algorithm", "demand_driven",
              [("requests", "svc", "receiver")]),
        behavior=service)
    system.start_all()
    trace = system.shutdown()
    _print_protocol(trace)
    for slot in (0, 1):
        for i, reply in enumerate(results[slot]):
            print(f"client {slot}: request 'c{slot}-req{i}' -> reply '{reply}'")


def _demo_periodic(n: int) -> None:
    """A task stepped n times by its pacemaker, queried while it runs."""
    system = System()

    class Countdown(PeriodicTask):
        def step(self, ctx: ComponentContext) -> None:
            if self.step_count + 1 >= n:
                self.is_done = True

    _handle, probe = make_periodic(system, "ticker", Countdown(period_ms=40))
    system.start_all()
    while not probe.is_done():
        time.sleep(0.01)
    done, count = probe.status()
    trace = system.shutdown()
    print("seq\tsource\tkind\tpayload")
    for event in trace.by_kind("step"):
        print(event.export_line())
    print(f"steps executed: {count}, is_done: {done}")


def _cmd_validate(args) -> int:
    try:
        spec = parse_architecture(Path(args.file).read_text(encoding="utf-8"))
    except OSError as exc:
        print(f"cannot read {args.file}: {exc}", file=sys.stderr)
        return 1
    except ArchitectureError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 1
    findings = validate(spec)
    for finding in findings:
        print(finding)
    errors = sum(1 for f in findings if f.severity == "error")
    print(f"{errors} errors")
    return 0 if errors == 0 else 1


def _cmd_run(args) -> int:
    trace_path = args.trace
    if trace_path is None:
        trace_path = Path(args.scenario).with_suffix(".trace.txt").name
    log_dir = Path(trace_path).resolve().parent
    result = run_scenario(
        args.arch, args.accounts, args.scenario,
        atms=args.atms, timeout_ms=args.timeout_ms,
        trace_path=trace_path, log_dir=log_dir, seed=args.seed,
    )
    if result.error is not None:
        print(f"error: {result.error}", file=sys.stderr)
    if result.trace is not None:
        print(f"trace: {trace_path} ({len(result.trace)} events)")
        for path in result.log_paths:
            print(f"log: {path}")
        print(f"dispensed: {result.dispensed_total} cents")
    return result.exit_code


def _cmd_demo(args) -> int:
    n = args.n
    if args.pattern in ("buffer", "queue"):
        _demo_pipe(args.pattern, n)
    elif args.pattern == "reply":
        _demo_reply(n)
    elif args.pattern == "callback":
        _demo_callback(n)
    else:
        _demo_periodic(n)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="confab",
        description="Run, validate, and demo component/connector systems.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_validate = sub.add_parser("validate", help="check an architecture file")
    p_validate.add_argument("file")
    p_validate.set_defaults(func=_cmd_validate)

    p_run = sub.add_parser("run", help="run a scripted scenario")
    p_run.add_argument("--arch", required=True)
    p_run.add_argument("--accounts", required=True)
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--atms", type=int, default=1)
    p_run.add_argument("--timeout-ms", type=int, default=10_000)
    p_run.add_argument("--trace", default=None)
    p_run.add_argument("--seed", type=int, default=None,
                       help="seed for scripted-source jitter only")
    p_run.set_defaults(func=_cmd_run)

    p_demo = sub.add_parser("demo", help="print one pattern's protocol trace")
    p_demo.add_argument("--pattern", required=True, choices=_DEMO_PATTERNS)
    p_demo.add_argument("--n", type=int, default=3)
    p_demo.set_defaults(func=_cmd_demo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
