import time
from pathlib import Path

import hypothesis

from confab.architecture import Binding, ComponentSpec

hypothesis.settings.register_profile("suite", deadline=None, max_examples=40)
hypothesis.settings.load_profile("suite")

REPO = Path(__file__).resolve().parent.parent
SCENARIOS = REPO / "scenarios"


def wait_until(pred, timeout=3.0, interval=0.002):
    """Poll until *pred* is truthy; False on timeout. Test-side sync only."""
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if pred():
            return True
        time.sleep(interval)
    return pred()


def spec_of(name, role="control", concurrency="demand_driven", bindings=(),
            host=None, params=None):
    return ComponentSpec(
        name=name, role=role, concurrency=concurrency, host=host,
        bindings=[Binding(*b) for b in bindings],
        params=dict(params or {}),
    )


def pytest_runtest_logreport(report):
    # one visible pass/fail line per acceptance criterion
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    verdict = "PASS" if report.passed else "FAIL"
    print(f"\nACCEPTANCE {name}: {verdict}", flush=True)
