import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

CRITERIA: dict = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line per criterion; the outcome is the test outcome."""
    holder = {}

    def register(number, label):
        holder["key"] = (number, label)

    yield register
    if "key" in holder:
        rep = getattr(request.node, "rep_call", None)
        CRITERIA[holder["key"]] = CRITERIA.get(holder["key"], True) and rep is not None and rep.passed


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for (num, label), ok in sorted(CRITERIA.items()):
        terminalreporter.write_line(f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {label}")
