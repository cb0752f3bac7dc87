import pytest

# criterion number -> list of (check, passed, detail); filled by test_acceptance
ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = {}


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", help="run convergence studies")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="convergence study; use --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[n]
        ok = all(c[1] for c in checks)
        failed = [f"{c[0]} ({c[2]})" for c in checks if not c[1]]
        tail = "; failing: " + "; ".join(failed) if failed else ""
        tr.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} [{len(checks)} checks]{tail}")
