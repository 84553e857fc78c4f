import numpy as np
import pytest

from interbench.datagen import default_spec, generate


@pytest.fixture(scope="session")
def small_dataset():
    """Default schema, 40 train and 12 eval sessions."""
    return generate(default_spec(n_train_sessions=40, n_eval_sessions=12), seed=3)


@pytest.fixture(scope="session")
def planted_dataset():
    """Full desk-scale planted dataset: 50k train rows, 10k eval rows."""
    return generate(default_spec(), seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance reporting: one PASS/FAIL line per criterion ------------------

_CRITERIA: dict[int, tuple[bool, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when == "teardown" or (rep.when == "setup" and rep.passed):
        return
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    if rep.failed:
        msg = str(rep.longrepr.reprcrash.message) if hasattr(rep.longrepr, "reprcrash") else "error"
        detail = f"{detail}; {msg.splitlines()[0]}" if detail else msg.splitlines()[0]
    _CRITERIA[mark.args[0]] = (rep.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
