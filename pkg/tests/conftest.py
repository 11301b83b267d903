import numpy as np
import pytest

from pulseforge.network import save_checkpoint
from pulseforge.quantum import SystemConfig
from pulseforge.training import CostConfig, train

# criterion number -> [title, outcomes]
_CRITERIA: dict = {}
# criterion number -> measured values worth reporting next to the verdict
_NOTES: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): benchmark criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        number, title = marker.args
        _CRITERIA.setdefault(number, [title, []])[1].append(rep.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "benchmark criteria")
    for number in sorted(_CRITERIA):
        title, outcomes = _CRITERIA[number]
        if "failed" in outcomes:
            verdict = "FAIL"
        elif all(o == "skipped" for o in outcomes):
            verdict = "SKIP"
        else:
            verdict = "PASS"
        terminalreporter.write_line(f"criterion {number:>2} {verdict}  {title} ({len(outcomes)} checks)")
        for note in _NOTES.get(number, []):
            terminalreporter.write_line(f"              {note}")


@pytest.fixture
def measured(request):
    """Call with a string to attach a measured value to this test's criterion line."""
    marker = request.node.get_closest_marker("criterion")
    number = marker.args[0] if marker else None
    return lambda text: _NOTES.setdefault(number, []).append(text)


QUICK = CostConfig(batch_size=32, max_epochs=30, train_size=128, validation_size=32, learning_rate=1e-2)


@pytest.fixture(scope="session")
def small_trained(tmp_path_factory):
    """A briefly trained qubit controller (N=3, narrow hidden layers) plus its checkpoint path."""
    system = SystemConfig(n=2, num_pulses=3)
    model, log = train(QUICK, system, 11, hidden_sizes=(32, 32))
    path = tmp_path_factory.mktemp("model") / "checkpoint.json"
    save_checkpoint(model, path)
    return model, system, path


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
