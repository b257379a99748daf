import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from inventor_linker.cli import write_demo_config  # noqa: E402
from inventor_linker.config import load_config  # noqa: E402
from inventor_linker.pipeline import Pipeline  # noqa: E402


@pytest.fixture
def demo_pipeline(tmp_path):
    """Factory: a Pipeline over the bundled demo data in a fresh workdir."""

    def make(workdir=None, workers=1, **overrides):
        cfg = load_config(write_demo_config(workdir or tmp_path / "work", workers=workers))
        for key, value in overrides.items():
            setattr(cfg, key, value)
        return Pipeline(cfg, echo=lambda msg: None)

    return make


# --- acceptance summary --------------------------------------------------------

_ACCEPTANCE: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        _ACCEPTANCE[name] = "PASS" if report.outcome == "passed" else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"{_ACCEPTANCE[name]}  {name}")
