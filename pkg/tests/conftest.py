from pathlib import Path

import pytest

from evimc.model import load_model, parse_model

DATA = Path(__file__).resolve().parents[1] / "src" / "evimc" / "data"

ACCEPTANCE_LINES: list[str] = []


def toy_document(d1="x1", d2="0.5", mean=0.6, sd=1.0):
    return {
        "title": "toy",
        "value_units": "value",
        "variables": [{"name": "x1", "dist": {"kind": "normal", "mean": mean, "sd": sd}}],
        "decisions": [{"name": "d1", "value": d1}, {"name": "d2", "value": d2}],
    }


@pytest.fixture
def toy_model():
    return parse_model(toy_document())


@pytest.fixture(scope="session")
def demo_model():
    return load_model(DATA / "evacuation_demo.json")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
