from pathlib import Path

import pytest

from luckock.model import ModelSpec, PiecewiseLinear, power, uniform

MODELS = Path(__file__).resolve().parent.parent / "examples_models"


def load_example(name: str) -> ModelSpec:
    return ModelSpec.load(MODELS / f"{name}.json")


def piecewise_asymmetric() -> ModelSpec:
    return load_example("piecewise")


def closed_form_specs() -> dict[str, ModelSpec]:
    """Specs satisfying continuity and positive market-order rates."""
    return {
        "uniform_0.3_0.9": uniform(0.3, 0.9),
        "uniform_0.25_0.75": uniform(0.25, 0.75),
        "uniform_0.1_0.9": uniform(0.1, 0.9),
        "power_0.8_restricted": power(0.8, 0.15, 0.85),
        "power_2_restricted": power(2.0, 0.2, 0.9),
        "piecewise": piecewise_asymmetric(),
    }


@pytest.fixture
def models_dir() -> Path:
    return MODELS


@pytest.fixture(params=sorted(closed_form_specs()))
def closed_spec(request) -> ModelSpec:
    return closed_form_specs()[request.param]


@pytest.fixture
def atomic_spec() -> ModelSpec:
    return load_example("atomic")


def pytest_terminal_summary(terminalreporter):
    """List the acceptance verdicts after the run, one line per criterion."""
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.write_sep("=", "acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
