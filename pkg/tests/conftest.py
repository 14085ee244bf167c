import importlib.resources

import pytest

from opstriage.scenario import ScenarioSpec


def scenario_path(name: str) -> str:
    return str(importlib.resources.files("opstriage") / "scenarios" / name)


@pytest.fixture(scope="session")
def case_study_spec() -> ScenarioSpec:
    return ScenarioSpec.load(scenario_path("case_study.json"))


@pytest.fixture(scope="session")
def generic_spec() -> ScenarioSpec:
    return ScenarioSpec.load(scenario_path("generic_faults.json"))


@pytest.fixture(scope="session")
def throttle_spec() -> ScenarioSpec:
    return ScenarioSpec.load(scenario_path("throttle_probe.json"))
