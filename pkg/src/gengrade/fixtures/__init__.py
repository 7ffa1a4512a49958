"""Bundled grammar fixtures and a loader keyed by fixture name."""

from importlib import resources

from ..grammar import Simulator, load_simulator

BUNDLED = ("countdown-mini", "liftoff-java")


def fixture_text(name: str) -> str:
    if name not in BUNDLED:
        raise KeyError(f"no bundled fixture named {name!r}")
    return resources.files(__package__).joinpath(f"{name}.json").read_text("utf-8")


def load_fixture(name: str) -> Simulator:
    return load_simulator(fixture_text(name))
