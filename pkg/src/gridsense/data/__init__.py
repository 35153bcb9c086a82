"""Shipped data files: the converted IEEE 123-bus feeder and example scenarios."""

from importlib.resources import files


def ieee123_path():
    """Filesystem path of the single-phase IEEE 123-bus feeder description."""
    return str(files(__name__) / "ieee123.json")


def scenario_path(name: str):
    """Filesystem path of a shipped scenario file (without .json suffix)."""
    return str(files(__name__) / "scenarios" / f"{name}.json")
