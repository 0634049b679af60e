"""Bundled scenario files for the two formation experiments."""
from importlib import resources
from pathlib import Path

NAMES = ("formation_edge_only", "formation_with_objectives")


def path(name: str) -> Path:
    """Filesystem path of a bundled scenario, with or without ``.json``."""
    if not name.endswith(".json"):
        name += ".json"
    return Path(str(resources.files(__name__).joinpath(name)))
