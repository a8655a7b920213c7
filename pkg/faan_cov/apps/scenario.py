# apps/scenario.py

# Scenario configs: load from JSON and merge each entry over "default".

import json
from pathlib import Path
from typing import Any

from faan_cov.apps.doa import ArrayScenario
from faan_cov.core.utils import asset_path
from faan_cov.errors import InvalidInputError


def load_entry(json_path: Path, name: str) -> dict[str, Any]:
    """Load one named entry merged over defaults:
    {
      "default": { "n": 15, "freqs": [0.2, 0.25], "snr_db": 0.0 },
      "scenario": { "N": 80 },
      "low_snr": { "N": 80, "snr_db": -6.0 }
    }
    A missing file yields an empty entry.
    """
    if not json_path.exists():
        return {}

    try:
        data = json.loads(json_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{json_path}: {exc}") from exc
    default = data.get("default", {})
    if name != "default" and name not in data:
        raise InvalidInputError(f"{json_path}: no entry named {name!r}")
    return {**default, **data.get(name, {})}


def load_scenario(
    json_path: Path | None = None, name: str = "scenario", **overrides: Any
) -> ArrayScenario:
    """Bundled scenario unless a path is given; keyword overrides win over the file."""
    path = json_path if json_path is not None else asset_path("scenarios", "doa.json")
    entry = {**load_entry(path, name), **overrides}
    try:
        return ArrayScenario(**entry)
    except TypeError as exc:
        raise InvalidInputError(f"{path}: bad scenario entry {name!r} ({exc})") from exc
