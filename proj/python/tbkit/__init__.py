"""Python access to the tbx experiments."""

import json

from ._core import (
    ConfigError,
    GridParams,
    InvariantError,
    PreconditionError,
    estimate_pi_bad,
    schema_version,
    subcommands,
    tool_version,
)
from ._core import run_json as _run_json

__all__ = [
    "ConfigError",
    "GridParams",
    "InvariantError",
    "PreconditionError",
    "estimate_pi_bad",
    "run",
    "schema_version",
    "subcommands",
    "tool_version",
]


def run(name, config=None, seed=None):
    """Run an experiment and return the parsed report.

    ``config`` is either key=value text or a mapping of keys to values.
    """
    if isinstance(config, dict):
        config = "\n".join(f"{k} = {v}" for k, v in config.items())
    return json.loads(_run_json(name, config or "", seed))
