"""Residential battery policy search: simulator, LP benchmarks, prompts and search loop."""

import json

from ._aps import *  # noqa: F401,F403
from ._aps import __version__, protocol, run_search as _run_search


def run_search(config, run_dir):
    """Run a search. `config` is a dict or JSON string with the manifest schema."""
    if not isinstance(config, str):
        config = json.dumps(config)
    return _run_search(config, str(run_dir))
