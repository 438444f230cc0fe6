"""Unrolled group synchronization: solvers, unrolled networks and experiment harness."""

import json

from ._core import *  # noqa: F401,F403
from ._core import __version__, figure_config, run_experiment as _run_experiment


def run_experiment(config, threads=1):
    """Run an experiment given as a dict or JSON string; returns a list of row dicts."""
    if not isinstance(config, str):
        config = json.dumps(config)
    return _run_experiment(config, threads)


def figure_configs(figure_id, scale="desk", seed=0):
    """Configs behind a figure id (fig2 ... fig10, table1) as dicts."""
    return [json.loads(c) for c in figure_config(figure_id, scale, seed)]
