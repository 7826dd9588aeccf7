import json

from ._core import *  # noqa: F401,F403
from ._core import __version__, run_experiment as _run_experiment


def run_experiment(kind, seed=1, config=None, inputs=None, keep_going=False):
    """Run one experiment and return the report as a dict."""
    text = _run_experiment(kind, seed, json.dumps(config) if config else "", inputs or {}, keep_going)
    return json.loads(text)
