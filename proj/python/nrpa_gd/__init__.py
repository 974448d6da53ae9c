"""Python access to the NRPA dialogue planner."""

import json
import os

from . import _core
from ._core import (
    ConfigError,
    Error,
    EnvironmentError,
    PreconditionError,
    RenderError,
    compute_sl,
    episode_seed,
    softmax,
    tally_votes,
)

__all__ = [
    "ConfigError",
    "Error",
    "EnvironmentError",
    "PreconditionError",
    "RenderError",
    "compute_sl",
    "episode_seed",
    "plan",
    "reward",
    "run",
    "softmax",
    "summarize",
    "tally_votes",
    "win_rate",
]


def reward(terminal, turns, **spec):
    """Reward of a finished dialogue; `spec` overrides RewardSpec fields."""
    return _core.reward(terminal, turns, json.dumps(spec))


def plan(script_path, params=None, reward_spec=None):
    """Plans the first act of a scripted scenario."""
    return json.loads(
        _core.plan_json(os.fspath(script_path), json.dumps(params or {}), json.dumps(reward_spec or {}))
    )


def run(config_path, out_dir=None):
    """Runs a configuration and returns the run directory and metrics."""
    return json.loads(_core.run_json(os.fspath(config_path), os.fspath(out_dir) if out_dir else ""))


def summarize(episodes_path):
    """Metrics over a stored episodes.jsonl."""
    return json.loads(_core.summarize_json(os.fspath(episodes_path)))


def win_rate(verdicts, runs):
    """Win rate of A over equal blocks of "A" / "B" / "Tie" verdicts."""
    return json.loads(_core.win_rate_json(list(verdicts), runs))
