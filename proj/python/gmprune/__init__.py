"""Geometric-median filter pruning with Bayesian per-group rate search."""

import json
import os

from ._gmprune import (
    ConfigError,
    StageError,
    bayes_optimize,
    geometric_median,
    make_synthetic,
    prune_count,
    rank_filters,
    sparsity_penalty,
)
from . import _gmprune

__all__ = [
    "ConfigError",
    "StageError",
    "bayes_optimize",
    "compare",
    "evaluate_checkpoint",
    "geometric_median",
    "load_config",
    "make_synthetic",
    "prune_count",
    "rank_filters",
    "run",
    "sparsity_penalty",
]


def _config_text(config):
    if config is None:
        return "{}"
    if isinstance(config, (str, os.PathLike)):
        with open(config, encoding="utf-8") as fh:
            return fh.read()
    return json.dumps(config)


def load_config(config=None):
    """Validated config (dict, path or None) with every default filled in."""
    return json.loads(_gmprune.normalize_config(_config_text(config)))


def run(config=None, out_dir=""):
    """Runs the full pipeline and returns the run report as a dict."""
    return json.loads(_gmprune.run(_config_text(config), os.fspath(out_dir)))


def compare(config=None, seeds=(1, 2, 3, 4, 5), out_dir=""):
    """Runs uniform and searched rates for every seed; returns the comparison rows."""
    text = _gmprune.compare(_config_text(config), list(seeds), os.fspath(out_dir))
    lines = text.strip().splitlines()
    header = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        values = line.split(",")
        row = {"mode": values[0], "runs": int(values[1])}
        row.update({k: float(v) for k, v in zip(header[2:], values[2:])})
        rows.append(row)
    return rows


def evaluate_checkpoint(path, config=None):
    """Accuracy and sparsity of a saved network on the config's test data."""
    return _gmprune.evaluate_checkpoint(os.fspath(path), _config_text(config))
