"""Python bindings for the ragpoison poisoning/evaluation toolkit."""

import json
import os

from ._core import (
    ToyBackend,
    __version__,
    dedup,
    inject,
    kb_summary,
    paraphrase,
    preprocess,
    probe,
    synth_kb,
)
from . import _core

__all__ = [
    "ToyBackend",
    "__version__",
    "craft_attack",
    "dedup",
    "inject",
    "kb_summary",
    "paraphrase",
    "preprocess",
    "probe",
    "run_experiment",
    "synth_kb",
]


def _config_text(config):
    if isinstance(config, dict):
        return json.dumps(config)
    if isinstance(config, (str, os.PathLike)) and os.path.isfile(config):
        # Relative kb paths in a config file are relative to the file.
        base = os.path.dirname(os.path.abspath(config))
        with open(config) as f:
            cfg = json.load(f)
        for section, key in (("kb", "path"), ("attack", "entries_path")):
            value = cfg.get(section, {}).get(key)
            if value and not os.path.isabs(value):
                cfg[section][key] = os.path.join(base, value)
        return json.dumps(cfg)
    raise ValueError("config must be a dict or a path to a JSON file")


def run_experiment(config=None, seed=None, out=None):
    """Runs an evaluation and returns the report as a dict.

    `config` is a dict or a config file path; `out` optionally receives
    report.json, records.csv, report.md and attack_manifest.json.
    """
    text = _config_text(config if config is not None else {})
    return json.loads(_core.run_experiment_json(text, seed, None if out is None else os.fspath(out)))


def craft_attack(config, out):
    """Crafts the first trial's malicious entries for config's kb.path into `out`."""
    return _core.craft_attack_json(_config_text(config), os.fspath(out))
