"""Single-file run configuration with strict key checking.

Every key has a documented default; any unknown section or key aborts
before work begins. The TGRPO_SEED environment variable overrides the
configured seed.
"""

from __future__ import annotations

import copy
import json
import os
from typing import Any

from .errors import ConfigError

DEFAULTS: dict[str, dict[str, Any]] = {
    "graph": {
        "facts": None,
        "labels": None,
        "relation_allowlist": None,
    },
    "retrieval": {
        "p": 16,
        "scorer": "lexical",
        "remote_url": None,
    },
    "policy": {
        "remote_retries": 2,
        "remote_timeout": 10.0,
        "remote_max_in_flight": 8,
    },
    "sampler": {
        "temperatures": [0.2, 0.7, 1.0],
        "per_temp": 4,
        "sft_epochs": 30,
        "sft_lr": 0.5,
        "sft_batch_size": 32,
    },
    "search": {
        "g": 4,
        "max_depth": 3,
        "temperature": 1.0,
        "group_budget": 64,
    },
    "grpo": {
        "eps_clip": 0.2,
        "beta_kl": 0.04,
        "mu": 2,
        "outer_steps": 100,
        "lr": 0.1,
        "std_floor": 1e-8,
        "gamma": 1.0,
        "questions_per_step": 8,
        "decision_budget": None,
    },
    "eval": {
        "n_rollouts": 16,
        "temperature": 1.0,
    },
    "runtime": {
        "seed": 0,
        "workers": 1,
    },
}


def _merge_strict(defaults: dict, overrides: dict, path: str) -> dict:
    merged = copy.deepcopy(defaults)
    for key, value in overrides.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key {path}{key!r}")
        if isinstance(defaults[key], dict) and isinstance(value, dict):
            merged[key] = _merge_strict(defaults[key], value, f"{path}{key}.")
        else:
            merged[key] = value
    return merged


def load_config(path: str | None) -> dict:
    """Defaults overlaid with the config file; strict about unknown keys."""
    if path is None:
        cfg = copy.deepcopy(DEFAULTS)
    else:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        cfg = _merge_strict(DEFAULTS, doc, "")
    env_seed = os.environ.get("TGRPO_SEED")
    if env_seed is not None:
        try:
            cfg["runtime"]["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(f"TGRPO_SEED must be an integer, got {env_seed!r}")
    return cfg
