"""Run configuration: YAML file merged over built-in defaults, then flag overrides.

Precedence, lowest first: defaults below < ``--config`` file < ``--set key=value``
overrides < dedicated flags (``--seed``, ``--data``, ...).  ``JAMLOC_DATA_DIR``
only fills the data root when neither the file nor a flag names one.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from pathlib import Path

import yaml

DEFAULTS: dict = {
    "seed": 0,
    "device": "cpu",
    "data": None,
    "synth": {
        "domain": "source",
        "n_positions": 16,
        "samples_per_position": 40,
        "position_seed": 99,
        # target layouts keep clear of this many source grid positions
        "source_positions": 16,
        "align_first_path": True,
    },
    "split": {"ratios": [0.7, 0.15, 0.15], "n_holdout": 3000},
    "preprocess": {"taps": 100, "granularity": "per_tap"},
    "model": {"noise_sigma": 0.6, "noise_mode": "stages"},
    "pretrain": {"epochs": 30, "batch_size": 256, "base_lr": 1e-3},
    "align": {"epochs": 40, "batch_size": 256, "base_lr": 1e-3, "patience": 5, "min_delta": 0.005,
              "min_epochs": 10, "lambda_start": 0.05, "lambda_end": 0.2, "adversarial": True},
    "finetune": {"epochs": 200, "batch_size": 256, "base_lr": 3e-4, "head_lr": 3e-2,
                 "alpha_start": 0.5, "alpha_end": 0.1, "beta": 1.0,
                 "lambda_start": 0.0, "lambda_end": 0.5, "adversarial": True},
    "rec_reduction": "mean",
    "baseline": {"model": "knn", "task": "regress", "params": {}},
    "importance": {"bins": 16},
    "probe": {"k": 5, "folds": 5},
}


class ConfigError(ValueError):
    pass


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _set_path(cfg: dict, dotted: str, raw: str) -> None:
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            raise ConfigError(f"unknown config section {dotted!r}")
        node = node[k]
    if keys[-1] not in node:
        raise ConfigError(f"unknown config key {dotted!r}")
    node[keys[-1]] = yaml.safe_load(raw)


def load_config(path: str | Path | None = None, overrides: list[str] | None = None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            loaded = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a mapping")
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = deep_merge(cfg, loaded)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        _set_path(cfg, k.strip(), v)
    return cfg


def resolve_data_dir(cfg: dict, flag: str | None) -> str | None:
    return flag or cfg.get("data") or os.environ.get("JAMLOC_DATA_DIR")


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
