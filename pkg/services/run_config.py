# services/run_config.py
"""
Preset tables and config resolution.

Resolution order: preset -> architecture-variant sizes for that preset/topic
-> config file -> --set overrides -> --seed / --out.
"""
from __future__ import annotations

import json
import logging
import os
from typing import Any, Dict, Iterable, List, Optional, Tuple

from pydantic import ValidationError

from models import RunConfig
from services.errors import ConfigError, MissingFileError, ParseError

log = logging.getLogger("ecga.config")

_SHARED: Dict[str, Any] = {
    "batch_size": 64,
    "epochs": 10,
    "eps": 1e-8,
    "seed": 13,
    "valid_fraction": 0.1,
    "stratified": True,
    "training": "joint",
    "conv_activation": "relu",
    "architecture": "ecga",
}

_TSV = {"delimiter": "\t", "has_header": True, "label_column": "label", "text_columns": ["text"]}

PRESETS: Dict[str, Dict[str, Any]] = {
    "dbpedia": {
        "delimiter": ",", "has_header": False, "label_column": 0, "text_columns": [1, 2],
        "pad_length": 60, "restrict_to_embeddings": True, "embedding_dim": 300,
        "kernel_sizes": [2, 3], "filters": 256, "units": 128, "dropout": 0.3,
        "lr": 1e-4, "beta1": 0.7, "beta2": 0.99,
    },
    "argmine_task_a": {
        **_TSV,
        "pad_length": 60, "restrict_to_embeddings": True, "embedding_dim": 300,
        "kernel_sizes": [2, 3], "filters": 256, "units": 128, "dropout": 0.5,
        "lr": 1e-3, "beta1": 0.9, "beta2": 0.999,
    },
    "argmine_task_c": {
        **_TSV,
        "pad_length": 60, "restrict_to_embeddings": True, "embedding_dim": 300,
        "kernel_sizes": [2, 3], "filters": 512, "units": 256, "dropout": 0.5,
        "lr": 1e-3, "beta1": 0.9, "beta2": 0.999,
    },
    "churn": {
        **_TSV,
        "pad_length": 50, "vocab_cap": 1000, "embedding_dim": 200, "clean_text": True,
        "kernel_sizes": [1, 2], "filters": 128, "units": 64, "dropout": 0.3,
        "lr": 1e-3, "beta1": 0.9, "beta2": 0.999,
        "kfold": 10, "selection_metric": "macro_f1", "positive_label": "1",
    },
    "custom": {
        **_TSV,
        "pad_length": 50, "embedding_dim": 50,
        "kernel_sizes": [2, 3], "filters": 64, "units": 32, "dropout": 0.3,
        "lr": 1e-3, "beta1": 0.9, "beta2": 0.999,
    },
    "tiny": {
        **_TSV,
        "pad_length": 6, "embedding_dim": 3, "label_names": ["a", "b", "c"],
        "kernel_sizes": [1, 2], "filters": 4, "units": 2, "dropout": 0.0,
        "lr": 1e-3, "beta1": 0.9, "beta2": 0.999,
    },
}


def variant_sizes(preset: str, architecture: str, topic: Optional[str]) -> Dict[str, Any]:
    """Baseline sizes for the single-learner variants; ecga and presets without a table get none."""
    if architecture == "ecga":
        return {}
    if preset == "dbpedia":
        if architecture == "cnn":
            return {"kernel_sizes": [2], "filters": 256}
        return {"units": 128}
    if preset in ("argmine_task_a", "argmine_task_c"):
        wide = topic in ("D", "I")
        if architecture == "cnn":
            return {"kernel_sizes": [2], "filters": 512 if wide else 256}
        return {"units": 256 if wide else 128}
    if preset == "churn":
        if architecture == "cnn":
            return {"kernel_sizes": [3], "filters": 64}
        if architecture == "bigru_att":
            return {"units": 64}
        return {"kernel_sizes": [2], "filters": 128, "units": 64}
    return {}


def parse_value(raw: str) -> Any:
    """JSON literal, falling back to the raw string."""
    text = raw.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_override(item: str) -> Tuple[str, Any]:
    key, sep, value = item.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"--set expects key=value, got {item!r}")
    return key, parse_value(value)


def read_config_file(path: str) -> Dict[str, Any]:
    if not os.path.isfile(path):
        raise MissingFileError(f"config file not found: {path}")
    values: Dict[str, Any] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            key, sep, value = stripped.partition("=")
            if not sep or not key.strip():
                raise ParseError(f"{path}:{lineno}: expected 'key = value'")
            values[key.strip()] = parse_value(value)
    return values


def write_config_file(path: str, config: RunConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# resolved run config, preset {config.preset}\n")
        for key, value in config.model_dump().items():
            fh.write(f"{key} = {json.dumps(value)}\n")


def _check_keys(values: Dict[str, Any], source: str) -> None:
    unknown = sorted(set(values) - set(RunConfig.model_fields))
    if unknown:
        raise ConfigError(f"unknown config key {unknown[0]!r} in {source}")


def validate_config(values: Dict[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(values)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(p) for p in first.get("loc", ())) or "config"
        raise ConfigError(f"invalid config value for {field}: {first.get('msg')}")


def resolve_config(
    preset: Optional[str] = None,
    config_path: Optional[str] = None,
    overrides: Iterable[str] = (),
    seed: Optional[int] = None,
    out: Optional[str] = None,
) -> RunConfig:
    file_values = read_config_file(config_path) if config_path else {}
    _check_keys(file_values, config_path or "config file")
    set_values: List[Tuple[str, Any]] = [parse_override(item) for item in overrides]
    _check_keys(dict(set_values), "--set")

    name = preset or dict(set_values).get("preset") or file_values.get("preset") or "custom"
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")

    user: Dict[str, Any] = {**file_values, **dict(set_values)}
    architecture = user.get("architecture", _SHARED["architecture"])
    topic = user.get("topic")

    values: Dict[str, Any] = {**_SHARED, **PRESETS[name], "preset": name}
    values.update(variant_sizes(name, architecture, topic))
    values.update(user)
    values["preset"] = name
    if seed is not None:
        values["seed"] = seed
    if out is not None:
        values["out_dir"] = out
    config = validate_config(values)
    log.debug("resolved config: preset=%s architecture=%s", config.preset, config.architecture)
    return config
