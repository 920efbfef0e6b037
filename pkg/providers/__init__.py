# providers/__init__.py
"""
Dataset source selection. A path of the form ``synthetic:key=value,...``
builds a SyntheticProvider; anything else is a delimited file.
"""
from __future__ import annotations

from typing import Dict, Union

from models import DatasetSchema
from providers.delimited_provider import DelimitedProvider, RawDataset
from providers.synthetic_provider import SyntheticProvider
from services.errors import ConfigError

SYNTHETIC_PREFIX = "synthetic:"


def _synthetic_args(spec: str) -> Dict[str, int]:
    args: Dict[str, int] = {}
    for item in filter(None, spec.split(",")):
        key, _, value = item.partition("=")
        if key not in ("examples", "classes", "vocab_size", "length", "seed"):
            raise ConfigError(f"unknown synthetic dataset option {key!r}")
        try:
            args[key] = int(value)
        except ValueError:
            raise ConfigError(f"synthetic dataset option {key} needs an integer, got {value!r}")
    return args


def provider_for(path: str, schema: DatasetSchema) -> Union[DelimitedProvider, SyntheticProvider]:
    if path.startswith(SYNTHETIC_PREFIX):
        return SyntheticProvider(**_synthetic_args(path[len(SYNTHETIC_PREFIX):]))
    return DelimitedProvider(schema)


def load_dataset(path: str, schema: DatasetSchema) -> RawDataset:
    return provider_for(path, schema).load(path)


__all__ = ["DelimitedProvider", "RawDataset", "SyntheticProvider", "load_dataset", "provider_for"]
