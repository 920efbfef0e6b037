# providers/delimited_provider.py
"""
Delimited text datasets (csv/tsv) read with pandas, shaped by a DatasetSchema.
"""
from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field
from typing import List

import pandas as pd

from models import Column, DatasetSchema
from services.errors import ConfigError, MissingFileError, ParseError

log = logging.getLogger("ecga.providers")


@dataclass
class RawDataset:
    texts: List[str] = field(default_factory=list)
    labels: List[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.texts)


class DelimitedProvider:
    """
    One row per example. Text columns are joined with a single space
    (title + abstract style). Rows with a blank label, a label listed in
    ``drop_labels``, or a confidence at or below ``min_confidence`` are dropped.
    """

    def __init__(self, schema: DatasetSchema) -> None:
        self.schema = schema

    def _column(self, frame: pd.DataFrame, col: Column, path: str) -> pd.Series:
        if isinstance(col, int):
            if col < 0 or col >= frame.shape[1]:
                raise ConfigError(f"{path}: column {col} not present ({frame.shape[1]} columns)")
            return frame.iloc[:, col]
        if col not in frame.columns:
            raise ConfigError(f"{path}: column {col!r} not present (have {list(frame.columns)})")
        return frame[col]

    def _read(self, path: str) -> pd.DataFrame:
        if not os.path.isfile(path):
            raise MissingFileError(f"dataset not found: {path}")
        try:
            return pd.read_csv(
                path,
                sep=self.schema.delimiter,
                header=0 if self.schema.has_header else None,
                dtype=str,
                keep_default_na=False,
                quoting=csv.QUOTE_MINIMAL,
                encoding="utf-8",
            )
        except pd.errors.EmptyDataError:
            raise ConfigError(f"{path}: dataset file is empty")
        except (pd.errors.ParserError, UnicodeDecodeError) as e:
            raise ParseError(f"{path}: {e}")

    def _require_fields(self, frame: pd.DataFrame, path: str) -> None:
        """Short rows leave trailing columns empty (NaN); a row missing a needed column is malformed."""
        needed = [self.schema.label_column, *self.schema.text_columns]
        if self.schema.confidence_column is not None and self.schema.min_confidence is not None:
            needed.append(self.schema.confidence_column)
        for col in needed:
            missing = self._column(frame, col, path).isna()
            if missing.any():
                row = int(missing.to_numpy().nonzero()[0][0])
                line = row + 1 + (1 if self.schema.has_header else 0)
                filled = int(frame.iloc[row].notna().sum())
                raise ParseError(f"{path}:{line}: column {col!r} missing ({filled} of {frame.shape[1]} fields)")

    def load(self, path: str) -> RawDataset:
        frame = self._read(path)
        self._require_fields(frame, path)
        labels = self._column(frame, self.schema.label_column, path).str.strip()
        texts = self._column(frame, self.schema.text_columns[0], path)
        for col in self.schema.text_columns[1:]:
            texts = texts.str.cat(self._column(frame, col, path), sep=" ")

        keep = labels != ""
        if self.schema.drop_labels:
            keep &= ~labels.isin(self.schema.drop_labels)
        if self.schema.confidence_column is not None and self.schema.min_confidence is not None:
            conf = pd.to_numeric(self._column(frame, self.schema.confidence_column, path), errors="coerce")
            keep &= conf > self.schema.min_confidence
        dropped = int((~keep).sum())
        labels, texts = labels[keep], texts[keep]
        if len(labels) == 0:
            raise ConfigError(f"{path}: no usable rows")
        log.info("loaded %s: %d rows (%d dropped)", path, len(labels), dropped)
        return RawDataset(texts=texts.tolist(), labels=labels.tolist())
