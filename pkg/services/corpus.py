# services/corpus.py
"""
From configured dataset files to encoded batches: label naming, vocabulary,
embedding table and padding, shared by train, eval and predict.
"""
from __future__ import annotations

import logging
import regex as re
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from models import RunConfig
from providers import RawDataset, load_dataset
from services.errors import ConfigError, ContractError
from services.text_pipeline import (
    EmbeddingTable,
    EncodedBatch,
    Vocabulary,
    build_vocab,
    encode,
    encode_batch,
    load_embeddings,
    prepare_texts,
    random_embeddings,
    read_word_vectors,
    tokenize,
    clean_tweet,
)

log = logging.getLogger("ecga.corpus")


def _natural_key(label: str):
    return [int(part) if part.isdigit() else part for part in re.split(r"(\d+)", label)]


def resolve_label_names(raw_labels: Sequence[str], configured: Optional[Sequence[str]]) -> List[str]:
    """Configured names fix the class order; otherwise the observed labels in natural sort order."""
    seen = set(raw_labels)
    if configured:
        unknown = sorted(seen - set(configured))
        if unknown:
            raise ConfigError(f"label_names: dataset label {unknown[0]!r} is not declared")
        names = list(configured)
    else:
        names = sorted(seen, key=_natural_key)
    if len(names) < 2:
        raise ConfigError(f"need at least 2 classes, found {names}")
    return names


def label_ids(raw_labels: Sequence[str], names: Sequence[str]) -> np.ndarray:
    index = {name: i for i, name in enumerate(names)}
    missing = [lab for lab in raw_labels if lab not in index]
    if missing:
        raise ContractError(f"label {missing[0]!r} is not one of the model's classes {list(names)}")
    return np.array([index[lab] for lab in raw_labels], dtype=np.int64)


def tokens_of(text: str, clean: bool) -> List[str]:
    return tokenize(clean_tweet(text) if clean else text)


def encode_text(text: str, vocab: Vocabulary, config: RunConfig) -> np.ndarray:
    return encode(tokens_of(text, config.clean_text), vocab, config.pad_length)


def encode_raw(raw: RawDataset, vocab: Vocabulary, names: Sequence[str], config: RunConfig) -> EncodedBatch:
    docs = prepare_texts(raw.texts, config.clean_text)
    return encode_batch(docs, label_ids(raw.labels, names).tolist(), vocab, config.pad_length)


def encode_dataset(path: str, config: RunConfig, vocab: Vocabulary, names: Sequence[str]) -> EncodedBatch:
    return encode_raw(load_dataset(path, config.dataset_schema()), vocab, names, config)


@dataclass
class Corpus:
    vocab: Vocabulary
    table: EmbeddingTable
    label_names: List[str]
    train: EncodedBatch
    test: Optional[EncodedBatch] = None


def build_corpus(config: RunConfig, rng: np.random.Generator) -> Corpus:
    """
    Vocabulary from the training split only, optionally restricted to words
    the embedding file covers. Without an embedding file the table is a
    seeded random one of width config.embedding_dim.
    """
    if not config.train_path:
        raise ConfigError("train_path is not set")
    schema = config.dataset_schema()
    raw = load_dataset(config.train_path, schema)
    names = resolve_label_names(raw.labels, config.label_names)
    docs = prepare_texts(raw.texts, config.clean_text)

    vectors = read_word_vectors(config.embedding_path) if config.embedding_path else None
    allowed = None
    if config.restrict_to_embeddings and vectors is not None:
        allowed = set(vectors.key_to_index)
    vocab = build_vocab(docs, config.vocab_cap, allowed)
    if vectors is not None:
        table = load_embeddings(vectors, vocab)
    else:
        table = random_embeddings(vocab, config.embedding_dim, rng)
    log.info("vocabulary %d tokens, %d classes %s", len(vocab), len(names), names)

    train = encode_batch(docs, label_ids(raw.labels, names).tolist(), vocab, config.pad_length)
    test = None
    if config.test_path:
        test = encode_raw(load_dataset(config.test_path, schema), vocab, names, config)
    return Corpus(vocab=vocab, table=table, label_names=names, train=train, test=test)
