# services/text_pipeline.py
"""
Raw text -> fixed-length id sequences: tweet cleaning, tokenization,
vocabulary, padding/truncation and frozen pretrained embeddings.
"""
from __future__ import annotations

import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np
import regex as re
from gensim.models import KeyedVectors

from services.errors import ConfigError, ContractError, MissingFileError, ParseError
from services.tensor_autodiff import Tensor

log = logging.getLogger("ecga.text")

PAD, UNK = "<pad>", "<unk>"
PAD_ID, UNK_ID = 0, 1

# Substitution table, applied in this order, then lowercase + whitespace collapse.
#   URLs -> <url>, @mentions -> <user>, emoticons -> <smiley>, numbers -> <number>
_URL = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_USER = re.compile(r"@\w+")
_EYES = r"[8:=;]"
_NOSE = r"['`\-]?"
_SMILEY = re.compile(
    rf"(?<![\w<>])(?:{_EYES}{_NOSE}[)\](dDpP/\\|*]+|[)\](]+{_NOSE}{_EYES})(?![a-zA-Z0-9<>])|<3(?![0-9])"
)
_NUMBER = re.compile(r"(?<!\w)\d+(?:[.,:]\d+)*(?!\w)")
_SPACES = re.compile(r"\s+")

_TOKEN = re.compile(r"<(?:url|user|number|smiley)>|\w+|[^\w\s]")


def clean_tweet(text: str) -> str:
    text = _URL.sub("<url>", text)
    text = _USER.sub("<user>", text)
    text = _SMILEY.sub("<smiley>", text)
    text = _NUMBER.sub("<number>", text)
    return _SPACES.sub(" ", text.lower()).strip()


def tokenize(text: str) -> List[str]:
    """Words and standalone punctuation marks; cleaning placeholders stay whole."""
    return _TOKEN.findall(text)


def prepare_texts(texts: Iterable[str], clean: bool) -> List[List[str]]:
    return [tokenize(clean_tweet(t) if clean else t) for t in texts]


@dataclass
class Vocabulary:
    tokens: List[str]
    max_size: Optional[int] = None
    index: Dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.tokens[:2] != [PAD, UNK]:
            raise ContractError("vocabulary must start with the PAD and UNK tokens")
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ContractError("vocabulary tokens must be unique")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def id_of(self, token: str) -> int:
        return self.index.get(token, UNK_ID)


def build_vocab(
    corpus: Sequence[Sequence[str]],
    max_size: Optional[int] = None,
    allowed: Optional[Set[str]] = None,
) -> Vocabulary:
    """Frequency-ranked, ties broken lexicographically; PAD=0 and UNK=1 are not counted by the cap."""
    if max_size is not None and max_size < 1:
        raise ConfigError(f"vocab_cap must be >= 1, got {max_size}")
    if not corpus:
        raise ConfigError("build_vocab: empty corpus")
    counts = Counter(tok for doc in corpus for tok in doc if tok not in (PAD, UNK))
    if allowed is not None:
        counts = Counter({tok: c for tok, c in counts.items() if tok in allowed})
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    if max_size is not None:
        ranked = ranked[:max_size]
    return Vocabulary([PAD, UNK] + [tok for tok, _ in ranked], max_size=max_size)


def encode(tokens: Sequence[str], vocab: Vocabulary, n: int) -> np.ndarray:
    """Prefix-truncate or right-pad to exactly n ids."""
    if n < 1:
        raise ConfigError(f"pad length must be >= 1, got {n}")
    ids = np.full(n, PAD_ID, dtype=np.int64)
    for j, tok in enumerate(tokens[:n]):
        ids[j] = vocab.id_of(tok)
    return ids


@dataclass
class EncodedBatch:
    ids: np.ndarray       # [B, n] int64
    labels: np.ndarray    # [B] int64

    def __post_init__(self) -> None:
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.ids.ndim != 2 or self.labels.shape != (self.ids.shape[0],):
            raise ContractError(
                f"EncodedBatch: ids {list(self.ids.shape)} and labels {list(self.labels.shape)} disagree"
            )

    def __len__(self) -> int:
        return int(self.ids.shape[0])

    @property
    def pad_length(self) -> int:
        return int(self.ids.shape[1])

    def subset(self, rows: np.ndarray) -> "EncodedBatch":
        rows = np.asarray(rows, dtype=np.int64)
        return EncodedBatch(self.ids[rows], self.labels[rows])


def encode_batch(docs: Sequence[Sequence[str]], labels: Sequence[int], vocab: Vocabulary, n: int) -> EncodedBatch:
    ids = np.stack([encode(d, vocab, n) for d in docs]) if docs else np.zeros((0, n), dtype=np.int64)
    return EncodedBatch(ids, np.asarray(labels, dtype=np.int64))


@dataclass
class EmbeddingTable:
    matrix: Tensor           # [V, m], frozen
    coverage: float = 1.0

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]


def random_embeddings(vocab: Vocabulary, m: int, rng: np.random.Generator, scale: float = 0.1) -> EmbeddingTable:
    """Seeded stand-in when no vector file is configured. PAD and UNK rows are zero."""
    matrix = rng.normal(0.0, scale, size=(len(vocab), m))
    matrix[PAD_ID] = 0.0
    matrix[UNK_ID] = 0.0
    return EmbeddingTable(Tensor(matrix))


def _is_header(parts: List[str]) -> bool:
    return len(parts) == 2 and parts[0].isdigit() and parts[1].isdigit()


def _first_line(path: str) -> List[str]:
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        return fh.readline().split()


def _bad_line(path: str, header: bool) -> Optional[Tuple[int, str]]:
    """First line breaking the text format, with the reason; gensim reports neither."""
    dim: Optional[int] = None
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if lineno == 1 and header:
                dim = int(parts[1])
                continue
            if not parts:
                return lineno, "blank line"
            width = len(parts) - 1
            if dim is None:
                dim = width
            if width < 1 or width != dim:
                return lineno, f"expected {dim} values, found {width}"
            try:
                values = np.array([float(v) for v in parts[1:]])
            except ValueError:
                return lineno, f"non-numeric vector value for {parts[0]!r}"
            if not np.all(np.isfinite(values)):
                return lineno, f"non-finite vector value for {parts[0]!r}"
    return None


def _format_error(path: str, header: bool, cause: str) -> ParseError:
    found = _bad_line(path, header)
    if found is None:
        return ParseError(f"{path}: {cause}")
    lineno, reason = found
    return ParseError(f"{path}:{lineno}: {reason}")


def read_word_vectors(path: str) -> KeyedVectors:
    """Word-vector text file, with or without the "V m" header line, as gensim KeyedVectors."""
    if not os.path.isfile(path):
        raise MissingFileError(f"embedding file not found: {path}")
    first = _first_line(path)
    if not first:
        raise ParseError(f"{path}: no vectors found")
    header = _is_header(first)
    try:
        vectors = KeyedVectors.load_word2vec_format(
            path, binary=False, no_header=not header, datatype=np.float64, unicode_errors="replace",
        )
    except (ValueError, EOFError, IndexError, TypeError) as e:
        raise _format_error(path, header, f"unreadable word vectors ({e})")
    if len(vectors) == 0 or vectors.vector_size < 1:
        raise ParseError(f"{path}: no vectors found")
    if not np.all(np.isfinite(vectors.vectors)):
        raise _format_error(path, header, "non-finite vector value")
    return vectors


def load_embeddings(source: Union[str, KeyedVectors], vocab: Vocabulary) -> EmbeddingTable:
    """
    Frozen table aligned to vocabulary ids, from a vector file path or already-read vectors.
    Vocabulary words missing from the vectors keep a zero row, as do PAD and UNK.
    """
    vectors = read_word_vectors(source) if isinstance(source, str) else source
    matrix = np.zeros((len(vocab), vectors.vector_size))
    found = 0
    for idx, token in enumerate(vocab.tokens[2:], start=2):
        row = vectors.key_to_index.get(token)
        if row is not None:
            matrix[idx] = vectors.vectors[row]
            found += 1
    words = len(vocab) - 2
    coverage = found / words if words else 1.0
    log.info("%d-d vectors; coverage %.1f%% of %d words", vectors.vector_size, 100.0 * coverage, words)
    return EmbeddingTable(Tensor(matrix), coverage=coverage)
