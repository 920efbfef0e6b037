# providers/synthetic_provider.py
from __future__ import annotations

import logging

import numpy as np

from providers.delimited_provider import RawDataset
from services.errors import ConfigError

log = logging.getLogger("ecga.providers")


class SyntheticProvider:
    """
    Class-separable corpus: every class owns a disjoint band of tokens, and
    each document mixes tokens from its class band with shared filler.
    """

    def __init__(self, examples: int = 300, classes: int = 3, vocab_size: int = 50, length: int = 12, seed: int = 0) -> None:
        if classes < 2 or examples < classes:
            raise ConfigError("synthetic corpus needs >= 2 classes and >= 1 example per class")
        filler = max(vocab_size // 5, 1)
        if vocab_size - filler < classes:
            raise ConfigError(f"vocab_size {vocab_size} too small for {classes} class bands")
        self.examples = examples
        self.classes = classes
        self.vocab_size = vocab_size
        self.length = length
        self.seed = seed
        self.filler = filler

    def load(self, path: str = "") -> RawDataset:
        rng = np.random.default_rng(self.seed)
        band = (self.vocab_size - self.filler) // self.classes
        texts, labels = [], []
        for i in range(self.examples):
            c = i % self.classes
            own = rng.integers(self.filler + c * band, self.filler + (c + 1) * band, size=self.length)
            noise = rng.integers(0, self.filler, size=self.length)
            words = np.where(rng.random(self.length) < 0.6, own, noise)
            texts.append(" ".join(f"w{w}" for w in words))
            labels.append(f"c{c}")
        log.info("synthetic corpus: %d examples, %d classes", self.examples, self.classes)
        return RawDataset(texts=texts, labels=labels)
