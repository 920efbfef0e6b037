# commands/predict.py
from __future__ import annotations

import logging
from typing import Iterable, TextIO

import numpy as np

from services.checkpoint import load_checkpoint
from services.corpus import encode_text

log = logging.getLogger("ecga.predict")


def format_prediction(label: str, probs: np.ndarray) -> str:
    return f"{label}\t" + " ".join(f"{p:.8f}" for p in probs)


def cmd_predict(checkpoint: str, lines: Iterable[str], out: TextIO) -> int:
    """One output line per input line, written as soon as it is classified. Blank lines are all-PAD."""
    model, config = load_checkpoint(checkpoint)
    count = 0
    for line in lines:
        ids = encode_text(line.rstrip("\r\n"), model.vocab, config)
        probs = model.predict_proba(ids[None, :])[0]
        out.write(format_prediction(model.label_names[int(np.argmax(probs))], probs) + "\n")
        out.flush()
        count += 1
    log.debug("classified %d lines", count)
    return count
