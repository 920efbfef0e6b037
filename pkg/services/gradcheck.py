# services/gradcheck.py
"""
Central finite differences against the tape's gradients, one verdict per
parameter tensor of a miniature ensemble.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, List

import numpy as np

from models import RunConfig
from services.ensemble import EnsembleModel, build_ensemble, ensemble_loss
from services.errors import NumericError
from services.tensor_autodiff import GradTape, Parameter, backward
from services.text_pipeline import EncodedBatch, Vocabulary, random_embeddings

log = logging.getLogger("ecga.gradcheck")

STEP = 1e-5
TOLERANCE = 1e-3
ERROR_FLOOR = 1e-5
_CHECK_VOCAB = 12
_CHECK_BATCH = 4


@dataclass(frozen=True)
class TensorCheck:
    name: str
    max_rel_err: float
    passed: bool

    def line(self) -> str:
        return f"{self.name} {self.max_rel_err:.3e} {'PASS' if self.passed else 'FAIL'}"


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = ERROR_FLOOR) -> float:
    """Largest entrywise |a - n| / max(|a| + |n|, floor); entries at rounding-noise level use the floor."""
    analytic, numeric = np.asarray(analytic, dtype=np.float64), np.asarray(numeric, dtype=np.float64)
    if analytic.size == 0:
        return 0.0
    scale = np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))


def numeric_gradient(loss_fn: Callable[[], float], p: Parameter, step: float = STEP) -> np.ndarray:
    grad = np.zeros(p.shape)
    flat = p.data.reshape(-1)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + step
        up = loss_fn()
        flat[i] = saved - step
        down = loss_fn()
        flat[i] = saved
        grad.reshape(-1)[i] = (up - down) / (2.0 * step)
    return grad


def check_gradients(
    model: EnsembleModel,
    batch: EncodedBatch,
    step: float = STEP,
    tolerance: float = TOLERANCE,
) -> List[TensorCheck]:
    """Loss is the inference-mode ensemble cross-entropy, so both sides see the same function."""
    params = model.named_parameters()
    with GradTape() as tape:
        loss = ensemble_loss(model, batch)
    analytic = backward(tape, loss, params.values())

    def loss_fn() -> float:
        return ensemble_loss(model, batch).item()

    results: List[TensorCheck] = []
    for name, p in params.items():
        numeric = numeric_gradient(loss_fn, p, step)
        err = relative_error(analytic[p], numeric)
        if not math.isfinite(err):
            raise NumericError(f"gradcheck: non-finite error for {name}")
        results.append(TensorCheck(name=name, max_rel_err=err, passed=err < tolerance))
        log.debug("%s rel err %.3e", name, err)
    return results


def miniature(config: RunConfig) -> tuple[EnsembleModel, EncodedBatch]:
    """Ensemble and batch sized by the config (the tiny preset by default), seeded by config.seed."""
    rng = np.random.default_rng(config.seed)
    labels = list(config.label_names or ["a", "b", "c"])
    vocab = Vocabulary(["<pad>", "<unk>"] + [f"w{i}" for i in range(_CHECK_VOCAB - 2)])
    table = random_embeddings(vocab, config.embedding_dim, rng, scale=1.0)
    model = build_ensemble(
        config.learner_specs(), len(labels), table, rng,
        conv_activation=config.conv_activation, label_names=labels, vocab=vocab,
    )
    ids = rng.integers(2, _CHECK_VOCAB, size=(_CHECK_BATCH, config.pad_length))
    ys = np.arange(_CHECK_BATCH) % len(labels)
    return model, EncodedBatch(ids, ys)


def run_gradcheck(config: RunConfig) -> List[TensorCheck]:
    model, batch = miniature(config)
    return check_gradients(model, batch)
