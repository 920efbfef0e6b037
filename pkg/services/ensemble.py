# services/ensemble.py
"""
Learners that share the frozen embedding table and fork at the convolution,
each with its own kernel size; the prediction is the mean of their softmax
outputs.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from models import LearnerSpec
from services import tensor_autodiff as ad
from services.errors import ConfigError, ContractError
from services.layers import LearnerParams, init_learner, learner_forward
from services.tensor_autodiff import Parameter, Tensor
from services.text_pipeline import EmbeddingTable, EncodedBatch, Vocabulary

log = logging.getLogger("ecga.ensemble")


@dataclass
class EnsembleModel:
    learners: List[LearnerParams]
    table: EmbeddingTable
    label_names: List[str]
    vocab: Optional[Vocabulary] = None

    @property
    def num_classes(self) -> int:
        return len(self.label_names)

    @property
    def specs(self) -> List[LearnerSpec]:
        return [lp.spec for lp in self.learners]

    def parameters(self) -> List[Parameter]:
        return [p for lp in self.learners for p in lp.parameters()]

    def named_parameters(self) -> Dict[str, Parameter]:
        return {p.name: p for p in self.parameters()}

    def predict_proba(self, token_ids: np.ndarray, workers: int = 1) -> np.ndarray:
        return ensemble_predict(self, token_ids, workers=workers).numpy()


def build_ensemble(
    specs: Sequence[LearnerSpec],
    c: int,
    table: EmbeddingTable,
    rng: np.random.Generator,
    conv_activation: str = "relu",
    label_names: Optional[Sequence[str]] = None,
    vocab: Optional[Vocabulary] = None,
) -> EnsembleModel:
    """Independent parameters per learner, drawn from ``rng`` in learner order."""
    if not specs:
        raise ConfigError("build_ensemble: at least one learner spec is required")
    names = list(label_names) if label_names is not None else [str(i) for i in range(c)]
    if len(names) != c:
        raise ConfigError(f"build_ensemble: {len(names)} label names for {c} classes")
    learners = [
        init_learner(spec, table.dim, c, rng, conv_activation, prefix=f"learner{i}.")
        for i, spec in enumerate(specs)
    ]
    log.debug("built %d learner(s): kernel sizes %s", len(learners), [s.kernel_size for s in specs])
    return EnsembleModel(learners=learners, table=table, label_names=names, vocab=vocab)


def learner_predictions(
    model: EnsembleModel,
    token_ids: np.ndarray,
    dropout: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    training: bool = False,
    workers: int = 1,
) -> List[Tensor]:
    if workers > 1 and not training and len(model.learners) > 1:
        # read-only parameters; each pass owns its activations
        with ThreadPoolExecutor(max_workers=min(workers, len(model.learners))) as pool:
            return list(pool.map(lambda lp: learner_forward(token_ids, model.table, lp), model.learners))
    return [learner_forward(token_ids, model.table, lp, dropout, rng, training) for lp in model.learners]


def average(preds: Sequence[Tensor]) -> Tensor:
    """Arithmetic mean written as p0 + sum((p_i - p0) / N) so identical inputs come back bit-exact."""
    first = preds[0]
    out = first
    for p in preds[1:]:
        out = ad.add(out, ad.scale(ad.sub(p, first), 1.0 / len(preds)))
    return out


def ensemble_predict(
    model: EnsembleModel,
    token_ids: np.ndarray,
    dropout: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    training: bool = False,
    workers: int = 1,
) -> Tensor:
    return average(learner_predictions(model, token_ids, dropout, rng, training, workers))


def _nll(probs: Tensor, labels: np.ndarray) -> Tensor:
    return ad.scale(ad.reduce_mean(ad.log(ad.take(probs, labels))), -1.0)


def ensemble_loss(
    model: EnsembleModel,
    batch: EncodedBatch,
    dropout: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    training: bool = False,
    mode: str = "joint",
) -> Tensor:
    """
    joint: mean cross-entropy of the averaged prediction.
    independent: sum over learners of each learner's own mean cross-entropy.
    """
    if len(batch) == 0:
        raise ContractError("ensemble_loss: empty batch")
    labels = batch.labels
    if labels.min() < 0 or labels.max() >= model.num_classes:
        raise ContractError(f"ensemble_loss: label outside [0, {model.num_classes})")
    preds = learner_predictions(model, batch.ids, dropout, rng, training)
    if mode == "joint":
        return _nll(average(preds), labels)
    if mode == "independent":
        total = _nll(preds[0], labels)
        for p in preds[1:]:
            total = ad.add(total, _nll(p, labels))
        return total
    raise ConfigError(f"unknown training mode {mode!r}")
