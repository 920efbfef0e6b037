# services/training.py
"""
Adam, the epoch loop with best-epoch selection, stratified k-fold splits
and cross-validation.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from models import MetricsReport, RunConfig
from services.ensemble import EnsembleModel, ensemble_loss
from services.errors import ConfigError, ContractError, NumericError
from services.metrics import evaluate, predict_labels, report_from_counts
from services.tensor_autodiff import GradTape, LOG_FLOOR, Parameter, backward
from services.text_pipeline import EncodedBatch

log = logging.getLogger("ecga.training")


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def from_config(cls, config: RunConfig) -> "AdamState":
        return cls(lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)


def adam_step(
    params: Mapping[str, Parameter],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
) -> Tuple[Mapping[str, Parameter], AdamState]:
    """Bias-corrected Adam; parameters are updated in place and returned with the state."""
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            raise ContractError(f"adam_step: no gradient for {name}")
        if np.shape(g) != p.shape:
            raise ContractError(f"adam_step: gradient {list(np.shape(g))} does not match {name} {list(p.shape)}")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if name not in state.m:
            state.m[name] = np.zeros(p.shape)
            state.v[name] = np.zeros(p.shape)
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * (g * g)
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        p.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    valid_loss: Optional[float] = None
    valid_accuracy: Optional[float] = None
    valid_macro_f1: Optional[float] = None


@dataclass
class TrainResult:
    model: EnsembleModel
    trace: List[EpochRecord]
    best_epoch: Optional[int] = None


def trace_frame(trace: Sequence[EpochRecord]) -> pd.DataFrame:
    columns = ["epoch", "train_loss", "train_accuracy", "valid_loss", "valid_accuracy", "valid_macro_f1"]
    return pd.DataFrame([r.__dict__ for r in trace], columns=columns)


def write_trace(path: str, trace: Sequence[EpochRecord]) -> None:
    trace_frame(trace).to_csv(path, sep="\t", index=False)


def mean_loss(model: EnsembleModel, data: EncodedBatch, batch_size: int = 256) -> float:
    """Inference-mode cross-entropy of the averaged prediction."""
    _, probs = predict_labels(model, data.ids, batch_size)
    picked = probs[np.arange(len(data)), data.labels]
    return float(-np.mean(np.log(np.maximum(picked, LOG_FLOOR))))


def _selection_score(metric: str, loss: float, report: MetricsReport) -> float:
    if metric == "loss":
        return -loss
    if metric == "macro_f1":
        return report.macro_f1
    return report.accuracy


def train(
    model: EnsembleModel,
    dataset: EncodedBatch,
    config: RunConfig,
    rng: np.random.Generator,
    valid: Optional[EncodedBatch] = None,
) -> TrainResult:
    """
    Shuffled mini-batches with dropout on, one Adam step per batch. With a
    validation set the best epoch (by config.selection_metric) is restored.
    """
    if len(dataset) == 0:
        raise ConfigError("train: empty dataset")
    params = model.named_parameters()
    state = AdamState.from_config(config)
    trace: List[EpochRecord] = []
    best_score, best_epoch, snapshot = -math.inf, None, None
    has_valid = valid is not None and len(valid) > 0

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(dataset))
        total, seen = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = dataset.subset(order[start:start + config.batch_size])
            with GradTape() as tape:
                loss = ensemble_loss(model, batch, config.dropout, rng, training=True, mode=config.training)
            value = loss.item()
            if not math.isfinite(value):
                raise NumericError(f"non-finite training loss at epoch {epoch}")
            grads = backward(tape, loss, params.values())
            named = {p.name: g for p, g in grads.items()}
            if not all(np.all(np.isfinite(g)) for g in named.values()):
                raise NumericError(f"non-finite gradient at epoch {epoch}")
            adam_step(params, named, state)
            total += value * len(batch)
            seen += len(batch)

        train_report = evaluate(model, dataset, workers=config.workers)
        record = EpochRecord(epoch=epoch, train_loss=total / seen, train_accuracy=train_report.accuracy)
        if has_valid:
            v_loss = mean_loss(model, valid)
            v_report = evaluate(model, valid, workers=config.workers, positive_label=config.positive_label)
            record.valid_loss = v_loss
            record.valid_accuracy = v_report.accuracy
            record.valid_macro_f1 = v_report.macro_f1
            score = _selection_score(config.selection_metric, v_loss, v_report)
            if score > best_score:
                best_score, best_epoch = score, epoch
                snapshot = {name: p.data.copy() for name, p in params.items()}
        trace.append(record)
        log.info(
            "epoch %d/%d loss %.4f train acc %.4f%s",
            epoch, config.epochs, record.train_loss, record.train_accuracy,
            f" valid acc {record.valid_accuracy:.4f} macro-F1 {record.valid_macro_f1:.4f}" if has_valid else "",
        )

    if snapshot is not None:
        for name, p in params.items():
            p.data = snapshot[name]
        log.info("restored best epoch %d by valid %s", best_epoch, config.selection_metric)
    return TrainResult(model=model, trace=trace, best_epoch=best_epoch)


def _stratified_order(labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    parts = [rng.permutation(np.flatnonzero(labels == c)) for c in np.unique(labels)]
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def kfold_split(
    n: int,
    k: int,
    seed: int,
    labels: Optional[np.ndarray] = None,
    stratified: bool = True,
) -> List[Tuple[np.ndarray, np.ndarray]]:
    """
    k (train, validation) index pairs whose validation folds partition [0, n).
    Rows are dealt round-robin from a class-grouped, per-class shuffled order,
    so fold sizes and per-class counts each differ by at most one.
    """
    if k < 2:
        raise ConfigError(f"kfold: k must be >= 2, got {k}")
    if n < k:
        raise ConfigError(f"kfold: {n} examples cannot fill {k} folds")
    rng = np.random.default_rng(seed)
    if stratified and labels is not None:
        labels = np.asarray(labels)
        if labels.shape != (n,):
            raise ContractError(f"kfold: {labels.shape[0]} labels for {n} examples")
        order = _stratified_order(labels, rng)
    else:
        order = rng.permutation(n)
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[order] = np.arange(n) % k
    all_rows = np.arange(n)
    return [(all_rows[fold_of != f], all_rows[fold_of == f]) for f in range(k)]


def holdout_split(labels: np.ndarray, fraction: float, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Stratified (train, validation) rows; validation takes round(fraction * n_c) of each class."""
    labels = np.asarray(labels)
    if fraction <= 0.0 or len(labels) < 2:
        return np.arange(len(labels)), np.zeros(0, dtype=np.int64)
    held: List[np.ndarray] = []
    for c in np.unique(labels):
        rows = rng.permutation(np.flatnonzero(labels == c))
        held.append(rows[: int(round(fraction * len(rows)))])
    valid = np.sort(np.concatenate(held))
    if len(valid) == 0 or len(valid) == len(labels):
        return np.arange(len(labels)), np.zeros(0, dtype=np.int64)
    train_rows = np.setdiff1d(np.arange(len(labels)), valid)
    return train_rows, valid


def fit(model: EnsembleModel, dataset: EncodedBatch, config: RunConfig, rng: np.random.Generator) -> TrainResult:
    """train() with a stratified validation holdout of config.valid_fraction."""
    train_rows, valid_rows = holdout_split(dataset.labels, config.valid_fraction, rng)
    valid = dataset.subset(valid_rows) if len(valid_rows) else None
    return train(model, dataset.subset(train_rows), config, rng, valid)


@dataclass
class CrossValResult:
    folds: List[MetricsReport]
    pooled: MetricsReport
    traces: List[List[EpochRecord]]

    def means(self) -> Dict[str, float]:
        out = {
            "accuracy": float(np.mean([r.accuracy for r in self.folds])),
            "error_rate": float(np.mean([r.error_rate for r in self.folds])),
            "macro_f1": float(np.mean([r.macro_f1 for r in self.folds])),
        }
        positives = [r.positive_f1 for r in self.folds if r.positive_f1 is not None]
        if positives:
            out["positive_f1"] = float(np.mean(positives))
        return out


def cross_validate(
    dataset: EncodedBatch,
    make_model: Callable[[np.random.Generator], EnsembleModel],
    config: RunConfig,
) -> CrossValResult:
    """One fresh model per fold; folds may run on config.workers threads, each owning its model."""
    folds = kfold_split(len(dataset), config.kfold, config.seed, dataset.labels, config.stratified)

    def run_fold(fold: int) -> Tuple[MetricsReport, List[EpochRecord], np.ndarray]:
        train_rows, valid_rows = folds[fold]
        rng = np.random.default_rng([config.seed, fold + 1])
        model = make_model(rng)
        result = fit(model, dataset.subset(train_rows), config, rng)
        report = evaluate(model, dataset.subset(valid_rows), positive_label=config.positive_label)
        log.info("fold %d/%d: accuracy %.4f macro-F1 %.4f", fold + 1, len(folds), report.accuracy, report.macro_f1)
        return report, result.trace, np.asarray(report.counts)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(run_fold, range(len(folds))))
    else:
        outcomes = [run_fold(f) for f in range(len(folds))]

    reports = [o[0] for o in outcomes]
    pooled_counts = sum(o[2] for o in outcomes)
    pooled = report_from_counts(pooled_counts, reports[0].label_names, config.positive_label)
    return CrossValResult(folds=reports, pooled=pooled, traces=[o[1] for o in outcomes])
