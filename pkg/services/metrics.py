# services/metrics.py
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.metrics import accuracy_score, confusion_matrix, precision_recall_fscore_support

from models import MetricsReport
from services.text_pipeline import EncodedBatch

log = logging.getLogger("ecga.metrics")


def positive_index(label_names: Sequence[str], positive_label: Optional[str]) -> Optional[int]:
    if positive_label is not None and positive_label in label_names:
        return list(label_names).index(positive_label)
    return 1 if len(label_names) == 2 else None


def confusion_counts(y_true: np.ndarray, y_pred: np.ndarray, c: int) -> np.ndarray:
    """Rows are true classes, columns predictions, over the fixed class ids 0..c-1."""
    if len(y_true) == 0:
        return np.zeros((c, c), dtype=np.int64)
    return confusion_matrix(y_true, y_pred, labels=np.arange(c)).astype(np.int64)


def _pairs_from_counts(counts: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    c = counts.shape[0]
    true_ids = np.repeat(np.repeat(np.arange(c), c), counts.reshape(-1))
    pred_ids = np.repeat(np.tile(np.arange(c), c), counts.reshape(-1))
    return true_ids, pred_ids


def report_from_counts(
    counts: np.ndarray,
    label_names: Sequence[str],
    positive_label: Optional[str] = None,
) -> MetricsReport:
    """Undefined precision/recall/F1 (zero denominators) count as 0."""
    counts = np.asarray(counts, dtype=np.int64)
    c = len(label_names)
    total = int(counts.sum())
    support = counts.sum(axis=1)
    if total:
        y_true, y_pred = _pairs_from_counts(counts)
        precision, recall, f1, _ = precision_recall_fscore_support(
            y_true, y_pred, labels=np.arange(c), average=None, zero_division=0,
        )
        accuracy = float(accuracy_score(y_true, y_pred))
    else:
        precision = recall = f1 = np.zeros(c)
        accuracy = 0.0
    pos = positive_index(label_names, positive_label)
    return MetricsReport(
        label_names=list(label_names),
        examples=total,
        accuracy=accuracy,
        error_rate=1.0 - accuracy,
        precision=[float(v) for v in precision],
        recall=[float(v) for v in recall],
        f1=[float(v) for v in f1],
        support=[int(v) for v in support],
        macro_f1=float(np.mean(f1)),
        positive_f1=float(f1[pos]) if pos is not None else None,
        counts=counts.tolist(),
    )


def metrics_from_predictions(
    y_true: np.ndarray,
    y_pred: np.ndarray,
    label_names: Sequence[str],
    positive_label: Optional[str] = None,
) -> MetricsReport:
    return report_from_counts(confusion_counts(y_true, y_pred, len(label_names)), label_names, positive_label)


def predict_labels(model: Any, ids: np.ndarray, batch_size: int = 256, workers: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """argmax decisions (ties go to the lowest class index) and the probability rows."""
    chunks = [ids[i:i + batch_size] for i in range(0, len(ids), batch_size)]
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(model.predict_proba, chunks))
    else:
        parts = [model.predict_proba(chunk) for chunk in chunks]
    probs = np.concatenate(parts, axis=0) if parts else np.zeros((0, len(model.label_names)))
    return np.argmax(probs, axis=-1), probs


def evaluate(
    model: Any,
    dataset: EncodedBatch,
    batch_size: int = 256,
    workers: int = 1,
    positive_label: Optional[str] = None,
) -> MetricsReport:
    preds, _ = predict_labels(model, dataset.ids, batch_size, workers)
    return metrics_from_predictions(dataset.labels, preds, model.label_names, positive_label)


def report_items(report: MetricsReport, prefix: str = "") -> List[Tuple[str, Any]]:
    items: List[Tuple[str, Any]] = [
        (f"{prefix}examples", report.examples),
        (f"{prefix}accuracy", report.accuracy),
        (f"{prefix}error_rate", report.error_rate),
        (f"{prefix}macro_f1", report.macro_f1),
    ]
    if report.positive_f1 is not None:
        items.append((f"{prefix}positive_f1", report.positive_f1))
    for i, name in enumerate(report.label_names):
        items.append((f"{prefix}precision.{name}", report.precision[i]))
        items.append((f"{prefix}recall.{name}", report.recall[i]))
        items.append((f"{prefix}f1.{name}", report.f1[i]))
        items.append((f"{prefix}support.{name}", report.support[i]))
    for i, row in enumerate(report.counts):
        for j, n in enumerate(row):
            items.append((f"{prefix}counts.{i}.{j}", n))
    return items


def format_value(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_items(path: str, items: Sequence[Tuple[str, Any]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in items:
            fh.write(f"{key}={format_value(value)}\n")


def render_table(report: MetricsReport, title: str = "") -> str:
    per_class = pd.DataFrame(
        {
            "precision": report.precision,
            "recall": report.recall,
            "f1": report.f1,
            "support": report.support,
        },
        index=pd.Index(report.label_names, name="class"),
    )
    lines = []
    if title:
        lines.append(title)
    lines.append(f"examples   {report.examples}")
    lines.append(f"accuracy   {100.0 * report.accuracy:.2f}%")
    lines.append(f"error rate {100.0 * report.error_rate:.2f}%")
    lines.append(f"macro F1   {100.0 * report.macro_f1:.2f}%")
    if report.positive_f1 is not None:
        lines.append(f"pos. F1    {100.0 * report.positive_f1:.2f}%")
    lines.append("")
    lines.append(per_class.to_string(float_format=lambda v: f"{v:.4f}"))
    return "\n".join(lines) + "\n"
