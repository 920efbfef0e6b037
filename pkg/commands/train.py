# commands/train.py
from __future__ import annotations

import logging
import os
from typing import Any, List, Tuple

import numpy as np

from models import RunConfig
from services.checkpoint import save_checkpoint
from services.corpus import build_corpus
from services.ensemble import EnsembleModel, build_ensemble
from services.metrics import evaluate, render_table, report_items, write_items
from services.run_config import write_config_file
from services.training import cross_validate, fit, write_trace

log = logging.getLogger("ecga.train")

CHECKPOINT = "model.ecga"
METRICS = "metrics.txt"
REPORT = "report.txt"
TRACE = "trace.tsv"
RESOLVED = "config.resolved"


def cmd_train(config: RunConfig) -> List[Tuple[str, Any]]:
    """
    Train on config.train_path and write the checkpoint, metrics, report,
    epoch trace and resolved config under config.out_dir. With kfold >= 2 the
    folds are reported first and the checkpoint is retrained on all rows.
    """
    out = config.out_dir
    os.makedirs(out, exist_ok=True)
    rng = np.random.default_rng(config.seed)
    corpus = build_corpus(config, rng)
    specs = config.learner_specs()
    c = len(corpus.label_names)

    def make_model(model_rng: np.random.Generator) -> EnsembleModel:
        return build_ensemble(
            specs, c, corpus.table, model_rng,
            conv_activation=config.conv_activation,
            label_names=corpus.label_names,
            vocab=corpus.vocab,
        )

    items: List[Tuple[str, Any]] = []
    report_text = ""
    if config.kfold >= 2:
        cv = cross_validate(corpus.train, make_model, config)
        for i, fold in enumerate(cv.folds):
            items.extend(report_items(fold, prefix=f"fold{i}."))
        items.extend((f"cv_{key}_mean", value) for key, value in cv.means().items())
        items.extend(report_items(cv.pooled, prefix="cv_pooled."))
        report_text += render_table(cv.pooled, title=f"{config.kfold}-fold cross-validation (pooled)") + "\n"

    model = make_model(rng)
    result = fit(model, corpus.train, config, rng)

    split, data = ("test", corpus.test) if corpus.test is not None else ("train", corpus.train)
    report = evaluate(model, data, workers=config.workers, positive_label=config.positive_label)
    items = [("split", split), ("epochs", config.epochs), ("best_epoch", result.best_epoch or config.epochs)] \
        + report_items(report) + items
    report_text = render_table(report, title=f"{split} split") + ("\n" + report_text if report_text else "")

    save_checkpoint(os.path.join(out, CHECKPOINT), model, config)
    write_items(os.path.join(out, METRICS), items)
    with open(os.path.join(out, REPORT), "w", encoding="utf-8") as fh:
        fh.write(report_text)
    write_trace(os.path.join(out, TRACE), result.trace)
    write_config_file(os.path.join(out, RESOLVED), config)
    log.info("%s accuracy %.4f macro-F1 %.4f; artifacts in %s", split, report.accuracy, report.macro_f1, out)
    return items
