# commands/evaluate.py
from __future__ import annotations

import logging
import os
from typing import Optional

from models import MetricsReport
from services.checkpoint import load_checkpoint
from services.corpus import encode_dataset
from services.metrics import evaluate, render_table, report_items, write_items

log = logging.getLogger("ecga.eval")

EVAL_METRICS = "eval_metrics.txt"
EVAL_REPORT = "eval_report.txt"


def cmd_eval(checkpoint: str, data: str, out: Optional[str] = None) -> MetricsReport:
    """Schema, cleaning and pad length come from the checkpoint's stored config."""
    model, config = load_checkpoint(checkpoint)
    batch = encode_dataset(data, config, model.vocab, model.label_names)
    report = evaluate(model, batch, workers=config.workers, positive_label=config.positive_label)

    out_dir = out or os.path.dirname(os.path.abspath(checkpoint))
    os.makedirs(out_dir, exist_ok=True)
    write_items(os.path.join(out_dir, EVAL_METRICS), report_items(report))
    with open(os.path.join(out_dir, EVAL_REPORT), "w", encoding="utf-8") as fh:
        fh.write(render_table(report, title=data))
    log.info("%s: accuracy %.4f macro-F1 %.4f", data, report.accuracy, report.macro_f1)
    return report
