# services/checkpoint.py
"""
Model checkpoint: one zip container holding meta.json (labels, vocabulary,
learner specs, resolved run config, tensor index) plus one .npy per tensor.
Entries carry a fixed timestamp so identical models give identical bytes.
"""
from __future__ import annotations

import io
import json
import logging
import os
import zipfile
from typing import Any, Dict, Tuple

import numpy as np
from pydantic import ValidationError

from models import LearnerSpec, RunConfig
from services.ensemble import EnsembleModel
from services.errors import ContractError, MissingFileError, ParseError
from services.layers import init_learner
from services.tensor_autodiff import Tensor
from services.text_pipeline import EmbeddingTable, Vocabulary

log = logging.getLogger("ecga.checkpoint")

FORMAT = "ecga-checkpoint"
VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


def _entry(zf: zipfile.ZipFile, name: str, payload: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    zf.writestr(info, payload)


def _npy(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr, dtype=np.float64), allow_pickle=False)
    return buf.getvalue()


def save_checkpoint(path: str, model: EnsembleModel, config: RunConfig) -> None:
    if model.vocab is None:
        raise ContractError("save_checkpoint: model has no vocabulary attached")
    meta: Dict[str, Any] = {
        "format": FORMAT,
        "version": VERSION,
        "label_names": model.label_names,
        "vocab": model.vocab.tokens,
        "vocab_cap": model.vocab.max_size,
        "embedding_coverage": model.table.coverage,
        "learners": [
            {
                "spec": lp.spec.model_dump(),
                "tensors": [{"name": p.name, "shape": list(p.shape)} for p in lp.parameters()],
            }
            for lp in model.learners
        ],
        "config": config.model_dump(exclude={"out_dir"}),
    }
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with zipfile.ZipFile(path, "w") as zf:
        _entry(zf, "meta.json", json.dumps(meta, sort_keys=True, indent=1).encode("utf-8"))
        _entry(zf, "embedding.npy", _npy(model.table.matrix.data))
        for p in model.parameters():
            _entry(zf, f"params/{p.name}.npy", _npy(p.data))
    log.info("wrote checkpoint %s (%d tensors)", path, len(model.parameters()))


def load_checkpoint(path: str) -> Tuple[EnsembleModel, RunConfig]:
    if not os.path.isfile(path):
        raise MissingFileError(f"checkpoint not found: {path}")
    try:
        with zipfile.ZipFile(path, "r") as zf:
            meta = json.loads(zf.read("meta.json").decode("utf-8"))
            arrays = {
                name: np.lib.format.read_array(io.BytesIO(zf.read(name)), allow_pickle=False)
                for name in zf.namelist()
                if name.endswith(".npy")
            }
    except (zipfile.BadZipFile, KeyError, ValueError) as e:
        raise ParseError(f"{path}: not a readable checkpoint ({type(e).__name__}: {e})")
    if meta.get("format") != FORMAT:
        raise ParseError(f"{path}: unexpected container format {meta.get('format')!r}")

    try:
        config = RunConfig.model_validate(meta["config"])
        specs = [LearnerSpec.model_validate(entry["spec"]) for entry in meta["learners"]]
    except (ValidationError, KeyError, TypeError) as e:
        raise ParseError(f"{path}: invalid stored config ({type(e).__name__}: {e})")
    vocab = Vocabulary(list(meta["vocab"]), max_size=meta.get("vocab_cap"))
    matrix = arrays.get("embedding.npy")
    if matrix is None or matrix.ndim != 2 or matrix.shape[0] != len(vocab):
        raise ContractError(f"{path}: embedding rows do not match vocabulary size {len(vocab)}")
    table = EmbeddingTable(Tensor(matrix), coverage=float(meta.get("embedding_coverage", 1.0)))
    labels = list(meta["label_names"])

    learners = []
    scratch = np.random.default_rng(0)
    for i, spec in enumerate(specs):
        lp = init_learner(spec, table.dim, len(labels), scratch, config.conv_activation, prefix=f"learner{i}.")
        for p in lp.parameters():
            arr = arrays.get(f"params/{p.name}.npy")
            if arr is None or arr.shape != p.shape:
                raise ParseError(f"{path}: tensor {p.name} missing or misshapen")
            p.data = np.array(arr, dtype=np.float64)
        learners.append(lp)
    model = EnsembleModel(learners=learners, table=table, label_names=labels, vocab=vocab)
    return model, config
