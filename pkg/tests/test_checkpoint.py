# tests/test_checkpoint.py
import json
import zipfile

import numpy as np
import pytest

from models import RunConfig
from services.checkpoint import load_checkpoint, save_checkpoint
from services.ensemble import build_ensemble
from services.errors import ContractError, MissingFileError, ParseError
from services.text_pipeline import build_vocab, random_embeddings


def _model(seed=0):
    rng = np.random.default_rng(seed)
    vocab = build_vocab([["a", "b", "c", "d"]])
    table = random_embeddings(vocab, 3, rng)
    config = RunConfig(kernel_sizes=[1, 2], filters=3, units=2, pad_length=5, label_names=["x", "y", "z"])
    model = build_ensemble(config.learner_specs(), 3, table, rng, label_names=["x", "y", "z"], vocab=vocab)
    return model, config


def test_round_trip_predicts_identically(tmp_path):
    model, config = _model()
    path = str(tmp_path / "model.ecga")
    save_checkpoint(path, model, config)
    loaded, loaded_config = load_checkpoint(path)
    ids = np.array([[2, 3, 4, 5, 0], [1, 1, 0, 0, 0]])
    assert np.array_equal(loaded.predict_proba(ids), model.predict_proba(ids))
    assert loaded.label_names == ["x", "y", "z"]
    assert loaded.vocab.tokens == model.vocab.tokens
    assert loaded_config.kernel_sizes == [1, 2]


def test_same_model_same_bytes(tmp_path):
    model, config = _model()
    first, second = tmp_path / "a.ecga", tmp_path / "b.ecga"
    save_checkpoint(str(first), model, config)
    save_checkpoint(str(second), model, config.model_copy(update={"out_dir": "elsewhere"}))
    assert first.read_bytes() == second.read_bytes()


def test_missing(tmp_path):
    with pytest.raises(MissingFileError):
        load_checkpoint(str(tmp_path / "none.ecga"))


def test_not_a_checkpoint(tmp_path):
    path = tmp_path / "junk.ecga"
    path.write_bytes(b"not a zip")
    with pytest.raises(ParseError):
        load_checkpoint(str(path))


def test_vocabulary_must_match_embedding_rows(tmp_path):
    model, config = _model()
    good = tmp_path / "good.ecga"
    save_checkpoint(str(good), model, config)
    bad = tmp_path / "bad.ecga"
    with zipfile.ZipFile(good) as src, zipfile.ZipFile(bad, "w") as dst:
        for name in src.namelist():
            payload = src.read(name)
            if name == "meta.json":
                payload = payload.replace(b'"<unk>"', b'"<unk>", "extra"', 1)
            dst.writestr(name, payload)
    with pytest.raises(ContractError):
        load_checkpoint(str(bad))


def test_model_without_vocabulary(tmp_path):
    model, config = _model()
    model.vocab = None
    with pytest.raises(ContractError):
        save_checkpoint(str(tmp_path / "m.ecga"), model, config)


def test_stored_config_out_of_range(tmp_path):
    model, config = _model()
    good = tmp_path / "good.ecga"
    save_checkpoint(str(good), model, config)
    bad = tmp_path / "bad.ecga"
    with zipfile.ZipFile(good) as src, zipfile.ZipFile(bad, "w") as dst:
        for name in src.namelist():
            payload = src.read(name)
            if name == "meta.json":
                meta = json.loads(payload)
                meta["config"]["dropout"] = 1.5
                payload = json.dumps(meta).encode("utf-8")
            dst.writestr(name, payload)
    with pytest.raises(ParseError, match="dropout") as info:
        load_checkpoint(str(bad))
    assert info.value.exit_code == 2
