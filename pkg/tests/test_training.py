# tests/test_training.py
import numpy as np
import pytest

from models import RunConfig
from providers import SyntheticProvider
from services.corpus import label_ids, resolve_label_names
from services.ensemble import build_ensemble
from services.errors import ConfigError, ContractError, NumericError
from services.metrics import evaluate
from services.run_config import resolve_config
from services.tensor_autodiff import Parameter
from services.text_pipeline import EncodedBatch, build_vocab, encode_batch, prepare_texts, random_embeddings
from services.training import (
    AdamState,
    adam_step,
    cross_validate,
    fit,
    holdout_split,
    kfold_split,
    train,
)


def _synthetic(examples, classes, vocab_size, length, seed=1, pad=None):
    raw = SyntheticProvider(examples, classes, vocab_size, length, seed).load()
    docs = prepare_texts(raw.texts, clean=False)
    vocab = build_vocab(docs)
    names = resolve_label_names(raw.labels, None)
    return vocab, encode_batch(docs, label_ids(raw.labels, names).tolist(), vocab, pad or length)


def _small_config(**overrides) -> RunConfig:
    values = dict(
        kernel_sizes=[1, 2], filters=6, units=3, dropout=0.0, lr=0.03,
        batch_size=8, epochs=5, valid_fraction=0.0, pad_length=6,
    )
    values.update(overrides)
    return RunConfig(**values)


def _model(vocab, config, seed=0, classes=2):
    rng = np.random.default_rng(seed)
    table = random_embeddings(vocab, 8, rng, scale=1.0)
    return build_ensemble(config.learner_specs(), classes, table, rng, vocab=vocab)


class TestAdam:
    def test_first_step_matches_formula(self):
        p = Parameter(np.array([1.0, -2.0, 0.5]), "p")
        g = np.array([0.5, 0.1, -3.0])
        state = AdamState(lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8)
        adam_step({"p": p}, {"p": g}, state)
        m_hat = (0.1 * g) / (1 - 0.9)
        v_hat = (0.001 * g * g) / (1 - 0.999)
        expected = np.array([1.0, -2.0, 0.5]) - 0.01 * m_hat / (np.sqrt(v_hat) + 1e-8)
        np.testing.assert_allclose(p.data, expected, atol=1e-12, rtol=0)
        assert state.t == 1

    def test_minimizes_quadratic(self):
        w = Parameter(np.array([0.0]), "w")
        state = AdamState(lr=0.1)
        for _ in range(500):
            adam_step({"w": w}, {"w": 2.0 * (w.data - 3.0)}, state)
        assert abs(w.data[0] - 3.0) < 0.05

    def test_shape_mismatch(self):
        with pytest.raises(ContractError):
            adam_step({"p": Parameter(np.zeros(3), "p")}, {"p": np.zeros(2)}, AdamState())

    def test_missing_gradient(self):
        with pytest.raises(ContractError):
            adam_step({"p": Parameter(np.zeros(3), "p")}, {}, AdamState())


class TestFolds:
    def test_churn_sized_folds(self):
        labels = np.array([0] * 3828 + [1] * 900)
        folds = kfold_split(4728, 10, seed=13, labels=labels)
        seen = np.concatenate([valid for _, valid in folds])
        assert sorted(seen.tolist()) == list(range(4728))
        ratio = 900 / 4728
        for train_rows, valid_rows in folds:
            assert len(valid_rows) in (472, 473)
            assert len(np.intersect1d(train_rows, valid_rows)) == 0
            assert len(train_rows) + len(valid_rows) == 4728
            assert abs(labels[valid_rows].sum() - ratio * len(valid_rows)) <= 1.0

    def test_seeded(self):
        a = kfold_split(50, 5, seed=3)
        b = kfold_split(50, 5, seed=3)
        assert all(np.array_equal(x[1], y[1]) for x, y in zip(a, b))

    def test_invalid_k(self):
        with pytest.raises(ConfigError):
            kfold_split(10, 1, seed=0)
        with pytest.raises(ConfigError):
            kfold_split(3, 5, seed=0)

    def test_holdout_is_stratified(self):
        labels = np.array([0] * 40 + [1] * 20)
        train_rows, valid_rows = holdout_split(labels, 0.1, np.random.default_rng(0))
        assert len(valid_rows) == 6
        assert labels[valid_rows].sum() == 2
        assert len(np.union1d(train_rows, valid_rows)) == 60

    def test_holdout_disabled(self):
        train_rows, valid_rows = holdout_split(np.array([0, 1, 0, 1]), 0.0, np.random.default_rng(0))
        assert len(train_rows) == 4 and len(valid_rows) == 0


class TestTrain:
    def test_fits_separable_points(self):
        vocab, data = _synthetic(32, 2, 20, 6)
        config = _small_config(epochs=50)
        model = _model(vocab, config)
        result = train(model, data, config, np.random.default_rng(0))
        assert len(result.trace) == 50
        assert result.trace[-1].train_loss < result.trace[0].train_loss
        assert evaluate(model, data).accuracy == 1.0

    def test_loss_falls_over_first_epochs(self):
        vocab, data = _synthetic(32, 2, 20, 6)
        config = _small_config(epochs=5)
        model = _model(vocab, config)
        losses = [point.train_loss for point in train(model, data, config, np.random.default_rng(0)).trace]
        assert len(losses) == 5
        for earlier, later in zip(losses, losses[1:]):
            assert later <= 1.05 * earlier

    def test_zero_epochs_leaves_model_unchanged(self):
        vocab, data = _synthetic(12, 2, 20, 6)
        config = _small_config(epochs=0)
        model = _model(vocab, config)
        before = {n: p.data.copy() for n, p in model.named_parameters().items()}
        result = train(model, data, config, np.random.default_rng(0))
        assert result.trace == []
        for name, p in model.named_parameters().items():
            np.testing.assert_array_equal(p.data, before[name])

    def test_empty_dataset(self):
        vocab, _ = _synthetic(12, 2, 20, 6)
        config = _small_config()
        with pytest.raises(ConfigError):
            train(_model(vocab, config), EncodedBatch(np.zeros((0, 6)), np.zeros(0)), config, np.random.default_rng(0))

    def test_non_finite_loss(self):
        vocab, data = _synthetic(12, 2, 20, 6)
        config = _small_config()
        model = _model(vocab, config)
        model.learners[0].head.W_o.data[...] = np.nan
        with pytest.raises(NumericError):
            train(model, data, config, np.random.default_rng(0))

    def test_same_seed_same_parameters(self):
        vocab, data = _synthetic(24, 2, 20, 6)
        config = _small_config(dropout=0.3)
        runs = []
        for _ in range(2):
            model = _model(vocab, config)
            train(model, data, config, np.random.default_rng(5))
            runs.append(model)
        for p, q in zip(runs[0].parameters(), runs[1].parameters()):
            assert np.array_equal(p.data, q.data)

    def test_best_epoch_is_restored(self):
        vocab, data = _synthetic(40, 2, 20, 6)
        config = _small_config(epochs=4)
        valid = data.subset(np.arange(30, 40))
        model = _model(vocab, config)
        result = train(model, data.subset(np.arange(30)), config, np.random.default_rng(0), valid)
        assert 1 <= result.best_epoch <= 4
        best = result.trace[result.best_epoch - 1]
        assert evaluate(model, valid).accuracy == best.valid_accuracy
        assert best.valid_accuracy == max(r.valid_accuracy for r in result.trace)


class TestCrossValidate:
    def test_reports_every_fold_and_pools_counts(self):
        vocab, data = _synthetic(30, 3, 20, 6)
        config = _small_config(kfold=3, epochs=2, valid_fraction=0.1, workers=2)

        def make_model(rng):
            table = random_embeddings(vocab, 8, np.random.default_rng(0), scale=1.0)
            return build_ensemble(config.learner_specs(), 3, table, rng, label_names=["c0", "c1", "c2"])

        cv = cross_validate(data, make_model, config)
        assert len(cv.folds) == 3 and len(cv.traces) == 3
        assert sum(r.examples for r in cv.folds) == 30
        assert np.asarray(cv.pooled.counts).sum() == 30
        assert 0.0 <= cv.means()["accuracy"] <= 1.0


@pytest.mark.slow
def test_churn_shaped_ensemble_learns_synthetic_classes():
    config = resolve_config("churn", overrides=["epochs=20", "kfold=0"])
    vocab, data = _synthetic(300, 3, 50, 12, pad=config.pad_length)
    train_rows, test_rows = kfold_split(len(data), 5, seed=13, labels=data.labels)[0]
    rng = np.random.default_rng(config.seed)
    table = random_embeddings(vocab, config.embedding_dim, rng)
    model = build_ensemble(config.learner_specs(), 3, table, rng, vocab=vocab)
    fit(model, data.subset(train_rows), config, rng)
    assert evaluate(model, data.subset(test_rows)).accuracy >= 0.95


class TestEdgeCases:
    def test_zero_gradient_leaves_parameter(self):
        p = Parameter(np.array([1.5, -0.5]), "p")
        adam_step({"p": p}, {"p": np.zeros(2)}, AdamState(lr=0.1))
        np.testing.assert_array_equal(p.data, [1.5, -0.5])

    def test_one_row_per_fold(self):
        folds = kfold_split(10, 10, seed=0)
        assert sorted(int(v[0]) for _, v in folds) == list(range(10))
        assert all(len(v) == 1 and len(t) == 9 for t, v in folds)
