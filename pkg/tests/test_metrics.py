# tests/test_metrics.py
import numpy as np
import pytest

from services.metrics import (
    confusion_counts,
    metrics_from_predictions,
    positive_index,
    render_table,
    report_from_counts,
    report_items,
    write_items,
)


def test_binary_scores_by_hand():
    report = metrics_from_predictions(np.array([0, 0, 1, 1, 1]), np.array([0, 1, 1, 1, 0]), ["0", "1"])
    assert report.counts == [[1, 1], [1, 2]]
    assert report.accuracy == pytest.approx(0.6)
    assert report.error_rate == pytest.approx(0.4)
    np.testing.assert_allclose(report.precision, [0.5, 2 / 3])
    np.testing.assert_allclose(report.recall, [0.5, 2 / 3])
    assert report.macro_f1 == pytest.approx((0.5 + 2 / 3) / 2)
    assert report.positive_f1 == pytest.approx(2 / 3)


def test_never_predicted_class_scores_zero():
    report = report_from_counts(np.array([[2, 0, 0], [1, 0, 0], [0, 0, 1]]), ["a", "b", "c"])
    assert report.precision[1] == 0.0 and report.f1[1] == 0.0
    assert report.support == [2, 1, 1]
    assert report.positive_f1 is None


def test_positive_label_lookup():
    assert positive_index(["no", "yes"], None) == 1
    assert positive_index(["yes", "no"], "yes") == 0
    assert positive_index(["a", "b", "c"], "missing") is None


def test_confusion_counts_rows_are_truth():
    counts = confusion_counts(np.array([2, 2, 0]), np.array([1, 2, 0]), 3)
    assert counts[2, 1] == 1 and counts[2, 2] == 1 and counts.sum() == 3


def test_key_value_file(tmp_path):
    report = metrics_from_predictions(np.array([0, 1]), np.array([0, 1]), ["neg", "pos"])
    path = tmp_path / "m.txt"
    write_items(str(path), report_items(report, prefix="test."))
    lines = path.read_text(encoding="utf-8").splitlines()
    assert "test.accuracy=1.0" in lines
    assert "test.f1.pos=1.0" in lines
    assert "test.counts.1.1=1" in lines


def test_table_render():
    report = metrics_from_predictions(np.array([0, 1]), np.array([0, 0]), ["neg", "pos"])
    text = render_table(report, title="demo")
    assert text.startswith("demo\n")
    assert "accuracy   50.00%" in text and "pos" in text


def test_all_correct_predictions():
    labels = np.array([0, 1, 2, 2, 1])
    report = metrics_from_predictions(labels, labels, ["a", "b", "c"])
    assert report.accuracy == 1.0 and report.macro_f1 == 1.0


def test_macro_f1_from_counts():
    report = report_from_counts(np.array([[1, 1], [0, 2]]), ["0", "1"])
    np.testing.assert_allclose(report.f1, [2 / 3, 0.8])
    assert report.macro_f1 == pytest.approx((2 / 3 + 0.8) / 2)


def test_macro_f1_ignores_label_order():
    rng = np.random.default_rng(4)
    y_true, y_pred = rng.integers(0, 4, size=200), rng.integers(0, 4, size=200)
    perm = np.array([2, 0, 3, 1])
    first = metrics_from_predictions(y_true, y_pred, list("abcd"))
    second = metrics_from_predictions(perm[y_true], perm[y_pred], list("abcd"))
    assert first.macro_f1 == pytest.approx(second.macro_f1, abs=1e-12)


def test_random_guessing_on_balanced_labels():
    rng = np.random.default_rng(9)
    y_true = np.repeat([0, 1], 5000)
    report = metrics_from_predictions(y_true, rng.integers(0, 2, size=10_000), ["0", "1"])
    assert 0.47 <= report.accuracy <= 0.53


def test_absent_class_scores_zero_without_raising():
    report = report_from_counts(np.array([[3, 1, 0], [0, 2, 0], [0, 0, 0]]), ["a", "b", "c"])
    assert (report.precision[2], report.recall[2], report.f1[2]) == (0.0, 0.0, 0.0)
    assert report.support == [4, 2, 0]
    assert report.macro_f1 == pytest.approx((6 / 7 + 0.8 + 0.0) / 3)


def test_empty_counts():
    report = report_from_counts(np.zeros((2, 2), dtype=int), ["0", "1"])
    assert report.examples == 0 and report.accuracy == 0.0 and report.f1 == [0.0, 0.0]
    assert confusion_counts(np.array([], dtype=int), np.array([], dtype=int), 2).tolist() == [[0, 0], [0, 0]]
