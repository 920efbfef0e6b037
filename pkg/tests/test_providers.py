# tests/test_providers.py
import pytest

from models import DatasetSchema
from providers import DelimitedProvider, SyntheticProvider, load_dataset, provider_for
from services.errors import ConfigError, MissingFileError, ParseError

DBPEDIA = DatasetSchema(delimiter=",", has_header=False, label_column=0, text_columns=[1, 2])
TSV = DatasetSchema()


def test_title_and_abstract_are_joined(samples):
    data = DelimitedProvider(DBPEDIA).load(str(samples / "dbpedia_sample.csv"))
    assert len(data) == 50
    assert sorted(set(data.labels)) == ["1", "2", "3", "4", "5"]
    assert data.texts[0].startswith("Company 1 The corporation")


def test_blank_labels_are_dropped(samples):
    data = DelimitedProvider(TSV).load(str(samples / "argmine_sample.tsv"))
    assert len(data) == 31
    assert "" not in data.labels


def test_drop_labels(samples):
    schema = DatasetSchema(drop_labels=["undefined"])
    data = DelimitedProvider(schema).load(str(samples / "argmine_sample.tsv"))
    assert len(data) == 30
    assert set(data.labels) == {"educacion", "salud", "trabajo"}


def test_confidence_filter(samples):
    everything = DelimitedProvider(TSV).load(str(samples / "churn_sample.tsv"))
    schema = DatasetSchema(confidence_column="confidence", min_confidence=0.7)
    confident = DelimitedProvider(schema).load(str(samples / "churn_sample.tsv"))
    assert len(everything) == 40
    assert 0 < len(confident) < 40


def test_missing_column(samples):
    with pytest.raises(ConfigError, match="body"):
        DelimitedProvider(DatasetSchema(text_columns=["body"])).load(str(samples / "churn_sample.tsv"))


def test_missing_file(tmp_path):
    with pytest.raises(MissingFileError):
        DelimitedProvider(TSV).load(str(tmp_path / "absent.tsv"))


def test_header_only_file(tmp_path):
    path = tmp_path / "empty.tsv"
    path.write_text("label\ttext\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        DelimitedProvider(TSV).load(str(path))


def test_row_missing_text_names_line(tmp_path):
    path = tmp_path / "ragged.tsv"
    path.write_text("label\ttext\npos\tgood service\nneg\n", encoding="utf-8")
    with pytest.raises(ParseError, match=r":3: .*'text' missing"):
        DelimitedProvider(TSV).load(str(path))


def test_headerless_row_missing_second_text_column(tmp_path):
    path = tmp_path / "ragged.csv"
    path.write_text("1,Title,Abstract\n2,Only title\n", encoding="utf-8")
    with pytest.raises(ParseError, match=":2:"):
        DelimitedProvider(DBPEDIA).load(str(path))


def test_synthetic_is_seeded_and_balanced():
    a = SyntheticProvider(examples=30, classes=3, seed=4).load()
    b = SyntheticProvider(examples=30, classes=3, seed=4).load()
    assert a.texts == b.texts
    assert [a.labels.count(c) for c in ("c0", "c1", "c2")] == [10, 10, 10]


def test_synthetic_source_from_path():
    assert isinstance(provider_for("synthetic:examples=12,classes=2", TSV), SyntheticProvider)
    assert len(load_dataset("synthetic:examples=12,classes=2,length=5", TSV)) == 12
    with pytest.raises(ConfigError):
        provider_for("synthetic:size=3", TSV)
