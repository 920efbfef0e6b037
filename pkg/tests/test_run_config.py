# tests/test_run_config.py
import pytest

from services.errors import ConfigError, MissingFileError
from services.run_config import PRESETS, parse_override, read_config_file, resolve_config, write_config_file


class TestPresets:
    def test_churn(self):
        config = resolve_config("churn")
        assert config.pad_length == 50 and config.vocab_cap == 1000
        assert config.kernel_sizes == [1, 2] and config.filters == 128 and config.units == 64
        assert config.kfold == 10 and config.clean_text
        assert [s.kernel_size for s in config.learner_specs()] == [1, 2]

    def test_dbpedia(self):
        config = resolve_config("dbpedia")
        assert (config.lr, config.beta1, config.beta2) == (1e-4, 0.7, 0.99)
        assert config.dropout == 0.3 and config.pad_length == 60
        assert config.kernel_sizes == [2, 3] and (config.filters, config.units) == (256, 128)
        assert config.text_columns == [1, 2] and not config.has_header

    def test_argmine_task_c_is_wider(self):
        config = resolve_config("argmine_task_c")
        assert (config.filters, config.units, config.dropout) == (512, 256, 0.5)

    @pytest.mark.parametrize("name", sorted(PRESETS))
    def test_every_preset_resolves(self, name):
        config = resolve_config(name)
        assert config.preset == name
        assert all(value is not None for key, value in config.model_dump().items()
                   if key in PRESETS[name])

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            resolve_config("imdb")


class TestVariants:
    def test_churn_cnn_baseline(self):
        config = resolve_config("churn", overrides=["architecture=cnn"])
        (spec,) = config.learner_specs()
        assert (spec.kernel_size, spec.filters) == (3, 64)
        assert not spec.use_gru and not spec.use_attention

    def test_argmine_topic_sizes(self):
        narrow = resolve_config("argmine_task_a", overrides=["architecture=cga", "topic=V"])
        wide = resolve_config("argmine_task_a", overrides=["architecture=cga", "topic=D"])
        assert narrow.units == 128 and wide.units == 256

    def test_ecga_ignores_topic(self):
        assert resolve_config("argmine_task_a", overrides=["topic=I"]).filters == 256

    def test_user_value_beats_variant(self):
        config = resolve_config("churn", overrides=["architecture=cnn", "filters=10"])
        assert config.filters == 10


class TestOverrides:
    def test_json_and_raw_strings(self):
        assert parse_override("kernel_sizes=[1, 4]") == ("kernel_sizes", [1, 4])
        assert parse_override("train_path=data/x.tsv") == ("train_path", "data/x.tsv")
        assert parse_override("embedding_path=null") == ("embedding_path", None)

    def test_malformed(self):
        with pytest.raises(ConfigError):
            parse_override("units")

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unit"):
            resolve_config("custom", overrides=["unit=3"])

    def test_invalid_value_names_field(self):
        with pytest.raises(ConfigError, match="dropout"):
            resolve_config("custom", overrides=["dropout=1.5"])

    def test_kernel_longer_than_pad(self):
        with pytest.raises(ConfigError, match="kernel_sizes"):
            resolve_config("custom", overrides=["pad_length=2"])

    def test_numeric_labels_stay_text(self):
        config = resolve_config("churn", overrides=["positive_label=1", "label_names=[0, 1]", "drop_labels=[2]"])
        assert config.positive_label == "1"
        assert config.label_names == ["0", "1"]
        assert config.dataset_schema().drop_labels == ["2"]

    def test_boolean_label_rejected(self):
        with pytest.raises(ConfigError, match="positive_label"):
            resolve_config("churn", overrides=["positive_label=true"])

    def test_precedence(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# comment\nunits = 7\nfilters = 9\n\nlr = 0.5\n", encoding="utf-8")
        config = resolve_config("custom", str(path), ["units=3"], seed=99, out=str(tmp_path / "o"))
        assert (config.units, config.filters, config.lr, config.seed) == (3, 9, 0.5, 99)
        assert config.out_dir == str(tmp_path / "o")


class TestFile:
    def test_round_trip(self, tmp_path):
        original = resolve_config("churn", overrides=["lr=0.00123", "positive_label=\"1\"", "units=5"])
        path = tmp_path / "config.resolved"
        write_config_file(str(path), original)
        assert resolve_config(config_path=str(path)).model_dump() == original.model_dump()

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingFileError):
            read_config_file(str(tmp_path / "nope.cfg"))
