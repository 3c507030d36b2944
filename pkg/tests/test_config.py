"""
Tests for settings and run configuration.
"""

import pytest

from pcfgnn.config import (
    CtrConfig,
    Settings,
    TrainConfig,
    build_section,
    get_settings,
    load_config_file,
    parse_config_text,
    section,
    top_level,
    top_level_int,
)
from pcfgnn.errors import ConfigError
from pcfgnn.evaluation import SyntheticSpec
from pcfgnn.sources import CostModel


class TestParseConfig:
    """Tests for the key=value format."""

    def test_comments_blanks_and_repeats(self):
        """Comments and blank lines are skipped; repeated keys accumulate."""
        values = parse_config_text("# c\n\nrelation=a,b\nrelation = b,c\nseed=4\n")
        assert values == {"relation": ["a,b", "b,c"], "seed": ["4"]}

    def test_missing_equals(self):
        """A line without '=' names its line number."""
        with pytest.raises(ConfigError, match=":2:"):
            parse_config_text("a=1\noops\n", source="run.conf")

    def test_missing_file(self, tmp_path):
        """A missing file is a config error naming the path."""
        with pytest.raises(ConfigError, match="absent.conf"):
            load_config_file(tmp_path / "absent.conf")

    def test_section_last_value_wins(self):
        """Section keys lose their prefix and the last occurrence wins."""
        values = parse_config_text("pretrain.epochs=5\npretrain.epochs=7\nctr.epochs=2\n")
        assert section(values, "pretrain") == {"epochs": "7"}

    def test_top_level(self):
        """Top-level keys read as strings or integers."""
        values = parse_config_text("seed=12\nname=x\n")
        assert top_level(values, "name") == "x"
        assert top_level(values, "missing", "d") == "d"
        assert top_level_int(values, "seed", 0) == 12
        with pytest.raises(ConfigError):
            top_level_int(values, "name", 0)


class TestBuildSection:
    """Tests for validated config sections."""

    def test_train_config_from_file_values(self):
        """Strings are coerced, tuples parsed and None tokens honored."""
        values = parse_config_text(
            "pretrain.layer_widths=32,4\npretrain.batch_size=full\npretrain.weighted_loss=false\npretrain.t=2\n"
        )
        config = build_section(TrainConfig, values, "pretrain")
        assert config.layer_widths == (32, 4)
        assert config.batch_size is None
        assert not config.weighted_loss
        assert config.output_dim == 4

    def test_overrides_win(self):
        """CLI overrides beat file values; None overrides are ignored."""
        values = parse_config_text("pretrain.epochs=5\npretrain.learning_rate=0.1\n")
        config = build_section(TrainConfig, values, "pretrain", {"epochs": 9, "learning_rate": None})
        assert (config.epochs, config.learning_rate) == (9, 0.1)

    def test_empty_layers(self):
        """An empty width list is the layerless encoder."""
        config = build_section(TrainConfig, parse_config_text("pretrain.layer_widths=\n"), "pretrain")
        assert config.num_layers == 0
        assert config.output_dim == config.embedding_dim

    @pytest.mark.parametrize(
        "text",
        ["pretrain.epochs=0", "pretrain.unknown=1", "pretrain.layer_widths=4,0", "pretrain.t=0", "pretrain.optimizer=rmsprop"],
    )
    def test_invalid_values(self, text):
        """Out-of-range or unknown keys are config errors naming the key."""
        with pytest.raises(ConfigError, match="pretrain"):
            build_section(TrainConfig, parse_config_text(text), "pretrain")

    def test_other_sections(self):
        """CTR, synthetic and cost sections validate the same way."""
        values = parse_config_text(
            "ctr.hidden_widths=16\nctr.finetune=true\nsynthetic.num_users=7\ncost.key_bytes=8\n"
        )
        assert build_section(CtrConfig, values, "ctr").hidden_widths == (16,)
        assert build_section(CtrConfig, values, "ctr").finetune
        assert build_section(SyntheticSpec, values, "synthetic").num_users == 7
        assert build_section(CostModel, values, "cost").key_bytes == 8


class TestSettings:
    """Tests for environment settings."""

    def test_environment_prefix(self, monkeypatch, tmp_path):
        """PCFGNN_* variables configure the process."""
        monkeypatch.setenv("PCFGNN_LOG_LEVEL", "DEBUG")
        monkeypatch.setenv("PCFGNN_DATABASE_URL", f"sqlite:///{tmp_path}/runs.db")
        monkeypatch.setenv("PCFGNN_RECORD_RUNS", "false")
        settings = Settings()
        assert settings.log_level == "DEBUG"
        assert settings.database_url.endswith("runs.db")
        assert not settings.record_runs

    def test_cached(self):
        """get_settings returns one shared instance."""
        get_settings.cache_clear()
        assert get_settings() is get_settings()
        get_settings.cache_clear()
