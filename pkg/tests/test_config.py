"""Tests for config module."""

import dataclasses
import os
import pytest
import tempfile
from pathlib import Path

from src.config import (
    RANKERS,
    ConfigurationError,
    PipelineConfig,
    apply_env_overrides,
    build_config,
    load_config,
    resolve_env_in_dict,
    resolve_env_value,
    validate_config,
)


@pytest.mark.unit
def test_resolve_env_value_direct():
    """Test resolving direct environment variable."""
    os.environ["TEST_VAR"] = "test_value"

    result = resolve_env_value("${TEST_VAR}")

    assert result == "test_value"

    del os.environ["TEST_VAR"]


@pytest.mark.unit
def test_resolve_env_value_file():
    """Test resolving environment variable from file."""
    with tempfile.NamedTemporaryFile(mode='w', delete=False) as f:
        f.write("secret_value\n")
        temp_file = f.name

    os.environ["TEST_VAR_FILE"] = temp_file

    result = resolve_env_value("${TEST_VAR}")

    assert result == "secret_value"

    del os.environ["TEST_VAR_FILE"]
    os.unlink(temp_file)


@pytest.mark.unit
def test_resolve_env_value_missing():
    """Test resolving missing environment variable."""
    with pytest.raises(ConfigurationError):
        resolve_env_value("${NONEXISTENT_VAR}")


@pytest.mark.unit
def test_resolve_env_in_dict_nested(monkeypatch):
    """Test placeholders are resolved inside nested sections and lists."""
    monkeypatch.setenv("CACHE_ROOT", "/var/cache/editimpact")

    result = resolve_env_in_dict({
        "remote": {"cache_dir": "${CACHE_ROOT}/remote", "timeout": 5},
        "rankers": ["ours", "${CACHE_ROOT}"],
    })

    assert result["remote"]["cache_dir"] == "/var/cache/editimpact/remote"
    assert result["remote"]["timeout"] == 5
    assert result["rankers"][1] == "/var/cache/editimpact"


@pytest.mark.unit
def test_apply_env_overrides(monkeypatch):
    """Test applying environment variable overrides."""
    monkeypatch.setenv("EDITIMPACT_SEED", "17")
    monkeypatch.setenv("EDITIMPACT_RANKERS", "ours, vanilla")
    monkeypatch.setenv("EDITIMPACT_REMOTE_BASE_URL", "http://gpu-box:8000")

    config = apply_env_overrides({})

    assert config["seed"] == 17
    assert config["rankers"] == ["ours", "vanilla"]
    assert config["remote"]["base_url"] == "http://gpu-box:8000"


@pytest.mark.unit
def test_apply_env_overrides_integer_parsing(monkeypatch):
    """Test non-numeric values for numeric settings are rejected."""
    monkeypatch.setenv("EDITIMPACT_JOBS", "many")

    with pytest.raises(ConfigurationError, match="EDITIMPACT_JOBS"):
        apply_env_overrides({})


@pytest.mark.unit
def test_load_config_defaults():
    """Test loading without a file gives the built-in defaults."""
    config = load_config()

    assert config.language == "en"
    assert config.seed == 0
    assert config.min_edits == 3
    assert config.rankers == RANKERS
    assert config.merge.tau == 0.60
    assert config.train.hidden_dim == 128
    assert config.embedding.provider == "hash"
    assert config.scorer.kind == "ngram"


@pytest.mark.unit
def test_load_config_from_yaml(temp_dir):
    """Test loading configuration from YAML file."""
    config_path = temp_dir / "config.yaml"
    config_path.write_text(
        "language: de\n"
        "seed: 42\n"
        "min_edits: 1\n"
        "rankers: [ours, vanilla]\n"
        "train:\n"
        "  epochs: 5\n"
        "languages:\n"
        "  de:\n"
        "    tau: 0.8\n"
        "paths:\n"
        "  pairs: data/pairs.jsonl\n"
        "logging:\n"
        "  level: DEBUG\n"
    )

    config = load_config(config_path)

    assert config.language == "de"
    assert config.seed == 42
    assert config.rankers == ("ours", "vanilla")
    assert config.train.epochs == 5
    assert config.languages["de"].tau == 0.8
    # the rest of the row keeps its defaults
    assert config.languages["de"].delta_seq == 12
    assert config.logging.level == "DEBUG"


@pytest.mark.unit
def test_load_config_json(temp_dir):
    """Test JSON config files are read by the same loader."""
    config_path = temp_dir / "config.json"
    config_path.write_text('{"seed": 7, "scorer": {"order": 2}}')

    config = load_config(config_path)

    assert config.seed == 7
    assert config.scorer.order == 2


@pytest.mark.unit
def test_load_config_relative_paths(temp_dir):
    """Test relative paths are resolved against the config file directory."""
    config_path = temp_dir / "config.yaml"
    config_path.write_text("paths:\n  pairs: pairs.jsonl\n  output_dir: runs/a\n")

    config = load_config(config_path)

    assert Path(config.paths.pairs) == temp_dir.resolve() / "pairs.jsonl"
    assert Path(config.paths.output_dir) == temp_dir.resolve() / "runs" / "a"


@pytest.mark.unit
def test_load_config_yaml_parse_error(temp_dir):
    """Test handling of invalid YAML."""
    config_path = temp_dir / "config.yaml"
    config_path.write_text("seed: [unclosed\n")

    with pytest.raises(ConfigurationError, match="Invalid YAML"):
        load_config(config_path)


@pytest.mark.unit
def test_load_config_missing_file(temp_dir):
    """Test a missing config file is a configuration error."""
    with pytest.raises(ConfigurationError, match="not found"):
        load_config(temp_dir / "absent.yaml")


@pytest.mark.unit
def test_build_config_unknown_section():
    """Test unknown top-level sections are rejected."""
    with pytest.raises(ConfigurationError, match="storage"):
        build_config({"storage": {"path": "x"}})


@pytest.mark.unit
def test_build_config_unknown_key():
    """Test unknown keys inside a section are rejected."""
    with pytest.raises(ConfigurationError, match="learning_rate"):
        build_config({"train": {"learning_rate": 0.1}})


@pytest.mark.unit
def test_validate_config_invalid_logging_level():
    """Test validation of invalid logging level."""
    config = dataclasses.replace(
        PipelineConfig(), logging=dataclasses.replace(PipelineConfig().logging, level="LOUD")
    )

    with pytest.raises(ConfigurationError, match="logging.level"):
        validate_config(config)


@pytest.mark.unit
def test_validate_config_collects_all_errors():
    """Test every failing field is reported at once."""
    with pytest.raises(ConfigurationError) as exc_info:
        build_config({"seed": -1, "jobs": 0, "merge": {"tau": 1.5}, "rankers": ["oracle"]})

    message = str(exc_info.value)
    assert "seed" in message
    assert "jobs" in message
    assert "merge.tau" in message
    assert "oracle" in message


@pytest.mark.unit
def test_validate_config_stub_scorer_needs_file():
    """Test the stub scorer requires its table."""
    with pytest.raises(ConfigurationError, match="stub_file"):
        build_config({"scorer": {"kind": "stub"}})


@pytest.mark.unit
def test_validate_config_remote_needs_models():
    """Test remote providers require model names."""
    with pytest.raises(ConfigurationError) as exc_info:
        build_config({"embedding": {"provider": "remote"}, "scorer": {"kind": "remote"}})

    assert "remote.embedding_model" in str(exc_info.value)
    assert "remote.scoring_model" in str(exc_info.value)


@pytest.mark.unit
def test_validate_config_valid():
    """Test validation of valid config."""
    validate_config(PipelineConfig())


@pytest.mark.unit
def test_language_rows():
    """Test per-language thresholds feed the merge, mining and training sections."""
    config = PipelineConfig()

    de = config.merge_config("de")
    assert (de.tau, de.delta_seq, de.delta_dep) == (0.75, 12, 2)

    en = config.merge_config("en")
    assert (en.tau, en.delta_seq, en.delta_dep) == (0.60, 8, 2)

    assert config.mining_config("es").min_item_freq == 3
    assert config.train_config("zh").neg_ratio == 3


@pytest.mark.unit
def test_section_values_override_language_rows():
    """Test row-level keys set under mining, train or merge win for every language."""
    config = build_config({
        "train": {"neg_ratio": 7},
        "merge": {"tau": 0.9},
        "mining": {"min_item_freq": 2},
    })

    assert config.train_config("en").neg_ratio == 7
    assert config.mining_config("es").min_item_freq == 2
    de = config.merge_config("de")
    assert de.tau == 0.9
    assert (de.delta_seq, de.delta_dep) == (12, 2)
    assert config.pinned == ("merge.tau", "mining.min_item_freq", "train.neg_ratio")


@pytest.mark.unit
def test_unset_section_values_follow_language_rows():
    """Test a section without row-level keys keeps taking them from the row."""
    config = build_config({"train": {"lr": 0.01}, "merge": {"displacy_labels": ["aux"]}})

    assert config.pinned == ()
    assert config.train_config("de").neg_ratio == 3
    assert config.merge_config("de").tau == 0.75


@pytest.mark.unit
def test_unknown_language_falls_back_to_english(caplog):
    """Test an unknown language tag uses the English row and warns."""
    config = PipelineConfig()

    settings = config.settings_for("fr")

    assert settings == config.languages["en"]
    assert "fr" in caplog.text


@pytest.mark.unit
def test_to_dict_is_plain():
    """Test the serialized config holds plain sections."""
    data = PipelineConfig(seed=3).to_dict()

    assert data["seed"] == 3
    assert data["paths"]["output_dir"] == "out"
    assert data["languages"]["de"]["tau"] == 0.75
