"""Configuration loading, environment variable resolution, and validation."""

import dataclasses
import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

logger = logging.getLogger(__name__)

LANGUAGES = ("en", "zh", "de", "es", "other")
RANKERS = ("ours", "vanilla", "greedy", "random", "random-groups", "displacy")
DEFAULT_DISPLACY_LABELS = ("aux", "cop", "prt", "compound:prt", "case", "mark", "det")


class ConfigurationError(Exception):
    """Configuration is invalid or missing required fields."""

    pass


@dataclass(frozen=True)
class MiningConfig:
    """Thresholds for initial pairwise association mining."""

    min_item_freq: int = 5
    min_cooccurrence: int = 2
    min_confidence: float = 0.1
    min_lift: float = 1.1
    min_pair_jaccard: float = 0.01
    word_jaccard_filter: float = 0.6


@dataclass(frozen=True)
class TrainConfig:
    """Association classifier training configuration."""

    lr: float = 1e-4
    weight_decay: float = 1e-2
    batch_size: int = 64
    epochs: int = 30
    patience: int = 3
    plateau_factor: float = 0.5
    min_improvement: float = 1e-4
    dropout: float = 0.4
    hidden_dim: int = 128
    neg_ratio: int = 3
    val_fraction: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8


@dataclass(frozen=True)
class LanguageSettings:
    """Per-language inference thresholds."""

    tau: float = 0.60
    delta_seq: int = 8
    delta_dep: int = 2
    max_neg_ratio: int = 3
    min_item_freq: int = 5


DEFAULT_LANGUAGE_SETTINGS = {
    "en": LanguageSettings(),
    "zh": LanguageSettings(),
    "es": LanguageSettings(min_item_freq=3),
    "de": LanguageSettings(tau=0.75, delta_seq=12),
}


# Section key -> language row key, per section
ROW_KEYS = {
    "mining": {"min_item_freq": "min_item_freq"},
    "train": {"neg_ratio": "max_neg_ratio"},
    "merge": {"tau": "tau", "delta_seq": "delta_seq", "delta_dep": "delta_dep"},
}


@dataclass(frozen=True)
class MergeConfig:
    """Edge constraints for the per-sentence association graph."""

    tau: float = 0.60
    delta_seq: int = 8
    delta_dep: int = 2
    displacy_labels: tuple[str, ...] = DEFAULT_DISPLACY_LABELS


@dataclass(frozen=True)
class EmbeddingConfig:
    """Embedding provider selection."""

    provider: str = "hash"  # hash, file, remote
    dim: int = 256
    mrl_dim: Optional[int] = None
    seed: int = 0
    file: Optional[str] = None
    fallback: Optional[str] = "hash"  # hash or None
    cache: bool = True


@dataclass(frozen=True)
class ScorerConfig:
    """Disfluency scorer selection."""

    kind: str = "ngram"  # ngram, remote, stub
    order: int = 3
    k: float = 1.0
    stub_file: Optional[str] = None


@dataclass(frozen=True)
class RemoteConfig:
    """Remote backend configuration.

    The API key itself never lives in config; ``api_key_env`` names the
    environment variable holding it.
    """

    base_url: str = "http://localhost:8000"
    api_key_env: str = "EDITIMPACT_API_KEY"
    embedding_model: str = ""
    scoring_model: str = ""
    judge_model: str = ""
    timeout: float = 30.0
    max_retries: int = 3
    max_in_flight: int = 4
    backoff_base: float = 1.0
    rate_limit: Optional[int] = None
    rate_window: float = 10.0
    batch_size: int = 64
    logprobs: int = 1
    cache_dir: Optional[str] = None
    embeddings_path: str = "/v1/embeddings"
    completions_path: str = "/v1/completions"
    chat_path: str = "/v1/chat/completions"


@dataclass(frozen=True)
class EvalConfig:
    """Ranking metric configuration."""

    epsilon: float = 1e-9


@dataclass(frozen=True)
class PathsConfig:
    """Input and output locations."""

    pairs: Optional[str] = None
    train_pairs: Optional[str] = None
    parses: Optional[str] = None
    model: Optional[str] = None
    labels: Optional[str] = None
    lm_corpus: Optional[str] = None
    output_dir: str = "out"


@dataclass(frozen=True)
class LoggingConfig:
    """Logging configuration."""

    level: str = "INFO"
    format: str = "text"  # json, text


@dataclass(frozen=True)
class PipelineConfig:
    """Complete pipeline configuration."""

    language: str = "en"
    seed: int = 0
    min_edits: int = 3
    jobs: int = 1
    rankers: tuple[str, ...] = RANKERS
    mining: MiningConfig = field(default_factory=MiningConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    languages: dict[str, LanguageSettings] = field(
        default_factory=lambda: dict(DEFAULT_LANGUAGE_SETTINGS)
    )
    merge: MergeConfig = field(default_factory=MergeConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    scorer: ScorerConfig = field(default_factory=ScorerConfig)
    remote: RemoteConfig = field(default_factory=RemoteConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    logging: LoggingConfig = field(default_factory=LoggingConfig)
    # Row-level keys set explicitly in a section ("merge.tau", ...); these beat the language row
    pinned: tuple[str, ...] = ()

    def settings_for(self, language: Optional[str] = None) -> LanguageSettings:
        """Threshold row for a language; unknown languages use the English row."""
        language = language or self.language
        if language in self.languages:
            return self.languages[language]
        logger.warning(f"No threshold settings for language '{language}', using 'en'")
        return self.languages.get("en", LanguageSettings())

    def _from_row(self, section: str, language: Optional[str]) -> dict:
        """Language row values for the section's keys that were not pinned."""
        settings = self.settings_for(language)
        return {
            key: getattr(settings, row_key)
            for key, row_key in ROW_KEYS[section].items()
            if f"{section}.{key}" not in self.pinned
        }

    def mining_config(self, language: Optional[str] = None) -> MiningConfig:
        """Mining thresholds with the language row's item frequency applied."""
        return dataclasses.replace(self.mining, **self._from_row("mining", language))

    def merge_config(self, language: Optional[str] = None) -> MergeConfig:
        """Merge constraints taken from the language row unless set under merge."""
        return dataclasses.replace(self.merge, **self._from_row("merge", language))

    def train_config(self, language: Optional[str] = None) -> TrainConfig:
        """Training config with the language row's negative ratio applied."""
        return dataclasses.replace(self.train, **self._from_row("train", language))

    def to_dict(self) -> dict:
        """Convert config to dictionary for JSON serialization."""
        return dataclasses.asdict(self)


def resolve_env_value(value: str) -> str:
    """
    Resolve environment variable placeholders.

    Supports:
    - ${VAR} - Direct environment variable
    - ${VAR_FILE} - Read value from the file named by VAR_FILE

    Raises:
        ConfigurationError: If variable not found
    """
    if not isinstance(value, str):
        return value

    pattern = r'\$\{([^}]+)\}'

    def replacer(match):
        var_name = match.group(1)

        file_var = f"{var_name}_FILE"
        if file_var in os.environ:
            file_path = os.environ[file_var]
            try:
                with open(file_path, 'r') as f:
                    return f.read().strip()
            except FileNotFoundError:
                raise ConfigurationError(
                    f"File specified in {file_var} not found: {file_path}"
                )
            except IOError as e:
                raise ConfigurationError(
                    f"Error reading file from {file_var}: {e}"
                )

        if var_name in os.environ:
            return os.environ[var_name]

        raise ConfigurationError(
            f"Environment variable ${{{var_name}}} not found"
        )

    return re.sub(pattern, replacer, value)


def resolve_env_in_dict(data: dict) -> dict:
    """Recursively resolve environment variables in dictionary."""
    result = {}
    for key, value in data.items():
        if isinstance(value, str):
            result[key] = resolve_env_value(value)
        elif isinstance(value, dict):
            result[key] = resolve_env_in_dict(value)
        elif isinstance(value, list):
            result[key] = [
                resolve_env_value(item) if isinstance(item, str) else item
                for item in value
            ]
        else:
            result[key] = value
    return result


ENV_MAPPINGS = {
    "EDITIMPACT_LANGUAGE": (["language"], str),
    "EDITIMPACT_SEED": (["seed"], int),
    "EDITIMPACT_JOBS": (["jobs"], int),
    "EDITIMPACT_RANKERS": (["rankers"], list),
    "EDITIMPACT_OUTPUT_DIR": (["paths", "output_dir"], str),
    "EDITIMPACT_EMBEDDING_PROVIDER": (["embedding", "provider"], str),
    "EDITIMPACT_SCORER_KIND": (["scorer", "kind"], str),
    "EDITIMPACT_REMOTE_BASE_URL": (["remote", "base_url"], str),
    "EDITIMPACT_REMOTE_TIMEOUT": (["remote", "timeout"], float),
    "EDITIMPACT_REMOTE_MAX_IN_FLIGHT": (["remote", "max_in_flight"], int),
    "EDITIMPACT_REMOTE_CACHE_DIR": (["remote", "cache_dir"], str),
    "EDITIMPACT_LOGGING_LEVEL": (["logging", "level"], str),
    "EDITIMPACT_LOGGING_FORMAT": (["logging", "format"], str),
}


def apply_env_overrides(config_dict: dict) -> dict:
    """
    Apply environment variable overrides to config dict.

    Mapping: EDITIMPACT_SECTION_KEY → config[section][key]

    Examples:
        EDITIMPACT_SEED → config['seed']
        EDITIMPACT_REMOTE_BASE_URL → config['remote']['base_url']

    List values use comma separation:
        EDITIMPACT_RANKERS=ours,vanilla
    """
    for env_var, (path, kind) in ENV_MAPPINGS.items():
        if env_var not in os.environ:
            continue
        raw = os.environ[env_var]

        if kind is list:
            value: Any = [item.strip() for item in raw.split(",") if item.strip()]
        elif kind in (int, float):
            try:
                value = kind(raw)
            except ValueError:
                raise ConfigurationError(f"{env_var} must be a number, got '{raw}'")
        else:
            value = raw

        current = config_dict
        for key in path[:-1]:
            if not isinstance(current.get(key), dict):
                current[key] = {}
            current = current[key]
        current[path[-1]] = value

    return config_dict


def _build_section(cls, data: Optional[dict], section: str):
    """Construct a config dataclass from a mapping, rejecting unknown keys."""
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigurationError(f"Section '{section}' must be a mapping")

    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"Unknown keys in '{section}': {', '.join(unknown)}")

    values = {}
    for key, value in data.items():
        if isinstance(value, list):
            value = tuple(value)
        values[key] = value
    return cls(**values)


def _resolve_path(value: Optional[str], base: Path) -> Optional[str]:
    """Interpret relative paths against the config file's directory."""
    if value is None:
        return None
    candidate = Path(value)
    if candidate.is_absolute():
        return str(candidate)
    return str(base / candidate)


def build_config(config_dict: dict, base_dir: Optional[Path] = None) -> PipelineConfig:
    """Build and validate a PipelineConfig from a plain mapping."""
    top_level = {
        "language", "seed", "min_edits", "jobs", "rankers", "mining", "train",
        "languages", "merge", "embedding", "scorer", "remote", "eval", "paths",
        "logging",
    }
    unknown = sorted(set(config_dict) - top_level)
    if unknown:
        raise ConfigurationError(f"Unknown configuration sections: {', '.join(unknown)}")

    try:
        languages = dict(DEFAULT_LANGUAGE_SETTINGS)
        for lang, row in (config_dict.get("languages") or {}).items():
            base_row = languages.get(lang, LanguageSettings())
            merged = {**dataclasses.asdict(base_row), **(row or {})}
            languages[lang] = _build_section(LanguageSettings, merged, f"languages.{lang}")

        paths = _build_section(PathsConfig, config_dict.get("paths"), "paths")
        embedding = _build_section(EmbeddingConfig, config_dict.get("embedding"), "embedding")
        scorer = _build_section(ScorerConfig, config_dict.get("scorer"), "scorer")
        remote = _build_section(RemoteConfig, config_dict.get("remote"), "remote")

        if base_dir is not None:
            paths = dataclasses.replace(paths, **{
                f.name: _resolve_path(getattr(paths, f.name), base_dir)
                for f in dataclasses.fields(paths)
            })
            embedding = dataclasses.replace(embedding, file=_resolve_path(embedding.file, base_dir))
            scorer = dataclasses.replace(scorer, stub_file=_resolve_path(scorer.stub_file, base_dir))
            remote = dataclasses.replace(remote, cache_dir=_resolve_path(remote.cache_dir, base_dir))

        config = PipelineConfig(
            language=config_dict.get("language", "en"),
            seed=config_dict.get("seed", 0),
            min_edits=config_dict.get("min_edits", 3),
            jobs=config_dict.get("jobs", 1),
            rankers=tuple(config_dict.get("rankers") or RANKERS),
            mining=_build_section(MiningConfig, config_dict.get("mining"), "mining"),
            train=_build_section(TrainConfig, config_dict.get("train"), "train"),
            languages=languages,
            merge=_build_section(MergeConfig, config_dict.get("merge"), "merge"),
            embedding=embedding,
            scorer=scorer,
            remote=remote,
            eval=_build_section(EvalConfig, config_dict.get("eval"), "eval"),
            paths=paths,
            logging=_build_section(LoggingConfig, config_dict.get("logging"), "logging"),
            pinned=tuple(sorted(
                f"{section}.{key}"
                for section, keys in ROW_KEYS.items()
                if isinstance(config_dict.get(section), dict)
                for key in keys
                if key in config_dict[section]
            )),
        )
    except TypeError as e:
        raise ConfigurationError(f"Invalid configuration type: {e}")

    validate_config(config)
    return config


def load_config(path: Path | None = None) -> PipelineConfig:
    """
    Load configuration from a YAML or JSON file with environment variable resolution.

    Resolution order:
    1. Load the file (JSON is read by the YAML loader)
    2. Resolve ${VAR} and ${VAR_FILE} placeholders
    3. Apply EDITIMPACT_* environment overrides
    4. Build and validate the frozen PipelineConfig

    Without a path, built-in defaults plus environment overrides are used.

    Raises:
        ConfigurationError: If config is invalid or the file cannot be read
    """
    config_dict: dict = {}
    base_dir = None

    if path is not None:
        path = Path(path)
        try:
            with open(path, 'r', encoding='utf-8') as f:
                config_dict = yaml.safe_load(f) or {}
        except FileNotFoundError:
            raise ConfigurationError(f"Config file not found: {path}")
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Invalid YAML/JSON in config file {path}: {e}")

        if not isinstance(config_dict, dict):
            raise ConfigurationError(f"Config file {path} must contain a mapping")
        base_dir = path.resolve().parent

    config_dict = resolve_env_in_dict(config_dict)
    config_dict = apply_env_overrides(config_dict)

    return build_config(config_dict, base_dir)


def validate_config(config: PipelineConfig) -> None:
    """
    Validate configuration completeness and correctness.

    Raises:
        ConfigurationError: With details of all validation failures
    """
    errors = []

    valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
    if str(config.logging.level).upper() not in valid_levels:
        errors.append(
            f"Invalid logging.level: {config.logging.level}. "
            f"Must be one of: {', '.join(valid_levels)}"
        )

    valid_formats = ["json", "text"]
    if config.logging.format not in valid_formats:
        errors.append(
            f"Invalid logging.format: {config.logging.format}. "
            f"Must be one of: {', '.join(valid_formats)}"
        )

    if not isinstance(config.seed, int) or isinstance(config.seed, bool) or config.seed < 0:
        errors.append(f"Invalid seed: {config.seed}. Must be a non-negative integer")
    if not isinstance(config.jobs, int) or config.jobs < 1:
        errors.append(f"Invalid jobs: {config.jobs}. Must be >= 1")
    if not isinstance(config.min_edits, int) or config.min_edits < 1:
        errors.append(f"Invalid min_edits: {config.min_edits}. Must be >= 1")

    unknown_rankers = [r for r in config.rankers if r not in RANKERS]
    if unknown_rankers:
        errors.append(
            f"Unknown rankers: {', '.join(unknown_rankers)}. "
            f"Must be among: {', '.join(RANKERS)}"
        )

    mining = config.mining
    if mining.min_item_freq < 1 or mining.min_cooccurrence < 1:
        errors.append("mining.min_item_freq and mining.min_cooccurrence must be >= 1")
    for name in ("min_confidence", "min_lift", "min_pair_jaccard", "word_jaccard_filter"):
        if getattr(mining, name) <= 0:
            errors.append(f"Invalid mining.{name}: {getattr(mining, name)}. Must be positive")

    train = config.train
    if train.lr < 0:
        errors.append(f"Invalid train.lr: {train.lr}. Must be >= 0")
    if train.weight_decay < 0:
        errors.append(f"Invalid train.weight_decay: {train.weight_decay}. Must be >= 0")
    if train.batch_size < 2:
        errors.append(f"Invalid train.batch_size: {train.batch_size}. Must be >= 2")
    if train.epochs < 1 or train.patience < 1 or train.hidden_dim < 1:
        errors.append("train.epochs, train.patience and train.hidden_dim must be >= 1")
    if not 0 < train.plateau_factor < 1:
        errors.append(f"Invalid train.plateau_factor: {train.plateau_factor}. Must be in (0, 1)")
    if not 0 <= train.dropout < 1:
        errors.append(f"Invalid train.dropout: {train.dropout}. Must be in [0, 1)")
    if train.neg_ratio < 1:
        errors.append(f"Invalid train.neg_ratio: {train.neg_ratio}. Must be >= 1")
    if not 0 <= train.val_fraction < 1:
        errors.append(f"Invalid train.val_fraction: {train.val_fraction}. Must be in [0, 1)")

    for lang, row in config.languages.items():
        if not 0 < row.tau < 1:
            errors.append(f"Invalid languages.{lang}.tau: {row.tau}. Must be in (0, 1)")
        if row.delta_seq < 0 or row.delta_dep < 0:
            errors.append(f"languages.{lang} deltas must be >= 0")
        if row.max_neg_ratio < 1 or row.min_item_freq < 1:
            errors.append(f"languages.{lang}.max_neg_ratio and min_item_freq must be >= 1")

    if not 0 < config.merge.tau < 1:
        errors.append(f"Invalid merge.tau: {config.merge.tau}. Must be in (0, 1)")

    embedding = config.embedding
    if embedding.provider not in ("hash", "file", "remote"):
        errors.append(
            f"Invalid embedding.provider: {embedding.provider}. "
            f"Must be one of: hash, file, remote"
        )
    if embedding.dim < 1:
        errors.append(f"Invalid embedding.dim: {embedding.dim}. Must be >= 1")
    if embedding.mrl_dim is not None and embedding.mrl_dim < 1:
        errors.append(f"Invalid embedding.mrl_dim: {embedding.mrl_dim}. Must be >= 1")
    if embedding.provider == "file" and not embedding.file:
        errors.append("embedding.file is required when embedding.provider is 'file'")
    if embedding.fallback not in (None, "hash"):
        errors.append(f"Invalid embedding.fallback: {embedding.fallback}. Must be 'hash' or null")
    if embedding.provider == "remote" and not config.remote.embedding_model:
        errors.append("remote.embedding_model is required when embedding.provider is 'remote'")

    scorer = config.scorer
    if scorer.kind not in ("ngram", "remote", "stub"):
        errors.append(f"Invalid scorer.kind: {scorer.kind}. Must be one of: ngram, remote, stub")
    if scorer.order < 1:
        errors.append(f"Invalid scorer.order: {scorer.order}. Must be >= 1")
    if scorer.k <= 0:
        errors.append(f"Invalid scorer.k: {scorer.k}. Must be positive")
    if scorer.kind == "stub" and not scorer.stub_file:
        errors.append("scorer.stub_file is required when scorer.kind is 'stub'")
    if scorer.kind == "remote" and not config.remote.scoring_model:
        errors.append("remote.scoring_model is required when scorer.kind is 'remote'")

    remote = config.remote
    if remote.timeout <= 0:
        errors.append(f"Invalid remote.timeout: {remote.timeout}. Must be positive")
    if remote.max_retries < 0:
        errors.append(f"Invalid remote.max_retries: {remote.max_retries}. Must be >= 0")
    if remote.max_in_flight < 1:
        errors.append(f"Invalid remote.max_in_flight: {remote.max_in_flight}. Must be >= 1")
    if remote.rate_limit is not None and remote.rate_limit < 1:
        errors.append(f"Invalid remote.rate_limit: {remote.rate_limit}. Must be >= 1")
    if remote.batch_size < 1:
        errors.append(f"Invalid remote.batch_size: {remote.batch_size}. Must be >= 1")

    if config.eval.epsilon <= 0:
        errors.append(f"Invalid eval.epsilon: {config.eval.epsilon}. Must be positive")

    if errors:
        raise ConfigurationError("Configuration validation failed:\n" + "\n".join(f"  - {e}" for e in errors))
