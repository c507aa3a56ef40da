"""Command-line entry point."""

import argparse
import dataclasses
import json
import logging
import logging.config
import sys
from pathlib import Path
from typing import Optional, Sequence

from .assoc import load_model, save_model
from .clients.judge import JudgeClient
from .config import LANGUAGES, RANKERS, ConfigurationError, PipelineConfig, load_config, validate_config
from .corpus import corpus_stats, load_conllu, load_pairs
from .edits import load_edit_sets, save_edit_sets
from .errors import BackendError, DataError
from .evaluation import evaluate, load_labels, save_labels
from .jsonl import write_json, write_jsonl
from .merge import (
    associations_to_dot,
    build_graph,
    graph_to_dot,
    merge_record,
    singleton_groups,
    top_associations,
)
from .metrics import track_stage, write_metrics
from .mining import item_key, save_associations
from .manifest import ManifestError, RunManifest, config_digest
from .pipeline import MANIFEST_NAME, MergeResult, Pipeline, load_merges, load_rankings, pair_languages

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BACKEND = 3


class UsageError(Exception):
    """Command line is invalid."""

    pass


class JsonFormatter(logging.Formatter):
    """One JSON object per record."""

    def format(self, record: logging.LogRecord) -> str:
        entry = {
            "time": self.formatTime(record, "%Y-%m-%dT%H:%M:%S"),
            "name": record.name,
            "level": record.levelname,
            "message": record.getMessage(),
        }
        if record.exc_info:
            entry["exc_info"] = self.formatException(record.exc_info)
        return json.dumps(entry, ensure_ascii=False)


def setup_logging(logging_config) -> None:
    """Configure logging on stderr; stdout stays free for command output."""
    level = getattr(logging, str(logging_config.level).upper(), logging.INFO)

    if logging_config.format == "json":
        formatter = {'()': JsonFormatter}
    else:
        formatter = {
            'format': '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
            'datefmt': '%Y-%m-%d %H:%M:%S',
        }

    logging.config.dictConfig({
        'version': 1,
        'disable_existing_loggers': False,
        'formatters': {'default': formatter},
        'handlers': {
            'console': {
                'class': 'logging.StreamHandler',
                'formatter': 'default',
                'stream': 'ext://sys.stderr',
            }
        },
        'root': {'level': level, 'handlers': ['console']},
    })


class ArgumentParser(argparse.ArgumentParser):
    """Raises instead of exiting so the caller picks the exit code."""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML or JSON configuration file")
    common.add_argument("--seed", type=int, help="Run seed (overrides config)")
    common.add_argument("--language", choices=LANGUAGES, help="Default language (overrides config)")
    common.add_argument("--jobs", type=int, help="Worker threads for per-sentence stages")
    common.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"])
    common.add_argument("--log-format", choices=["text", "json"])
    common.add_argument("--metrics-file", type=Path, help="Write Prometheus metrics here on exit")

    parser = ArgumentParser(prog="editimpact", description="Edit impact ranking for grammatical error correction")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=ArgumentParser)
    sub.required = True

    p = sub.add_parser("extract", parents=[common], help="Extract atomic edits from sentence pairs")
    p.add_argument("--pairs", type=Path, help="Pairs JSON Lines {id, source, target, lang}")
    p.add_argument("--out", type=Path, required=True, help="Edit sets output")
    p.add_argument("--min-edits", type=int, default=1, help="Drop pairs with fewer edits (default 1)")

    p = sub.add_parser("stats", parents=[common], help="Corpus statistics before and after edit filtering")
    p.add_argument("--pairs", type=Path, help="Pairs JSON Lines")
    p.add_argument("--min-edits", type=int, help="Edit filter threshold (default from config)")
    p.add_argument("--out", type=Path, help="Write JSON here instead of stdout")

    p = sub.add_parser("mine", parents=[common], help="Mine co-occurring edit associations")
    p.add_argument("--pairs", type=Path, help="Training pairs JSON Lines")
    p.add_argument("--out", type=Path, required=True, help="Associations output")

    p = sub.add_parser("train-assoc", parents=[common], help="Train the association classifier")
    p.add_argument("--pairs", type=Path, help="Training pairs JSON Lines")
    p.add_argument("--out", type=Path, required=True, help="Model output")
    p.add_argument("--training-log", type=Path, help="Per-epoch training log output")

    p = sub.add_parser("merge", parents=[common], help="Group associated edits per sentence")
    p.add_argument("--pairs", type=Path, help="Pairs JSON Lines")
    p.add_argument("--edits", type=Path, help="Edit sets (extracted from the pairs when omitted)")
    p.add_argument("--model", type=Path, help="Association model")
    p.add_argument("--parses", type=Path, help="CoNLL-U parses of the targets")
    p.add_argument("--out", type=Path, required=True, help="Merge groups output")

    p = sub.add_parser("rank", parents=[common], help="Rank edits with the configured rankers")
    p.add_argument("--pairs", type=Path, help="Pairs JSON Lines")
    p.add_argument("--edits", type=Path, help="Edit sets (extracted from the pairs when omitted)")
    p.add_argument("--merges", type=Path, help="Merge groups (singletons when omitted)")
    p.add_argument("--rankers", help=f"Comma-separated subset of: {', '.join(RANKERS)}")
    p.add_argument("--out", type=Path, required=True, help="Rankings output")

    p = sub.add_parser("eval", parents=[common], help="Score rankings against labels")
    p.add_argument("--rankings", type=Path, required=True, help="Rankings JSON Lines")
    p.add_argument("--labels", type=Path, help="Labels JSON Lines {id, labels}")
    p.add_argument("--pairs", type=Path, help="Pairs, enabling the length and density breakdown")
    p.add_argument("--out", type=Path, help="Write the report here instead of stdout")

    p = sub.add_parser("export-graph", parents=[common], help="Write association graphs as DOT")
    p.add_argument("--pairs", type=Path, help="Pairs JSON Lines")
    p.add_argument("--model", type=Path, help="Association model")
    p.add_argument("--parses", type=Path, help="CoNLL-U parses of the targets")
    p.add_argument("--ids", help="Comma-separated pair ids (default all)")
    p.add_argument("--top", type=int, help="Also export the top-N corpus associations")
    p.add_argument("--focus", help="Restrict --top to pairs containing this item key")
    p.add_argument("--out-dir", type=Path, required=True, help="Directory for .dot files")

    p = sub.add_parser("label", parents=[common], help="Label edits with the remote judge")
    p.add_argument("--pairs", type=Path, help="Pairs JSON Lines")
    p.add_argument("--edits", type=Path, help="Edit sets (extracted from the pairs when omitted)")
    p.add_argument("--out", type=Path, required=True, help="Labels output")

    p = sub.add_parser("pipeline", parents=[common], help="Run every stage and write a run manifest")
    p.add_argument("--out-dir", type=Path, help="Output directory (overrides config)")

    p = sub.add_parser("verify", parents=[common], help="Check pipeline artifacts against their run manifest")
    p.add_argument("--out-dir", type=Path, help="Pipeline output directory (default from config)")
    p.add_argument("--out", type=Path, help="Write the report here instead of stdout")

    return parser


def apply_cli_overrides(config: PipelineConfig, args: argparse.Namespace) -> PipelineConfig:
    """Flags override config values; the result is re-validated."""
    updates = {}
    for name in ("seed", "language", "jobs"):
        value = getattr(args, name, None)
        if value is not None:
            updates[name] = value
    if getattr(args, "rankers", None):
        updates["rankers"] = tuple(r.strip() for r in args.rankers.split(",") if r.strip())

    logging_updates = {}
    if getattr(args, "log_level", None):
        logging_updates["level"] = args.log_level
    if getattr(args, "log_format", None):
        logging_updates["format"] = args.log_format
    if logging_updates:
        updates["logging"] = dataclasses.replace(config.logging, **logging_updates)

    if not updates:
        return config
    config = dataclasses.replace(config, **updates)
    validate_config(config)
    return config


def _require(path: Optional[Path], fallback: Optional[str], flag: str) -> Path:
    if path is not None:
        return path
    if fallback:
        return Path(fallback)
    raise UsageError(f"{flag} is required (or set it in the config file)")


def _emit(data: dict, out: Optional[Path]) -> None:
    if out is None:
        json.dump(data, sys.stdout, indent=2, sort_keys=True, ensure_ascii=False)
        sys.stdout.write("\n")
    else:
        write_json(out, data)


def _pairs_and_edits(args, config: PipelineConfig, pipeline: Pipeline):
    pairs = load_pairs(_require(args.pairs, config.paths.pairs, "--pairs"))
    if getattr(args, "edits", None):
        edit_sets = load_edit_sets(args.edits, pair_languages(pairs))
        by_id = {edit_set.pair_id: edit_set for edit_set in edit_sets}
        pairs = [pair for pair in pairs if pair.id in by_id]
        return pairs, [by_id[pair.id] for pair in pairs]
    return pipeline.extract(pairs, config.min_edits)


# ============ Subcommands ============

def cmd_extract(args, config: PipelineConfig) -> None:
    with Pipeline(config) as pipeline, track_stage("extract") as info:
        pairs = load_pairs(_require(args.pairs, config.paths.pairs, "--pairs"))
        _, edit_sets = pipeline.extract(pairs, args.min_edits)
        info["records"] = save_edit_sets(args.out, edit_sets)


def cmd_stats(args, config: PipelineConfig) -> None:
    with Pipeline(config) as pipeline:
        pairs = load_pairs(_require(args.pairs, config.paths.pairs, "--pairs"))
        min_edits = args.min_edits if args.min_edits is not None else config.min_edits
        kept, _ = pipeline.extract(pairs, min_edits)
    report = {"all": corpus_stats(pairs).to_dict(), "min_edits": min_edits}
    report["filtered"] = corpus_stats(kept).to_dict() if kept else None
    _emit(report, args.out)


def cmd_mine(args, config: PipelineConfig) -> None:
    with Pipeline(config) as pipeline, track_stage("mine") as info:
        pairs = load_pairs(_require(args.pairs, config.paths.train_pairs or config.paths.pairs, "--pairs"))
        associations, _ = pipeline.mine(pairs)
        info["records"] = save_associations(args.out, associations)


def cmd_train_assoc(args, config: PipelineConfig) -> None:
    with Pipeline(config) as pipeline, track_stage("train-assoc") as info:
        pairs = load_pairs(_require(args.pairs, config.paths.train_pairs or config.paths.pairs, "--pairs"))
        associations, tables = pipeline.mine(pairs)
        model, log = pipeline.train(pipeline.training_pairs(associations, tables))
        save_model(model, args.out)
        if args.training_log:
            write_json(args.training_log, log.to_dict())
        info["records"] = log.n_train


def cmd_merge(args, config: PipelineConfig) -> None:
    with Pipeline(config) as pipeline, track_stage("merge") as info:
        pairs, edit_sets = _pairs_and_edits(args, config, pipeline)
        model = load_model(_require(args.model, config.paths.model, "--model"))
        parses = args.parses or (Path(config.paths.parses) if config.paths.parses else None)
        trees = load_conllu(parses) if parses else {}
        merges = pipeline.merge(pairs, edit_sets, model, trees)
        info["records"] = write_jsonl(
            args.out, (merge_record(m.pair_id, m.groups, m.warnings, m.displacy_groups) for m in merges)
        )


def cmd_rank(args, config: PipelineConfig) -> None:
    with Pipeline(config) as pipeline, track_stage("rank") as info:
        pairs, edit_sets = _pairs_and_edits(args, config, pipeline)
        if args.merges:
            merges_by_id = load_merges(args.merges)
            missing = [pair.id for pair in pairs if pair.id not in merges_by_id]
            if missing:
                raise DataError(f"{args.merges}: no merge record for ids {', '.join(missing[:5])}")
            merges = [merges_by_id[pair.id] for pair in pairs]
        else:
            merges = [
                MergeResult(pair.id, singleton_groups(len(edit_set)), singleton_groups(len(edit_set)))
                for pair, edit_set in zip(pairs, edit_sets)
            ]
        scorer = pipeline.scorer(pair.target for pair in pairs)
        rankings = pipeline.rank(pairs, edit_sets, merges, scorer)
        info["records"] = write_jsonl(args.out, (ranked.to_dict() for ranked in rankings))


def cmd_eval(args, config: PipelineConfig) -> None:
    with track_stage("eval") as info:
        rankings = load_rankings(args.rankings)
        labels = load_labels(_require(args.labels, config.paths.labels, "--labels"))
        lengths = None
        if args.pairs:
            lengths = {pair.id: len(pair.target) for pair in load_pairs(args.pairs)}
        report = evaluate(rankings, labels, config.eval, target_lengths=lengths)
        info["records"] = len(report["instances"])
        _emit(report, args.out)


def cmd_export_graph(args, config: PipelineConfig) -> None:
    with Pipeline(config) as pipeline:
        pairs, edit_sets = _pairs_and_edits(args, config, pipeline)
        model = load_model(_require(args.model, config.paths.model, "--model"))
        parses = args.parses or (Path(config.paths.parses) if config.paths.parses else None)
        trees = load_conllu(parses) if parses else {}
        wanted = {i.strip() for i in args.ids.split(",")} if args.ids else None

        args.out_dir.mkdir(parents=True, exist_ok=True)
        written = 0
        items = []
        for pair, edit_set in zip(pairs, edit_sets):
            items.extend(item_key(edit) for edit in edit_set)
            if wanted is not None and pair.id not in wanted:
                continue
            graph = build_graph(
                edit_set, model, pipeline.provider, config.merge_config(pair.language), trees.get(pair.id)
            )
            (args.out_dir / f"{pair.id}.dot").write_text(graph_to_dot(graph), encoding="utf-8")
            written += 1

        if args.top:
            associations = top_associations(items, model, pipeline.provider, n=args.top, focus=args.focus)
            (args.out_dir / "associations.dot").write_text(associations_to_dot(associations), encoding="utf-8")
            write_jsonl(
                args.out_dir / "associations.jsonl",
                ({"item_a": a, "item_b": b, "r": r} for a, b, r in associations),
            )
    logger.info(f"Wrote {written} sentence graphs to {args.out_dir}")


def cmd_label(args, config: PipelineConfig) -> None:
    with Pipeline(config) as pipeline, track_stage("label") as info:
        pairs, edit_sets = _pairs_and_edits(args, config, pipeline)
        with JudgeClient(config.remote, cache_dir=pipeline.cache_dir) as judge:
            labels = pipeline.label(pairs, edit_sets, judge)
        info["records"] = save_labels(args.out, labels)


def cmd_pipeline(args, config: PipelineConfig) -> None:
    with Pipeline(config, out_dir=args.out_dir) as pipeline:
        pipeline.run()


def cmd_verify(args, config: PipelineConfig) -> None:
    """Check an output directory against its run manifest."""
    out_dir = args.out_dir or Path(config.paths.output_dir)
    manifest_path = out_dir / MANIFEST_NAME
    manifest = RunManifest.load(manifest_path)

    stale = manifest.verify(out_dir)
    config_matches = None
    if args.config is not None:
        config_matches = manifest.config_hash == config_digest(config)

    report = {
        "manifest": str(manifest_path),
        "seed": manifest.seed,
        "stages": sorted(manifest.stages),
        "stale_stages": stale,
        "config_matches": config_matches,
    }
    _emit(report, args.out)

    if stale:
        raise ManifestError(f"{manifest_path}: stale or missing artifacts for {', '.join(stale)}")
    if config_matches is False:
        raise ManifestError(f"{manifest_path}: written under a different configuration")
    logger.info(f"All {len(manifest.stages)} artifacts in {out_dir} match {manifest_path}")


COMMANDS = {
    "extract": cmd_extract,
    "stats": cmd_stats,
    "mine": cmd_mine,
    "train-assoc": cmd_train_assoc,
    "merge": cmd_merge,
    "rank": cmd_rank,
    "eval": cmd_eval,
    "export-graph": cmd_export_graph,
    "label": cmd_label,
    "pipeline": cmd_pipeline,
    "verify": cmd_verify,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one subcommand.

    Returns:
        0 success, 1 usage or configuration error, 2 data error, 3 backend error
    """
    try:
        args = build_parser().parse_args(argv)
        config = apply_cli_overrides(load_config(args.config), args)
    except (UsageError, ConfigurationError) as e:
        print(f"Usage error: {e}", file=sys.stderr)
        return EXIT_USAGE

    setup_logging(config.logging)
    logger.debug(f"Running '{args.command}' with seed {config.seed}")

    code = EXIT_OK
    try:
        COMMANDS[args.command](args, config)
    except (UsageError, ConfigurationError) as e:
        logger.error(f"Usage error: {e}")
        code = EXIT_USAGE
    except DataError as e:
        logger.error(f"Data error: {e}")
        code = EXIT_DATA
    except BackendError as e:
        logger.error(f"Backend error: {e}")
        code = EXIT_BACKEND
    finally:
        if args.metrics_file:
            write_metrics(args.metrics_file)

    return code


if __name__ == "__main__":
    sys.exit(main())
