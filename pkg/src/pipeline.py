"""Stage orchestration: extract, mine, train, merge, rank, evaluate."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, TypeVar

from .assoc import AssociationClassifier, TrainingError, load_model, sample_negatives, save_model, train
from .clients.judge import JudgeClient, judge_pair
from .clients.perplexity import PerplexityClient
from .config import PipelineConfig
from .corpus import CorpusError, corpus_stats, filter_min_edits, load_conllu, load_pairs, tokenize
from .edits import extract_pair, save_edit_sets
from .embed import EmbeddingProvider, build_provider, close_provider
from .evaluation import evaluate, load_labels
from .jsonl import read_jsonl, write_json, write_jsonl
from .manifest import RunManifest, config_digest
from .merge import build_graph, connected_components, displacy_merge, merge_record, singleton_groups
from .metrics import track_stage
from .mining import CountTables, build_transactions, count_transactions, mine_from_tables, save_associations
from .models import (
    DependencyTree,
    EditGroup,
    EditLabel,
    EditSet,
    LabeledPair,
    PairStats,
    RankedOutput,
    Sentence,
    SentencePair,
)
from .rank import rank_greedy, rank_ours, rank_random, rank_vanilla, with_curve
from .scorers import FluencyScorer, RemotePerplexityScorer, ScorerError, StubScorer, ngram_train

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

ARTIFACTS = {
    "extract": "edits.jsonl",
    "stats": "stats.json",
    "mine": "associations.jsonl",
    "train-assoc": "model.json",
    "merge": "merges.jsonl",
    "rank": "rankings.jsonl",
    "eval": "report.json",
}
MANIFEST_NAME = "manifest.json"


def ordered_map(fn: Callable[[T], R], items: Sequence[T], jobs: int = 1) -> list[R]:
    """Map over a worker pool; results keep input order."""
    if jobs <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def load_lm_corpus(path: Path, language: str) -> list[Sentence]:
    """Plain text, one sentence per line."""
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            lines = [line.strip() for line in f]
    except FileNotFoundError:
        raise ScorerError(f"Language model corpus not found: {path}")
    return [tokenize(line, language) for line in lines if line]


def build_scorer(
    config: PipelineConfig,
    fallback_corpus: Iterable[Sentence] = (),
    cache_dir: Optional[Path] = None,
) -> FluencyScorer:
    """
    The configured disfluency scorer.

    The n-gram model trains on ``paths.lm_corpus`` when set, otherwise on
    ``fallback_corpus`` (the target side of the training pairs).
    """
    scorer = config.scorer
    if scorer.kind == "stub":
        return StubScorer.from_file(Path(scorer.stub_file))
    if scorer.kind == "remote":
        return RemotePerplexityScorer(PerplexityClient(config.remote, cache_dir=cache_dir))

    if config.paths.lm_corpus:
        sentences = load_lm_corpus(Path(config.paths.lm_corpus), config.language)
    else:
        sentences = list(fallback_corpus)
    return ngram_train(sentences, order=scorer.order, k=scorer.k)


@dataclass
class MergeResult:
    """Groups for one pair under the association graph and the dependency baseline."""

    pair_id: str
    groups: list[EditGroup]
    displacy_groups: list[EditGroup]
    warnings: list[str] = field(default_factory=list)


class Pipeline:
    """
    Runs the stages of one configuration.

    Stage flow:
    1. extract edits and drop pairs below ``min_edits``
    2. mine associations from the training pairs
    3. train the association classifier on mined positives and sampled negatives
    4. merge edits per sentence
    5. rank with every configured ranker
    6. evaluate against labels, when a label file is configured
    """

    def __init__(self, config: PipelineConfig, out_dir: Optional[Path] = None):
        self.config = config
        self.out_dir = Path(out_dir or config.paths.output_dir)
        self.jobs = config.jobs
        self.cache_dir = Path(config.remote.cache_dir) if config.remote.cache_dir else None
        self._provider: Optional[EmbeddingProvider] = None
        self._scorer: Optional[FluencyScorer] = None

    def artifact(self, stage: str) -> Path:
        return self.out_dir / ARTIFACTS[stage]

    @property
    def provider(self) -> EmbeddingProvider:
        if self._provider is None:
            self._provider = build_provider(self.config.embedding, self.config.remote, self.cache_dir)
        return self._provider

    def scorer(self, fallback_corpus: Iterable[Sentence] = ()) -> FluencyScorer:
        if self._scorer is None:
            self._scorer = build_scorer(self.config, fallback_corpus, self.cache_dir)
        return self._scorer

    def close(self) -> None:
        """Release remote sessions and cache handles held by the provider and scorer."""
        if self._provider is not None:
            close_provider(self._provider)
            self._provider = None
        close = getattr(self._scorer, "close", None)
        if close is not None:
            close()
        self._scorer = None

    def __enter__(self) -> "Pipeline":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    # ============ Stages ============

    def extract(self, pairs: Sequence[SentencePair], min_edits: int = 1) -> tuple[list[SentencePair], list[EditSet]]:
        """Edit sets of the pairs with at least ``min_edits`` edits, in input order."""
        edit_sets = ordered_map(extract_pair, list(pairs), self.jobs)
        by_id = {edit_set.pair_id: edit_set for edit_set in edit_sets}
        kept = filter_min_edits(list(pairs), extractor=lambda pair: by_id[pair.id], n=min_edits)
        return kept, [by_id[pair.id] for pair in kept]

    def mine(
        self, train_pairs: Sequence[SentencePair], language: Optional[str] = None
    ) -> tuple[list[PairStats], CountTables]:
        """Accepted associations plus the count tables they came from."""
        mining = self.config.mining_config(language)
        transactions = build_transactions(train_pairs)
        tables = count_transactions(transactions)
        accepted = mine_from_tables(tables, mining)
        logger.info(
            f"Mined {len(accepted)} associations from {tables.n_transactions} transactions "
            f"({len(tables.frequent_items(mining.min_item_freq))} frequent items)"
        )
        return accepted, tables

    def training_pairs(
        self, associations: Sequence[PairStats], tables: CountTables, language: Optional[str] = None
    ) -> list[LabeledPair]:
        """Mined positives plus seeded negatives drawn from never co-occurring frequent items."""
        if not associations:
            raise TrainingError("No associations were mined; lower the mining thresholds or add data")
        mining = self.config.mining_config(language)
        train_config = self.config.train_config(language)
        positives = [LabeledPair(a.item_a, a.item_b, 1) for a in associations]
        negatives = sample_negatives(
            tables.frequent_items(mining.min_item_freq),
            associations,
            train_config.neg_ratio,
            self.config.seed,
            cooccurring=set(tables.pairs),
        )
        return positives + negatives

    def train(self, labeled: Sequence[LabeledPair], language: Optional[str] = None):
        return train(labeled, self.provider, self.config.train_config(language), self.config.seed)

    def merge(
        self,
        pairs: Sequence[SentencePair],
        edit_sets: Sequence[EditSet],
        model: AssociationClassifier,
        trees: Optional[dict[str, DependencyTree]] = None,
    ) -> list[MergeResult]:
        trees = trees or {}
        provider = self.provider

        def merge_one(item: tuple[SentencePair, EditSet]) -> MergeResult:
            pair, edit_set = item
            merge_config = self.config.merge_config(pair.language)
            tree = trees.get(pair.id)
            graph = build_graph(edit_set, model, provider, merge_config, tree)
            warnings = list(graph.graph["warnings"])
            if tree is not None:
                displacy = displacy_merge(edit_set, tree, merge_config.displacy_labels)
            else:
                displacy = singleton_groups(len(edit_set))
            return MergeResult(pair.id, connected_components(graph, len(edit_set)), displacy, warnings)

        return ordered_map(merge_one, list(zip(pairs, edit_sets)), self.jobs)

    def rank(
        self,
        pairs: Sequence[SentencePair],
        edit_sets: Sequence[EditSet],
        merges: Sequence[MergeResult],
        scorer: FluencyScorer,
    ) -> list[RankedOutput]:
        """Every configured ranker per pair, each with its fluency curve."""
        seed = self.config.seed
        rankers = self.config.rankers

        def rank_one(item: tuple[SentencePair, EditSet, MergeResult]) -> list[RankedOutput]:
            pair, edit_set, merged = item
            source = pair.source
            outputs = []
            for ranker in rankers:
                if ranker == "ours":
                    ranked = rank_ours(scorer, source, edit_set, merged.groups)
                elif ranker == "vanilla":
                    ranked = rank_vanilla(scorer, source, edit_set)
                elif ranker == "greedy":
                    ranked = rank_greedy(scorer, source, edit_set)
                elif ranker == "random":
                    ranked = rank_random(edit_set, seed)
                elif ranker == "random-groups":
                    ranked = rank_random(edit_set, seed, merged.groups, ranker="random-groups")
                else:
                    ranked = rank_ours(scorer, source, edit_set, merged.displacy_groups, ranker="displacy")
                outputs.append(with_curve(scorer, source, edit_set, ranked))
            return outputs

        per_pair = ordered_map(rank_one, list(zip(pairs, edit_sets, merges)), self.jobs)
        return [ranked for outputs in per_pair for ranked in outputs]

    def label(
        self, pairs: Sequence[SentencePair], edit_sets: Sequence[EditSet], judge: JudgeClient
    ) -> dict[str, list[EditLabel]]:
        """Judge labels per pair, from leave-one-out hypotheses."""
        def label_one(item: tuple[SentencePair, EditSet]) -> list[EditLabel]:
            pair, edit_set = item
            return judge_pair(judge, pair.source, edit_set)

        labels = ordered_map(label_one, list(zip(pairs, edit_sets)), self.jobs)
        return {pair.id: values for pair, values in zip(pairs, labels)}

    # ============ Full run ============

    def run(self) -> RunManifest:
        """
        Chain every stage, writing artifacts and the run manifest to the output directory.

        Raises:
            CorpusError: No input pairs configured or none survive the edit filter
        """
        config = self.config
        paths = config.paths
        if not paths.pairs:
            raise CorpusError("paths.pairs is required to run the pipeline")

        manifest = RunManifest(config_hash=config_digest(config), seed=config.seed)
        self.out_dir.mkdir(parents=True, exist_ok=True)

        with track_stage("extract") as info:
            all_pairs = load_pairs(Path(paths.pairs))
            pairs, edit_sets = self.extract(all_pairs, config.min_edits)
            if not pairs:
                raise CorpusError(f"No pairs in {paths.pairs} have at least {config.min_edits} edits")
            info["records"] = save_edit_sets(self.artifact("extract"), edit_sets)
            manifest.record("extract", self.artifact("extract"), info["records"], self.out_dir)

        with track_stage("stats") as info:
            stats = {"all": corpus_stats(all_pairs).to_dict(), "filtered": corpus_stats(pairs).to_dict()}
            write_json(self.artifact("stats"), stats)
            info["records"] = len(pairs)
            manifest.record("stats", self.artifact("stats"), len(pairs), self.out_dir)

        train_pairs = load_pairs(Path(paths.train_pairs)) if paths.train_pairs else all_pairs

        with track_stage("mine") as info:
            associations, tables = self.mine(train_pairs)
            info["records"] = save_associations(self.artifact("mine"), associations)
            manifest.record("mine", self.artifact("mine"), info["records"], self.out_dir)

        with track_stage("train-assoc") as info:
            if paths.model:
                model = load_model(Path(paths.model))
                logger.info(f"Using pretrained association model {paths.model}")
            else:
                model, log = self.train(self.training_pairs(associations, tables))
                write_json(self.out_dir / "training_log.json", log.to_dict())
            save_model(model, self.artifact("train-assoc"))
            info["records"] = 1
            manifest.record("train-assoc", self.artifact("train-assoc"), 1, self.out_dir)

        with track_stage("merge") as info:
            trees = load_conllu(Path(paths.parses)) if paths.parses else {}
            merges = self.merge(pairs, edit_sets, model, trees)
            info["records"] = write_jsonl(
                self.artifact("merge"),
                (merge_record(m.pair_id, m.groups, m.warnings, m.displacy_groups) for m in merges),
            )
            manifest.record("merge", self.artifact("merge"), info["records"], self.out_dir)

        with track_stage("rank") as info:
            scorer = self.scorer(pair.target for pair in train_pairs)
            rankings = self.rank(pairs, edit_sets, merges, scorer)
            info["records"] = write_jsonl(self.artifact("rank"), (r.to_dict() for r in rankings))
            manifest.record("rank", self.artifact("rank"), info["records"], self.out_dir)

        if paths.labels:
            with track_stage("eval") as info:
                labels = load_labels(Path(paths.labels))
                report = evaluate(
                    rankings, labels, config.eval,
                    target_lengths={pair.id: len(pair.target) for pair in pairs},
                )
                write_json(self.artifact("eval"), report)
                info["records"] = len(report["instances"])
                manifest.record("eval", self.artifact("eval"), info["records"], self.out_dir)
        else:
            logger.warning("No label file configured (paths.labels); skipping evaluation")

        manifest.save(self.out_dir / MANIFEST_NAME)
        logger.info(f"Pipeline finished: {len(manifest.stages)} stages written to {self.out_dir}")
        return manifest


def load_merges(path: Path) -> dict[str, MergeResult]:
    """Read merge records; records without dependency-baseline groups get singletons."""
    merges = {}
    for line_number, record in read_jsonl(Path(path)):
        try:
            pair_id = str(record["id"])
            groups = [EditGroup(tuple(int(m) for m in members)) for members in record["groups"]]
            displacy = [
                EditGroup(tuple(int(m) for m in members))
                for members in record.get("displacy_groups") or []
            ]
        except (KeyError, TypeError, ValueError) as e:
            raise CorpusError(f"{path}:{line_number}: malformed merge record ({e})")
        if not displacy:
            displacy = singleton_groups(sum(len(group) for group in groups))
        merges[pair_id] = MergeResult(pair_id, groups, displacy, list(record.get("warnings", [])))
    return merges


def load_rankings(path: Path) -> list[RankedOutput]:
    rankings = []
    for line_number, record in read_jsonl(Path(path)):
        try:
            rankings.append(RankedOutput.from_dict(record))
        except (KeyError, TypeError, ValueError) as e:
            raise CorpusError(f"{path}:{line_number}: malformed ranking record ({e})")
    return rankings


def pair_languages(pairs: Iterable[SentencePair]) -> dict[str, str]:
    return {pair.id: pair.language for pair in pairs}

