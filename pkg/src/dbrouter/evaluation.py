"""Routing metrics and the experiment protocols built on them.

Per-question metrics are Recall@1, Recall@3, and average precision 1/rank
of the gold database. Vertical variants split mistakes by whether the
predicted database shares the gold database's cluster: a same-cluster miss
counts against within-vertical R@1 but still credits the across-vertical
column, and the reverse for cross-cluster misses. Across-vertical R@3 and
mAP use the first rank at which any same-cluster database appears.

Aggregation keeps full precision internally and rounds to two decimals only
when rendering, matching how results tables are usually printed.
"""

import csv
import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .datasets import RoutingDataset, sample_cluster_matched, sample_db_subsets
from .retrieval import RankedList, Scorer
from .schema import Corpus, RoutingSample

log = logging.getLogger(__name__)


class EvalError(RuntimeError):
    """Raised for missing clusters, empty inputs, or bad experiment specs."""


@dataclass(frozen=True)
class VerticalClusters:
    assignment: dict[str, str]

    def cluster_of(self, db_id: str) -> str:
        try:
            return self.assignment[db_id]
        except KeyError:
            raise EvalError(f"database {db_id} has no vertical cluster") from None

    def all_singleton(self, scope) -> bool:
        """True when no two databases in scope share a cluster."""
        seen = {}
        for db_id in scope:
            label = self.cluster_of(db_id)
            if label in seen:
                return False
            seen[label] = db_id
        return True

    @classmethod
    def from_corpus(cls, corpus: Corpus) -> "VerticalClusters":
        mapping = {
            db.db_id: db.cluster_id
            for db in corpus.databases
            if db.cluster_id is not None
        }
        return cls(assignment=mapping)


def load_clusters(path: str | Path) -> VerticalClusters:
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in data.items()
    ):
        raise EvalError(f"{path}: expected a flat db_id -> cluster mapping")
    return VerticalClusters(assignment=data)


def packaged_clusters(name: str) -> VerticalClusters:
    """Cluster fixtures shipped with the package ("spider" or "bird")."""
    ref = resources.files("dbrouter").joinpath(f"data/clusters/{name}.json")
    try:
        text = ref.read_text()
    except FileNotFoundError:
        raise EvalError(f"no packaged cluster file named {name!r}") from None
    return VerticalClusters(assignment=json.loads(text))


# ---------------------------------------------------------------------------
# Per-question metrics
# ---------------------------------------------------------------------------


def recall_at_k(ranked: RankedList, gold_db_id: str, k: int) -> int:
    if k < 1:
        raise EvalError("k must be at least 1")
    if not ranked.entries:
        raise EvalError("empty ranking")
    rank = ranked.rank_of(gold_db_id)
    if rank is None:
        log.warning("gold %s missing from ranking for %s", gold_db_id, ranked.question_id)
        return 0
    return 1 if rank <= k else 0


def average_precision(ranked: RankedList, gold_db_id: str) -> float:
    rank = ranked.rank_of(gold_db_id)
    if rank is None:
        log.warning("gold %s missing from ranking for %s", gold_db_id, ranked.question_id)
        return 0.0
    return 1.0 / rank


def vertical_r1(
    ranked: RankedList, gold_db_id: str, clusters: VerticalClusters
) -> tuple[int, int]:
    """(within, across). Same-cluster misses forgive the across column and
    blame the within column; cross-cluster misses do the opposite."""
    if not ranked.entries:
        raise EvalError("empty ranking")
    pred = ranked.entries[0][0]
    if pred == gold_db_id:
        return 1, 1
    if clusters.cluster_of(pred) == clusters.cluster_of(gold_db_id):
        return 0, 1
    return 1, 0


def across_vertical_rk_map(
    ranked: RankedList, gold_db_id: str, clusters: VerticalClusters, k: int = 3
) -> tuple[int, float]:
    """Cluster-level hit within top-k, and 1/rank of the first cluster match."""
    gold_cluster = clusters.cluster_of(gold_db_id)
    first = None
    for pos, (db_id, _) in enumerate(ranked.entries, start=1):
        if clusters.cluster_of(db_id) == gold_cluster:
            first = pos
            break
    if first is None:
        log.warning(
            "no database sharing %s's cluster in ranking for %s",
            gold_db_id, ranked.question_id,
        )
        return 0, 0.0
    return (1 if first <= k else 0), 1.0 / first


@dataclass(frozen=True)
class QuestionRow:
    question_id: str
    gold_db_id: str
    pred_db_id: str
    gold_rank: int | None
    r1: int
    r3: int
    ap: float
    within_r1: int | None = None
    across_r1: int | None = None
    across_r3: int | None = None
    across_ap: float | None = None


def evaluate_question(
    ranked: RankedList,
    gold_db_id: str,
    clusters: VerticalClusters | None = None,
) -> QuestionRow:
    row = dict(
        question_id=ranked.question_id,
        gold_db_id=gold_db_id,
        pred_db_id=ranked.entries[0][0] if ranked.entries else "",
        gold_rank=ranked.rank_of(gold_db_id),
        r1=recall_at_k(ranked, gold_db_id, 1),
        r3=recall_at_k(ranked, gold_db_id, 3),
        ap=average_precision(ranked, gold_db_id),
    )
    if clusters is not None:
        within, across = vertical_r1(ranked, gold_db_id, clusters)
        a_r3, a_ap = across_vertical_rk_map(ranked, gold_db_id, clusters, 3)
        row.update(within_r1=within, across_r1=across, across_r3=a_r3, across_ap=a_ap)
    return QuestionRow(**row)


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MetricsReport:
    """Percent-scale means; vertical columns are None when suppressed."""

    n: int
    overall_r1: float
    overall_r3: float
    overall_map: float
    within_r1: float | None
    across_r1: float | None
    across_r3: float | None
    across_map: float | None
    missing_gold: int = 0
    rows: tuple[QuestionRow, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if self.n < 1:
            raise EvalError("a report needs at least one question")
        for name in ("overall_r1", "overall_r3", "overall_map",
                     "within_r1", "across_r1", "across_r3", "across_map"):
            value = getattr(self, name)
            if value is not None and not (0.0 <= value <= 100.0 + 1e-9):
                raise EvalError(f"{name} out of range: {value}")
        if self.overall_r1 > self.overall_r3 + 1e-9:
            raise EvalError("Recall@1 cannot exceed Recall@3")

    @property
    def has_vertical(self) -> bool:
        return self.within_r1 is not None

    def to_dict(self, display: bool = True, include_rows: bool = False) -> dict:
        def fmt(x):
            if x is None:
                return None
            return round(x, 2) if display else x

        out = {
            "n": self.n,
            "overall": {
                "r1": fmt(self.overall_r1),
                "r3": fmt(self.overall_r3),
                "map": fmt(self.overall_map),
            },
            "within_vertical": {"r1": fmt(self.within_r1)} if self.has_vertical else None,
            "across_vertical": (
                {"r1": fmt(self.across_r1), "r3": fmt(self.across_r3), "map": fmt(self.across_map)}
                if self.has_vertical
                else None
            ),
            "missing_gold": self.missing_gold,
        }
        if include_rows:
            out["rows"] = [vars(r) for r in self.rows]
        return out


def aggregate(rows: list[QuestionRow], keep_rows: bool = True) -> MetricsReport:
    """Mean of the per-question columns, on the percent scale.

    Vertical columns survive only when every row carries them; a mix means
    the caller evaluated with inconsistent cluster settings.
    """
    if not rows:
        raise EvalError("nothing to aggregate")
    vertical_flags = {r.within_r1 is not None for r in rows}
    if vertical_flags == {True, False}:
        raise EvalError("rows mix clustered and unclustered evaluation")
    has_vertical = vertical_flags == {True}
    n = len(rows)

    def mean(values):
        return sum(values) / n * 100.0

    return MetricsReport(
        n=n,
        overall_r1=mean([r.r1 for r in rows]),
        overall_r3=mean([r.r3 for r in rows]),
        overall_map=mean([r.ap for r in rows]),
        within_r1=mean([r.within_r1 for r in rows]) if has_vertical else None,
        across_r1=mean([r.across_r1 for r in rows]) if has_vertical else None,
        across_r3=mean([r.across_r3 for r in rows]) if has_vertical else None,
        across_map=mean([r.across_ap for r in rows]) if has_vertical else None,
        missing_gold=sum(1 for r in rows if r.gold_rank is None),
        rows=tuple(rows) if keep_rows else (),
    )


def average_reports(reports: list[MetricsReport]) -> MetricsReport:
    """Plain mean across reports (each set weighs the same), n summed."""
    if not reports:
        raise EvalError("no reports to average")
    flags = {r.has_vertical for r in reports}
    if flags == {True, False}:
        raise EvalError("reports mix vertical and non-vertical columns")
    has_vertical = flags == {True}

    def mean(name):
        return sum(getattr(r, name) for r in reports) / len(reports)

    return MetricsReport(
        n=sum(r.n for r in reports),
        overall_r1=mean("overall_r1"),
        overall_r3=mean("overall_r3"),
        overall_map=mean("overall_map"),
        within_r1=mean("within_r1") if has_vertical else None,
        across_r1=mean("across_r1") if has_vertical else None,
        across_r3=mean("across_r3") if has_vertical else None,
        across_map=mean("across_map") if has_vertical else None,
        missing_gold=sum(r.missing_gold for r in reports),
    )


# ---------------------------------------------------------------------------
# Split evaluation and experiment protocols
# ---------------------------------------------------------------------------


def evaluate_split(
    scorer: Scorer,
    samples: list[RoutingSample],
    db_scope: list[str],
    strategy: str = "pooled-tables",
    clusters: VerticalClusters | None = None,
    reranker=None,
    keep_rows: bool = True,
) -> MetricsReport:
    """Rank every sample's question over the scope and aggregate.

    Vertical columns are computed only when clusters are given and the scope
    actually groups databases (all-singleton scopes suppress them). For the
    llm-rerank strategy a `reranker(question_id, text, ranked) -> RankedList`
    must be supplied; ranking starts from pooled tables.
    """
    if not samples:
        raise EvalError("no samples to evaluate")
    scope = sorted(db_scope)
    use_vertical = clusters is not None and not clusters.all_singleton(scope)
    rows = []
    for sample in samples:
        base = "pooled-tables" if strategy == "llm-rerank" else strategy
        ranked = scorer.rank_databases(sample.question_id, sample.text, base, db_ids=scope)
        if strategy == "llm-rerank":
            if reranker is None:
                raise EvalError("llm-rerank evaluation needs a reranker")
            ranked = reranker(sample.question_id, sample.text, ranked)
        rows.append(evaluate_question(ranked, sample.gold_db_id, clusters if use_vertical else None))
    return aggregate(rows, keep_rows=keep_rows)


def _scoped_samples(samples, scope: frozenset) -> list[RoutingSample]:
    return [s for s in samples if s.gold_db_id in scope]


def run_subset_scaling(
    scorer: Scorer,
    dataset: RoutingDataset,
    sizes: list[int],
    seed: int,
    strategy: str = "pooled-tables",
    clusters: VerticalClusters | None = None,
    reranker=None,
) -> dict[int, MetricsReport]:
    """Re-evaluate on nested repository subsets of decreasing size."""
    subsets = sample_db_subsets(dataset, sizes, seed)
    pool = list(dataset.test_in) + list(dataset.test_out)
    out = {}
    for size, subset in zip(sizes, subsets):
        samples = _scoped_samples(pool, subset)
        if not samples:
            raise EvalError(f"subset of size {size} contains no gold databases")
        out[size] = evaluate_split(
            scorer, samples, sorted(subset), strategy, clusters, reranker, keep_rows=False
        )
    return out


def run_cluster_matched(
    scorer: Scorer,
    dataset: RoutingDataset,
    clusters: VerticalClusters,
    n_sets: int,
    seed: int,
    strategy: str = "pooled-tables",
    strict: bool = True,
    reranker=None,
) -> dict[str, MetricsReport]:
    """Evaluate on in-repository sets shaped like the held-out clusters and
    average the per-set reports."""
    sets = sample_cluster_matched(dataset, clusters.assignment, n_sets, seed, strict=strict)
    reports = {}
    for i, subset in enumerate(sets):
        samples = _scoped_samples(dataset.test_in, subset)
        if not samples:
            raise EvalError(f"matched set {i} contains no gold databases")
        reports[f"set-{i}"] = evaluate_split(
            scorer, samples, sorted(subset), strategy, clusters, reranker, keep_rows=False
        )
    reports["averaged"] = average_reports(list(reports.values()))
    return reports


def run_metadata_ablation(
    scorer: Scorer,
    samples: list[RoutingSample],
    db_scope: list[str],
    clusters: VerticalClusters | None = None,
) -> dict[str, MetricsReport]:
    """Pooled scoring with and without statement context."""
    return {
        "with-metadata": evaluate_split(
            scorer, samples, db_scope, "pooled-tables+metadata", clusters, keep_rows=False
        ),
        "without-metadata": evaluate_split(
            scorer, samples, db_scope, "pooled-tables", clusters, keep_rows=False
        ),
    }


def run_in_vs_cross(
    scorer: Scorer,
    dataset: RoutingDataset,
    strategy: str = "pooled-tables",
    clusters: VerticalClusters | None = None,
    reranker=None,
) -> dict[str, MetricsReport]:
    """Same approach on the in-repository and cross-repository splits."""
    out = {}
    if dataset.test_in:
        out["in-repository"] = evaluate_split(
            scorer, list(dataset.test_in), sorted(dataset.db_sets.test_in),
            strategy, clusters, reranker, keep_rows=False,
        )
    if dataset.test_out:
        out["cross-repository"] = evaluate_split(
            scorer, list(dataset.test_out), sorted(dataset.db_sets.test_out),
            strategy, clusters, reranker, keep_rows=False,
        )
    if not out:
        raise EvalError("dataset has no test questions")
    return out


PROTOCOLS = ("subset-scaling", "cluster-matched", "metadata-ablation", "in-vs-cross")


def run_experiment(protocol: str, **kwargs) -> dict:
    """Dispatch to one experiment protocol; returns named MetricsReports."""
    if protocol == "subset-scaling":
        reports = run_subset_scaling(**kwargs)
        return {str(size): report for size, report in reports.items()}
    if protocol == "cluster-matched":
        return run_cluster_matched(**kwargs)
    if protocol == "metadata-ablation":
        return run_metadata_ablation(**kwargs)
    if protocol == "in-vs-cross":
        return run_in_vs_cross(**kwargs)
    raise EvalError(f"unknown protocol {protocol!r}; expected one of {', '.join(PROTOCOLS)}")


# ---------------------------------------------------------------------------
# Report files
# ---------------------------------------------------------------------------

_CSV_COLUMNS = ["cell", "n", "r1", "r3", "map", "wv_r1", "av_r1", "av_r3", "av_map", "missing_gold"]


def write_reports_json(path: str | Path, reports: dict[str, MetricsReport], include_rows: bool = False):
    payload = {
        name: report.to_dict(display=True, include_rows=include_rows)
        for name, report in reports.items()
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_reports_csv(path: str | Path, reports: dict[str, MetricsReport]):
    def cell(value):
        return "" if value is None else f"{value:.2f}"

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_COLUMNS)
        for name, r in reports.items():
            writer.writerow([
                name, r.n, cell(r.overall_r1), cell(r.overall_r3), cell(r.overall_map),
                cell(r.within_r1), cell(r.across_r1), cell(r.across_r3), cell(r.across_map),
                r.missing_gold,
            ])
