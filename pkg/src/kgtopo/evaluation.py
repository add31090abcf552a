"""Filtered tail-prediction ranking, MRR and prediction-bias diagnostics.

Every test query (h, r, ?) is scored against a candidate set (all entities
unless a custom list is given). Candidates t' != truth that form a known
triple (h, r, t') in the filter source are masked out before ranking; the
truth itself is never masked. Ties at the truth's score are resolved to
the middle: rank = 1 + #strictly_greater + ceil(#ties / 2), which avoids
the optimistic rank-1 bias of degenerate constant scorers.

The filter source is the graph passed to the ranking functions: pass the
full graph for the default protocol, or the training-split graph for
train-only filtering.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .graph import IndexedGraph
from .models import EmbeddingModel, score_tails

FILTER_FULL_GRAPH = "full_graph"
FILTER_TRAIN_ONLY = "train_only"


@dataclass
class EvalConfig:
    filter_source: str = FILTER_FULL_GRAPH
    top_k: int = 100
    candidates: np.ndarray | None = None

    def __post_init__(self):
        if self.filter_source not in (FILTER_FULL_GRAPH, FILTER_TRAIN_ONLY):
            raise ValueError(f"unknown filter_source {self.filter_source!r}")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")


@dataclass
class RankRecord:
    h: int
    r: int
    t: int
    rank: int
    candidate_count: int


def rank_tail(
    model: EmbeddingModel,
    filter_graph: IndexedGraph,
    query: tuple[int, int],
    truth: int,
    candidates: np.ndarray | None = None,
) -> RankRecord:
    """Filtered rank of ``truth`` for the query (h, r, ?).

    ``filter_graph`` is the masking source (full graph or train split).
    ``candidates`` restricts the ranking to a custom entity list; the
    truth must be among them.
    """
    h, r = int(query[0]), int(query[1])
    truth = int(truth)
    if candidates is None:
        cand = np.arange(model.num_entities, dtype=np.int64)
        truth_pos = truth
    else:
        cand = np.asarray(candidates, dtype=np.int64)
        hits = np.flatnonzero(cand == truth)
        if hits.size == 0:
            raise ValueError(f"truth entity {truth} missing from the candidate list")
        truth_pos = int(hits[0])

    scores = score_tails(model, h, r, cand)
    known = filter_graph.tails_of(h, r)
    masked = _isin_sorted(known, cand)
    masked[truth_pos] = False  # the truth is never masked

    s_true = scores[truth_pos]
    valid_scores = scores[~masked]
    n_greater = int(np.count_nonzero(valid_scores > s_true))
    n_ties = int(np.count_nonzero(valid_scores == s_true)) - 1
    rank = 1 + n_greater + (n_ties + 1) // 2
    return RankRecord(h, r, truth, rank, int(valid_scores.size))


def _isin_sorted(sorted_arr: np.ndarray, values: np.ndarray) -> np.ndarray:
    if len(sorted_arr) == 0:
        return np.zeros(len(values), dtype=bool)
    pos = np.searchsorted(sorted_arr, values)
    pos_c = pos.clip(max=len(sorted_arr) - 1)
    return (pos < len(sorted_arr)) & (sorted_arr[pos_c] == values)


# Worker processes receive the model/graph once, via the pool initializer,
# instead of per task; chunks then carry only the triple ids.
_WORKER: dict = {}


def _init_rank_worker(model, filter_graph, candidates) -> None:
    _WORKER["ctx"] = (model, filter_graph, candidates)


def _rank_chunk_remote(triples) -> list[tuple[int, int, int, int, int]]:
    model, filter_graph, candidates = _WORKER["ctx"]
    return _rank_chunk((model, filter_graph, triples, candidates))


def _rank_chunk(args) -> list[tuple[int, int, int, int, int]]:
    model, filter_graph, triples, candidates = args
    out = []
    for h, r, t in triples:
        rec = rank_tail(model, filter_graph, (h, r), t, candidates)
        out.append((rec.h, rec.r, rec.t, rec.rank, rec.candidate_count))
    return out


def evaluate(
    model: EmbeddingModel,
    g_full: IndexedGraph,
    test_triples: np.ndarray,
    config: EvalConfig | None = None,
    g_train: IndexedGraph | None = None,
    threads: int = 1,
) -> pd.DataFrame:
    """Rank every test triple; returns one row per triple in input order.

    Columns: h, r, t, rank, candidate_count, reciprocal_rank.
    """
    if config is None:
        config = EvalConfig()
    if config.filter_source == FILTER_TRAIN_ONLY:
        if g_train is None:
            raise ValueError("train_only filtering requires g_train")
        filter_graph = g_train
    else:
        filter_graph = g_full

    test_triples = np.asarray(test_triples)
    if threads <= 1 or test_triples.shape[0] < 256:
        rows = _rank_chunk((model, filter_graph, test_triples, config.candidates))
    else:
        chunks = [c for c in np.array_split(test_triples, threads * 4) if len(c)]
        with ProcessPoolExecutor(
            max_workers=threads,
            initializer=_init_rank_worker,
            initargs=(model, filter_graph, config.candidates),
        ) as pool:
            rows = [row for part in pool.map(_rank_chunk_remote, chunks) for row in part]

    frame = pd.DataFrame(rows, columns=["h", "r", "t", "rank", "candidate_count"])
    frame["reciprocal_rank"] = 1.0 / frame["rank"]
    return frame


def mrr(records) -> float:
    """Mean reciprocal rank of RankRecords, a rank array, or a records frame."""
    ranks = _ranks_of(records)
    if ranks.size == 0:
        raise ValueError("mrr of an empty record set is undefined")
    return float(np.mean(1.0 / ranks))


def hits_at(records, k: int) -> float:
    ranks = _ranks_of(records)
    if ranks.size == 0:
        raise ValueError("hits@k of an empty record set is undefined")
    return float(np.mean(ranks <= k))


def _ranks_of(records) -> np.ndarray:
    if isinstance(records, pd.DataFrame):
        return records["rank"].to_numpy(dtype=np.float64)
    if len(records) and isinstance(records[0], RankRecord):
        return np.asarray([rec.rank for rec in records], dtype=np.float64)
    return np.asarray(records, dtype=np.float64)


def summary(records: pd.DataFrame) -> dict:
    """Overall MRR, hits@{1,3,10} and per-relation MRR."""
    per_relation = (
        records.groupby("r")["reciprocal_rank"].mean().sort_index()
    )
    return {
        "mrr": mrr(records),
        "hits_at_1": hits_at(records, 1),
        "hits_at_3": hits_at(records, 3),
        "hits_at_10": hits_at(records, 10),
        "num_test_triples": int(len(records)),
        "per_relation_mrr": {str(r): float(v) for r, v in per_relation.items()},
    }


# ---------------------------------------------------------------------------
# Top-k prediction diagnostics
# ---------------------------------------------------------------------------


def _topk_predictions(
    model: EmbeddingModel,
    filter_graph: IndexedGraph,
    h: int,
    r: int,
    truth: int,
    k: int,
) -> np.ndarray:
    """Top-k filtered predicted tails for one query; the truth stays eligible."""
    cand = np.arange(model.num_entities, dtype=np.int64)
    scores = score_tails(model, h, r, cand)
    known = filter_graph.tails_of(h, r)
    masked = _isin_sorted(known, cand)
    masked[truth] = False
    scores[masked] = -np.inf
    top = np.argpartition(-scores, k - 1)[:k]
    return top[np.argsort(-scores[top], kind="stable")]


def demixing(
    model: EmbeddingModel,
    g: IndexedGraph,
    test_triples: np.ndarray,
    tail_type_set,
    top_k: int = 100,
) -> np.ndarray:
    """Per query: fraction of top-k filtered predictions inside tail_type_set.

    ``tail_type_set`` is typically the set of entities appearing as tails
    of the probed relation group anywhere in the full graph.
    """
    tail_type_set = set(int(x) for x in tail_type_set)
    if not tail_type_set:
        raise ValueError("tail_type_set must be non-empty")
    if top_k > model.num_entities:
        raise ValueError(f"top_k={top_k} exceeds the number of entities")
    fractions = np.empty(len(test_triples), dtype=np.float64)
    for i, (h, r, t) in enumerate(np.asarray(test_triples)):
        top = _topk_predictions(model, g, int(h), int(r), int(t), top_k)
        fractions[i] = sum(1 for e in top if int(e) in tail_type_set) / top_k
    return fractions


def degree_bias(
    model: EmbeddingModel,
    g: IndexedGraph,
    test_triples: np.ndarray,
    top_k: int = 100,
    min_entities: int = 5,
) -> tuple[dict[int, float], list[int]]:
    """Per relation: Spearman correlation of same-relation in-degree vs how
    often an entity shows up *incorrectly* in the top-k predictions.

    Relations where fewer than ``min_entities`` distinct entities appear in
    predictions are skipped and listed separately.
    """
    from .analysis import spearman

    test_triples = np.asarray(test_triples)
    k = min(top_k, g.num_entities)
    by_relation: dict[int, dict[int, int]] = {}
    for h, r, t in test_triples:
        counts = by_relation.setdefault(int(r), {})
        top = _topk_predictions(model, g, int(h), int(r), int(t), k)
        for e in top:
            e = int(e)
            if e != int(t):
                counts[e] = counts.get(e, 0) + 1

    correlations: dict[int, float] = {}
    skipped: list[int] = []
    for r, counts in sorted(by_relation.items()):
        if len(counts) < min_entities:
            skipped.append(r)
            continue
        entities = sorted(counts)
        indeg = np.asarray([len(g.heads_of(e, r)) for e in entities], dtype=np.float64)
        picks = np.asarray([counts[e] for e in entities], dtype=np.float64)
        correlations[r] = spearman(indeg, picks)
    return correlations, skipped
