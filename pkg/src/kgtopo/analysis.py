"""Stratified accuracy analyses over joined rank / topology tables.

Rank records (one row per evaluated test triple) are joined with the
per-triple topology report and, where needed, the counterpart-status
table, then partitioned by a stratum key. Every stratification is a true
partition: stratum counts sum to the number of records.

Also home to the rank-correlation utility, the relation-level roll-up and
the cross-dataset shared-triple matching used by the two-graph case study.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .graph import IndexedGraph, TripleStore
from .splits import COUNTERPART_PATTERNS, SplitAssignment, shuffle_order
from .topology import (
    DEFAULT_DEGREE_BIN_EDGES,
    EdgeCardinality,
    degree_bin_index,
    degree_bin_labels,
    topology_table,
)

STRATUM_KEYS = ("cardinality", "degree_bins", "pattern_counterpart", "relation_type")

_FLAG_COLS = {
    "symmetric": "is_symmetric",
    "inference": "has_inference",
    "inverse": "has_inverse",
    "composition": "has_composition",
}


def spearman(x, y) -> float:
    """Spearman rank correlation: Pearson on average-tie fractional ranks.

    Returns nan when either rank vector has zero variance (undefined).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError("x and y must be 1-D of equal length")
    if len(x) < 2:
        raise ValueError("need at least two observations")
    rx, ry = _fractional_ranks(x), _fractional_ranks(y)
    vx, vy = rx - rx.mean(), ry - ry.mean()
    denom = np.sqrt((vx * vx).sum() * (vy * vy).sum())
    if denom == 0.0:
        return float("nan")
    return float((vx * vy).sum() / denom)


def _fractional_ranks(v: np.ndarray) -> np.ndarray:
    _, inv = np.unique(v, return_inverse=True)
    counts = np.bincount(inv)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    return (starts + (counts + 1) / 2.0)[inv]


def join_topology(records: pd.DataFrame, topo: pd.DataFrame) -> pd.DataFrame:
    """Left-join rank records with the per-triple topology report on (h, r, t)."""
    return records.merge(topo, on=["h", "r", "t"], how="left", validate="many_to_one")


def join_counterpart(records: pd.DataFrame, counterpart: pd.DataFrame) -> pd.DataFrame:
    """Left-join rank records with the wide counterpart-status table."""
    return records.merge(counterpart, on=["h", "r", "t"], how="left", validate="many_to_one")


def stratify(
    records: pd.DataFrame,
    key: str,
    bin_edges=DEFAULT_DEGREE_BIN_EDGES,
) -> pd.DataFrame:
    """Partition records by a stratum key and report count and MRR per stratum.

    Keys: "cardinality", "degree_bins" (same-relation degree bin pair),
    "pattern_counterpart" (pattern x counterpart status, one partition per
    pattern), "relation_type". When a "model" column is present a
    per-model MRR breakdown (mrr_<model>) is added.
    """
    if key == "cardinality":
        return _group_report(records, ["cardinality"])
    if key == "relation_type":
        return _group_report(records, ["r"])
    if key == "degree_bins":
        labels = degree_bin_labels(bin_edges)
        tmp = records.copy()
        hb = degree_bin_index(tmp["head_out_same_rel"].to_numpy(), bin_edges)
        tb = degree_bin_index(tmp["tail_in_same_rel"].to_numpy(), bin_edges)
        tmp["head_bin"] = [labels[i] for i in hb]
        tmp["tail_bin"] = [labels[i] for i in tb]
        return _group_report(tmp, ["head_bin", "tail_bin"])
    if key == "pattern_counterpart":
        parts = []
        for pattern in COUNTERPART_PATTERNS:
            col = f"counterpart_{pattern}"
            if col not in records.columns:
                raise ValueError(f"records lack column {col!r}; join the counterpart table first")
            sub = _group_report(records.rename(columns={col: "status"}), ["status"])
            sub.insert(0, "pattern", pattern)
            parts.append(sub)
        return pd.concat(parts, ignore_index=True)
    raise ValueError(f"unknown stratum key {key!r}; expected one of {STRATUM_KEYS}")


def _group_report(records: pd.DataFrame, by: list[str]) -> pd.DataFrame:
    grouped = records.groupby(by, sort=True, observed=True)
    out = grouped.agg(count=("reciprocal_rank", "size"), mrr=("reciprocal_rank", "mean"))
    out = out.reset_index()
    if "model" in records.columns:
        pivot = records.pivot_table(
            index=by, columns="model", values="reciprocal_rank", aggfunc="mean"
        )
        pivot.columns = [f"mrr_{m}" for m in pivot.columns]
        out = out.merge(pivot.reset_index(), on=by, how="left")
    return out


def relation_level_aggregate(records: pd.DataFrame) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Per-relation averages plus cross-relation rank correlations.

    ``records`` must already carry topology columns. Returns
    (per_relation, correlations); correlations are nan when fewer than two
    relations are present or ranks have no variance, mirroring how an
    undefined coefficient is reported.
    """
    agg = {"reciprocal_rank": "mean"}
    freq_cols = {}
    for name, col in _FLAG_COLS.items():
        freq_cols[f"freq_{name}"] = col
        agg[col] = "mean"
    per_rel = records.groupby("r").agg(agg)
    per_rel = per_rel.rename(columns={v: k for k, v in freq_cols.items()})
    per_rel = per_rel.rename(columns={"reciprocal_rank": "avg_mrr"})
    for cls in EdgeCardinality:
        per_rel[f"freq_{cls.value}"] = records.assign(_hit=records["cardinality"] == cls.value)[
            ["r", "_hit"]
        ].groupby("r")["_hit"].mean()
    per_rel["count"] = records.groupby("r").size()
    per_rel = per_rel.reset_index()

    rows = []
    for col in per_rel.columns:
        if not col.startswith("freq_"):
            continue
        if len(per_rel) < 2:
            rho = float("nan")
        else:
            rho = spearman(per_rel["avg_mrr"].to_numpy(), per_rel[col].to_numpy())
        rows.append((col, rho))
    corr = pd.DataFrame(rows, columns=["column", "spearman_with_avg_mrr"])
    return per_rel, corr


def interaction_report(
    g: IndexedGraph,
    entity_types: list[str],
    pair: tuple[str, str],
    topo: pd.DataFrame | None = None,
) -> dict:
    """Statistics of triples whose endpoint types match (head_type, tail_type)."""
    known = set(entity_types)
    for label in pair:
        if label not in known:
            raise ValueError(f"unknown entity type {label!r}")
    if topo is None:
        topo = topology_table(g)
    types = np.asarray(entity_types, dtype=object)
    sel = topo[(types[topo["h"]] == pair[0]) & (types[topo["t"]] == pair[1])]
    out = {
        "head_type": pair[0],
        "tail_type": pair[1],
        "triple_count": int(len(sel)),
        "unique_tails": int(sel["t"].nunique()),
        "unique_heads": int(sel["h"].nunique()),
        "median_head_out_same_rel": float(sel["head_out_same_rel"].median()) if len(sel) else float("nan"),
        "median_tail_in_same_rel": float(sel["tail_in_same_rel"].median()) if len(sel) else float("nan"),
    }
    for name, col in _FLAG_COLS.items():
        out[f"frac_{name}"] = float(sel[col].mean()) if len(sel) else float("nan")
    return out


# ---------------------------------------------------------------------------
# Cross-dataset shared-triple matching (two-graph case study)
# ---------------------------------------------------------------------------


@dataclass
class MatchTable:
    """Exact triple matches between two stores after label normalization."""

    pairs: pd.DataFrame  # index_a, index_b, relation (normalized label)
    relation_stats: pd.DataFrame
    ent_norm_a: list[str]
    ent_norm_b: list[str]
    rel_norm_a: list[str]
    rel_norm_b: list[str]


def _normalizer_fn(normalizer):
    if normalizer is None:
        return lambda s: s
    if isinstance(normalizer, dict):
        return lambda s: normalizer.get(s, s)
    return normalizer


def _normalize_labels(labels: list[str], fn, kind: str) -> list[str]:
    normed = [fn(l) for l in labels]
    seen: dict[str, str] = {}
    collisions = []
    for orig, norm in zip(labels, normed):
        if norm in seen and seen[norm] != orig:
            collisions.append((seen[norm], orig, norm))
        seen.setdefault(norm, orig)
    if collisions:
        listing = "; ".join(f"{a!r} and {b!r} -> {n!r}" for a, b, n in collisions[:10])
        raise ValueError(f"normalizer collisions on {kind} labels: {listing}")
    return normed


def match_shared_triples(
    store_a: TripleStore,
    store_b: TripleStore,
    normalizer=None,
) -> MatchTable:
    """Match triples occurring in both stores under a common label namespace.

    ``normalizer`` maps raw labels to the shared namespace (dict or
    callable; identity by default) and must stay injective within each
    store, otherwise a ValueError lists the colliding labels. Matching is
    exact on normalized (h, r, t) and injective both ways. Table-style
    per-relation statistics (median degrees, unique endpoint counts,
    pattern fractions) are computed for both graphs.
    """
    fn = _normalizer_fn(normalizer)
    ent_a = _normalize_labels(store_a.entities.labels, fn, "store A entity")
    ent_b = _normalize_labels(store_b.entities.labels, fn, "store B entity")
    rel_a = _normalize_labels(store_a.relations.labels, fn, "store A relation")
    rel_b = _normalize_labels(store_b.relations.labels, fn, "store B relation")

    key_a = {
        (ent_a[h], rel_a[r], ent_a[t]): i for i, (h, r, t) in enumerate(store_a.triples)
    }
    rows = []
    for j, (h, r, t) in enumerate(store_b.triples):
        key = (ent_b[h], rel_b[r], ent_b[t])
        i = key_a.get(key)
        if i is not None:
            rows.append((i, j, key[1]))
    pairs = pd.DataFrame(rows, columns=["index_a", "index_b", "relation"])

    stats = _match_relation_stats(store_a, store_b, rel_a, rel_b, pairs)
    return MatchTable(pairs, stats, ent_a, ent_b, rel_a, rel_b)


def _match_relation_stats(store_a, store_b, rel_a, rel_b, pairs) -> pd.DataFrame:
    from .graph import build_indexes

    matched_by_rel = pairs.groupby("relation").size()
    frames = []
    for side, store, rel_norm in (("a", store_a, rel_a), ("b", store_b, rel_b)):
        g = build_indexes(store)
        topo = topology_table(g)
        rel_labels = np.asarray(rel_norm, dtype=object)[topo["r"]]
        out_rels = _distinct_partner_counts(store.triples[:, 0], store.triples[:, 1])
        in_rels = _distinct_partner_counts(store.triples[:, 2], store.triples[:, 1])
        for rel in sorted(set(rel_norm)):
            sel = topo[rel_labels == rel]
            if not len(sel):
                continue
            n = len(sel)
            frames.append(
                {
                    "relation": rel,
                    "side": side,
                    "relation_triples": n,
                    "matching_rate": float(matched_by_rel.get(rel, 0) / n),
                    "unique_heads": int(sel["h"].nunique()),
                    "unique_tails": int(sel["t"].nunique()),
                    "median_head_out": float(sel["head_out"].median()),
                    "median_head_out_same_rel": float(sel["head_out_same_rel"].median()),
                    "median_tail_in": float(sel["tail_in"].median()),
                    "median_tail_in_same_rel": float(sel["tail_in_same_rel"].median()),
                    "median_unique_out_relations": float(np.median(out_rels[sel["h"]])),
                    "median_unique_in_relations": float(np.median(in_rels[sel["t"]])),
                    "frac_inverse": float(sel["has_inverse"].mean()),
                    "frac_inference": float(sel["has_inference"].mean()),
                    "frac_composition": float(sel["has_composition"].mean()),
                }
            )
    return pd.DataFrame(frames)


def _distinct_partner_counts(entities: np.ndarray, relations: np.ndarray) -> np.ndarray:
    """Per entity id: number of distinct relation types it occurs with."""
    n = int(entities.max()) + 1 if len(entities) else 0
    pairs = np.unique(entities.astype(np.int64) * (relations.max() + 1) + relations)
    counts = np.bincount((pairs // (relations.max() + 1)).astype(np.int64), minlength=n)
    return counts


@dataclass
class CaseStudySplit:
    """Aligned test extraction over two graphs sharing triples."""

    split_a: SplitAssignment
    split_b: SplitAssignment
    candidates_a: np.ndarray
    candidates_b: np.ndarray
    test_pairs: pd.DataFrame  # index_a, index_b of the held-out shared triples


def case_study_split(
    match: MatchTable,
    store_a: TripleStore,
    store_b: TripleStore,
    relation: str,
    test_fraction: float = 0.10,
    seed: int = 0,
) -> CaseStudySplit:
    """Hold out the same shared triples of one relation from both graphs.

    The test set is a seeded sample of the shared triples of the
    (normalized) relation; every other triple of each graph trains. The
    candidate tail set is identical across graphs: entities appearing as
    tails in *any* shared triple of the relation, aligned by normalized
    label.

    Raises:
        ValueError: fewer than 10 shared triples for the relation.
    """
    sel = match.pairs[match.pairs["relation"] == relation]
    if len(sel) < 10:
        raise ValueError(
            f"relation {relation!r} has only {len(sel)} shared triples; need >= 10"
        )

    # Deterministic cross-graph order: sort by normalized triple key, then
    # apply the split module's seeded shuffle.
    keys = [
        (
            match.ent_norm_a[store_a.triples[i, 0]],
            relation,
            match.ent_norm_a[store_a.triples[i, 2]],
        )
        for i in sel["index_a"]
    ]
    order = np.argsort(np.asarray(["\x00".join(k) for k in keys]), kind="stable")
    sel = sel.iloc[order].reset_index(drop=True)
    perm = shuffle_order(len(sel), seed)
    n_test = max(1, int(len(sel) * test_fraction))
    test_pairs = sel.iloc[perm[:n_test]].sort_values("index_a").reset_index(drop=True)

    split_a = _all_train_but(store_a, test_pairs["index_a"].to_numpy())
    split_b = _all_train_but(store_b, test_pairs["index_b"].to_numpy())

    tails_norm = sorted(
        {match.ent_norm_a[store_a.triples[i, 2]] for i in sel["index_a"]}
    )
    to_id_a = {lab: i for i, lab in enumerate(match.ent_norm_a)}
    to_id_b = {lab: i for i, lab in enumerate(match.ent_norm_b)}
    candidates_a = np.asarray([to_id_a[lab] for lab in tails_norm], dtype=np.int64)
    candidates_b = np.asarray([to_id_b[lab] for lab in tails_norm], dtype=np.int64)
    return CaseStudySplit(split_a, split_b, candidates_a, candidates_b, test_pairs)


def _all_train_but(store: TripleStore, test_indices: np.ndarray) -> SplitAssignment:
    labels = np.zeros(store.num_triples, dtype=np.uint8)
    labels[test_indices] = 2
    return SplitAssignment(labels=labels, ratios=(0.0, 0.0, 0.0), seed=-1)
