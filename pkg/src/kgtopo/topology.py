"""Per-triple degree profiles, edge cardinalities and topological patterns.

Degrees count *distinct* neighbors, not edges: the head out-degree of a
triple (h, r, t) is the number of distinct tails reachable from h via any
relation, and the same-relation variant restricts witnesses to r. Edge
cardinality is decided solely by whether the same-relation degrees equal 1:

    deg_r(h) = 1, deg_r(t) = 1  ->  one-to-one
    deg_r(h) = 1, deg_r(t) > 1  ->  many-to-one
    deg_r(h) > 1, deg_r(t) = 1  ->  one-to-many
    otherwise                   ->  many-to-many

The four pattern flags are independent per-triple properties:

    symmetric    h != t and (t, r, h) in G
    inference    exists r' != r with (h, r', t) in G
    inverse      exists r' != r with (t, r', h) in G
    composition  exists n not in {h, t} and r1, r2 with
                 (h, r1, n) in G and (n, r2, t) in G
                 (r1, r2 are unconstrained and may equal r)

``topology_table`` computes everything for all triples in one vectorized
pass; the scalar operations are the reference per-triple forms.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np
import pandas as pd

from .graph import IndexedGraph

# Logarithmic-ish degree bin edges used by default for histograms and
# degree stratification; the last bin is open-ended.
DEFAULT_DEGREE_BIN_EDGES = (1, 2, 4, 11, 32, 101)


class EdgeCardinality(str, Enum):
    ONE_TO_ONE = "one-to-one"
    ONE_TO_MANY = "one-to-many"
    MANY_TO_ONE = "many-to-one"
    MANY_TO_MANY = "many-to-many"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


PATTERN_NAMES = ("symmetric", "inference", "inverse", "composition")


@dataclass
class DegreeProfile:
    """Distinct-neighbor degrees of a triple's endpoints."""

    head_out: int
    tail_in: int
    head_out_same_rel: int
    tail_in_same_rel: int


@dataclass
class PatternFlags:
    is_symmetric: bool
    has_inference: bool
    has_inverse: bool
    has_composition: bool


@dataclass
class TopologyRecord:
    """One row of the per-triple topology report."""

    triple: tuple[int, int, int]
    degrees: DegreeProfile
    cardinality: EdgeCardinality
    patterns: PatternFlags
    composition_count: int


def triple_degrees(g: IndexedGraph, triple) -> DegreeProfile:
    """Degree profile of a triple that must be present in the graph."""
    h, r, t = (int(x) for x in triple)
    g.require_triple(h, r, t)
    return DegreeProfile(
        head_out=len(g.out_neighbors(h)),
        tail_in=len(g.in_neighbors(t)),
        head_out_same_rel=len(g.tails_of(h, r)),
        tail_in_same_rel=len(g.heads_of(t, r)),
    )


def edge_cardinality(degrees: DegreeProfile) -> EdgeCardinality:
    """Map same-relation degrees to the cardinality class."""
    if degrees.head_out_same_rel < 1 or degrees.tail_in_same_rel < 1:
        raise ValueError("same-relation degrees must be >= 1 for a present triple")
    single_h = degrees.head_out_same_rel == 1
    single_t = degrees.tail_in_same_rel == 1
    if single_h and single_t:
        return EdgeCardinality.ONE_TO_ONE
    if single_h:
        return EdgeCardinality.MANY_TO_ONE
    if single_t:
        return EdgeCardinality.ONE_TO_MANY
    return EdgeCardinality.MANY_TO_MANY


def pattern_flags(g: IndexedGraph, triple) -> PatternFlags:
    """Evaluate the four pattern definitions for one triple."""
    h, r, t = (int(x) for x in triple)
    g.require_triple(h, r, t)

    symmetric = h != t and g.has_triple(t, r, h)

    # Any second relation linking the same ordered pair.
    pairs = g.out_by_head(h)
    inference = bool(np.any((pairs[:, 1] == t) & (pairs[:, 0] != r)))

    rev = g.out_by_head(t)
    inverse = bool(np.any((rev[:, 1] == h) & (rev[:, 0] != r)))

    composition = composition_count(g, triple) > 0
    return PatternFlags(symmetric, inference, inverse, composition)


def composition_count(g: IndexedGraph, triple) -> int:
    """Number of distinct intermediates n with h -> n -> t, n not in {h, t}.

    Sorted-merge intersection of h's distinct out-neighbors with t's
    distinct in-neighbors, O(deg_h + deg_t) and memory-bounded. A sparse
    matrix-product backend could produce the same counts but is not used.
    """
    h, r, t = (int(x) for x in triple)
    g.require_triple(h, r, t)
    out_n = g.out_neighbors(h)
    in_n = g.in_neighbors(t)
    count = _sorted_intersect_count(out_n, in_n)
    for endpoint in {h, t}:
        if _sorted_contains(out_n, endpoint) and _sorted_contains(in_n, endpoint):
            count -= 1
    return count


def topology_record(g: IndexedGraph, triple) -> TopologyRecord:
    degrees = triple_degrees(g, triple)
    return TopologyRecord(
        triple=tuple(int(x) for x in triple),
        degrees=degrees,
        cardinality=edge_cardinality(degrees),
        patterns=pattern_flags(g, triple),
        composition_count=composition_count(g, triple),
    )


def _sorted_intersect_count(a: np.ndarray, b: np.ndarray) -> int:
    if len(a) > len(b):
        a, b = b, a
    if len(a) == 0:
        return 0
    pos = np.searchsorted(b, a)
    pos[pos == len(b)] = len(b) - 1
    return int(np.count_nonzero(b[pos] == a))


def _sorted_contains(a: np.ndarray, x: int) -> bool:
    i = np.searchsorted(a, x)
    return i < len(a) and a[i] == x


# ---------------------------------------------------------------------------
# Vectorized whole-graph computation
# ---------------------------------------------------------------------------


def topology_table(g: IndexedGraph, threads: int = 1) -> pd.DataFrame:
    """Topology report for every triple of the graph, in store order.

    Columns: h, r, t, head_out, tail_in, head_out_same_rel,
    tail_in_same_rel, cardinality, is_symmetric, has_inference,
    has_inverse, has_composition, composition_count.

    The result is identical, byte for byte, to applying the scalar
    operations triple by triple; ``threads`` only parallelizes the
    composition intersection over chunks of triples.
    """
    t = g.store.triples
    n = t.shape[0]
    n_ent = np.int64(g.num_entities)

    heads = t[:, 0].astype(np.int64)
    rels = t[:, 1].astype(np.int64)
    tails = t[:, 2].astype(np.int64)

    # Distinct-neighbor degrees via unique (h, t) pair grouping.
    ht = heads * n_ent + tails
    uniq_ht, pair_inv, pair_counts = np.unique(ht, return_inverse=True, return_counts=True)
    head_out = np.diff(g._outn_indptr)[heads]
    tail_in = np.diff(g._inn_indptr)[tails]

    # Same-relation degrees = size of the (h, r) / (t, r) triple groups.
    hr = heads * g.num_relations + rels
    hr_sizes = _group_sizes(g._hr_keys, g._hr_starts, g._hrt.shape[0])
    head_out_r = hr_sizes[np.searchsorted(g._hr_keys, hr)]
    tr = tails * g.num_relations + rels
    tr_sizes = _group_sizes(g._tr_keys, g._tr_starts, g._trh.shape[0])
    tail_in_r = tr_sizes[np.searchsorted(g._tr_keys, tr)]

    # Patterns. pair_counts counts distinct relations linking (h, t), so
    # inference holds iff the pair carries a second relation.
    inference = pair_counts[pair_inv] >= 2

    keys = (heads * g.num_relations + rels) * n_ent + tails
    rev_keys = (tails * g.num_relations + rels) * n_ent + heads
    sorted_keys = np.sort(keys)
    rev_in_graph = _isin_sorted(sorted_keys, rev_keys)
    symmetric = rev_in_graph & (heads != tails)

    # Inverse: any (t, r', h) with r' != r. The (t -> h) pair count minus
    # the same-relation reverse (if present) must leave a witness.
    th = tails * n_ent + heads
    th_counts = pair_counts[np.searchsorted(uniq_ht, th).clip(max=len(uniq_ht) - 1)]
    th_counts = np.where(_isin_sorted(uniq_ht, th), th_counts, 0)
    inverse = (th_counts - rev_in_graph.astype(np.int64)) >= 1

    comp_counts = _composition_counts(g, t, threads=threads)

    single_h = head_out_r == 1
    single_t = tail_in_r == 1
    cardinality = np.where(
        single_h & single_t,
        EdgeCardinality.ONE_TO_ONE.value,
        np.where(
            single_h,
            EdgeCardinality.MANY_TO_ONE.value,
            np.where(single_t, EdgeCardinality.ONE_TO_MANY.value, EdgeCardinality.MANY_TO_MANY.value),
        ),
    )

    return pd.DataFrame(
        {
            "h": t[:, 0],
            "r": t[:, 1],
            "t": t[:, 2],
            "head_out": head_out.astype(np.int64),
            "tail_in": tail_in.astype(np.int64),
            "head_out_same_rel": head_out_r.astype(np.int64),
            "tail_in_same_rel": tail_in_r.astype(np.int64),
            "cardinality": cardinality,
            "is_symmetric": symmetric,
            "has_inference": inference,
            "has_inverse": inverse,
            "has_composition": comp_counts > 0,
            "composition_count": comp_counts,
        }
    )


def _group_sizes(keys: np.ndarray, starts: np.ndarray, total: int) -> np.ndarray:
    ends = np.append(starts[1:], total)
    return ends - starts


def _isin_sorted(sorted_arr: np.ndarray, values: np.ndarray) -> np.ndarray:
    pos = np.searchsorted(sorted_arr, values)
    pos_c = pos.clip(max=len(sorted_arr) - 1)
    return (pos < len(sorted_arr)) & (sorted_arr[pos_c] == values)


# Neighbor arrays are shipped to worker processes once, via the pool
# initializer; tasks then carry only their (h, t) pair chunk.
_WORKER: dict = {}


def _init_comp_worker(outn, outn_indptr, inn, inn_indptr) -> None:
    _WORKER["adj"] = (outn, outn_indptr, inn, inn_indptr)


def _composition_chunk_remote(pairs) -> np.ndarray:
    return _composition_chunk((*_WORKER["adj"], pairs))


def _composition_chunk(args) -> np.ndarray:
    outn, outn_indptr, inn, inn_indptr, pairs = args
    counts = np.empty(pairs.shape[0], dtype=np.int64)
    for i, (h, t) in enumerate(pairs):
        a = outn[outn_indptr[h] : outn_indptr[h + 1]]
        b = inn[inn_indptr[t] : inn_indptr[t + 1]]
        c = _sorted_intersect_count(a, b)
        for endpoint in {h, t}:
            if _sorted_contains(a, endpoint) and _sorted_contains(b, endpoint):
                c -= 1
        counts[i] = c
    return counts


def _composition_counts(g: IndexedGraph, triples: np.ndarray, threads: int = 1) -> np.ndarray:
    """Composition counts per triple; intersections run once per (h, t) pair."""
    n_ent = np.int64(g.num_entities)
    ht = triples[:, 0].astype(np.int64) * n_ent + triples[:, 2].astype(np.int64)
    uniq, inv = np.unique(ht, return_inverse=True)
    pairs = np.stack([uniq // n_ent, uniq % n_ent], axis=1).astype(np.int64)

    if threads <= 1 or pairs.shape[0] < 4096:
        per_pair = _composition_chunk((g._outn, g._outn_indptr, g._inn, g._inn_indptr, pairs))
    else:
        chunks = [c for c in np.array_split(pairs, threads * 4) if len(c)]
        with ProcessPoolExecutor(
            max_workers=threads,
            initializer=_init_comp_worker,
            initargs=(g._outn, g._outn_indptr, g._inn, g._inn_indptr),
        ) as pool:
            per_pair = np.concatenate(list(pool.map(_composition_chunk_remote, chunks)))
    return per_pair[inv]


# ---------------------------------------------------------------------------
# Dataset-level aggregation
# ---------------------------------------------------------------------------


def dataset_pattern_fractions(g: IndexedGraph, table: pd.DataFrame | None = None) -> dict[str, float]:
    """Fraction of triples carrying each pattern flag, over the whole graph."""
    if table is None:
        table = topology_table(g)
    n = len(table)
    return {
        "symmetric": float(table["is_symmetric"].sum() / n),
        "inference": float(table["has_inference"].sum() / n),
        "inverse": float(table["has_inverse"].sum() / n),
        "composition": float(table["has_composition"].sum() / n),
    }


def cardinality_histogram(g: IndexedGraph, table: pd.DataFrame | None = None) -> dict[str, float]:
    """Fraction of triples in each cardinality class; fractions sum to 1."""
    if table is None:
        table = topology_table(g)
    counts = table["cardinality"].value_counts()
    n = len(table)
    return {c.value: float(counts.get(c.value, 0) / n) for c in EdgeCardinality}


def degree_bin_index(degrees: np.ndarray, edges=DEFAULT_DEGREE_BIN_EDGES) -> np.ndarray:
    """Bin index per degree for right-open bins [e_i, e_{i+1}), last open-ended."""
    edges = _check_edges(edges)
    return np.digitize(degrees, edges) - 1


def degree_bin_labels(edges=DEFAULT_DEGREE_BIN_EDGES) -> list[str]:
    edges = _check_edges(edges)
    labels = []
    for lo, hi in zip(edges, edges[1:]):
        labels.append(str(lo) if hi == lo + 1 else f"{lo}-{hi - 1}")
    labels.append(f"{edges[-1]}+")
    return labels


def _check_edges(edges) -> list[int]:
    edges = list(edges)
    if len(edges) < 1 or edges[0] > 1:
        raise ValueError("first bin edge must be <= 1")
    if any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError("bin edges must be strictly increasing")
    return edges


def degree_histogram2d(
    g: IndexedGraph,
    edges=DEFAULT_DEGREE_BIN_EDGES,
    table: pd.DataFrame | None = None,
) -> pd.DataFrame:
    """Relative frequency of triples over (deg_r(h), deg_r(t)) bins.

    Rows are head bins, columns tail bins; cells sum to 1.
    """
    if table is None:
        table = topology_table(g)
    labels = degree_bin_labels(edges)
    hb = degree_bin_index(table["head_out_same_rel"].to_numpy(), edges)
    tb = degree_bin_index(table["tail_in_same_rel"].to_numpy(), edges)
    k = len(labels)
    grid = np.zeros((k, k), dtype=np.int64)
    np.add.at(grid, (hb, tb), 1)
    return pd.DataFrame(grid / len(table), index=labels, columns=labels)
