"""Triple store, label vocabularies and adjacency indexes.

Triples are kept as a dense integer array and every derived index is built
once, after which the graph is immutable and safe to share across workers.
Entity and relation ids are 32-bit by default; flip :data:`ID_DTYPE` to
``numpy.int64`` before loading if a graph outgrows that.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

# 64-bit fallback switch for graphs with >2**31 entities.
ID_DTYPE = np.int32

TSV = "tsv"
CSV = "csv"
_DELIMITERS = {TSV: "\t", CSV: ","}


class Vocabulary:
    """Bijection between string labels and dense ids in first-appearance order."""

    __slots__ = ("_labels", "_index")

    def __init__(self, labels: Iterable[str] = ()):
        self._labels: list[str] = []
        self._index: dict[str, int] = {}
        for label in labels:
            self.add(label)

    def add(self, label: str) -> int:
        """Return the id of ``label``, assigning the next free id if new."""
        idx = self._index.get(label)
        if idx is None:
            idx = len(self._labels)
            self._index[label] = idx
            self._labels.append(label)
        return idx

    def id(self, label: str) -> int:
        return self._index[label]

    def label(self, idx: int) -> str:
        return self._labels[idx]

    @property
    def labels(self) -> list[str]:
        return list(self._labels)

    def __len__(self) -> int:
        return len(self._labels)

    def __contains__(self, label: str) -> bool:
        return label in self._index

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self._labels == other._labels


@dataclass
class TripleStore:
    """A knowledge graph as a set of (head, relation, tail) id triples.

    ``triples`` has shape (n, 3) and holds unique rows; ids index into the
    two vocabularies. ``entity_types`` is an optional per-entity type label
    (defaults to "unknown" for entities missing from the type file).
    """

    entities: Vocabulary
    relations: Vocabulary
    triples: np.ndarray
    entity_types: list[str] | None = None
    duplicates_dropped: int = 0
    reverse_dropped: int = 0

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    @property
    def num_triples(self) -> int:
        return int(self.triples.shape[0])

    def entity_type(self, entity_id: int) -> str:
        if self.entity_types is None:
            return "unknown"
        return self.entity_types[entity_id]

    def validate(self) -> None:
        """Raise ValueError if any invariant is broken."""
        t = self.triples
        if t.ndim != 2 or t.shape[1] != 3:
            raise ValueError(f"triples must have shape (n, 3), got {t.shape}")
        if t.shape[0] == 0:
            raise ValueError("a knowledge graph must contain at least one triple")
        if t[:, [0, 2]].max() >= len(self.entities) or t[:, [0, 2]].min() < 0:
            raise ValueError("entity id out of range")
        if t[:, 1].max() >= len(self.relations) or t[:, 1].min() < 0:
            raise ValueError("relation id out of range")
        if len(np.unique(encode_triples(self, t))) != t.shape[0]:
            raise ValueError("duplicate triples present")


@dataclass
class GraphStats:
    """Whole-graph size statistics."""

    num_entities: int
    num_relations: int
    num_triples: int
    avg_node_degree: float


def encode_triples(store: TripleStore, triples: np.ndarray) -> np.ndarray:
    """Pack (h, r, t) rows into single int64 keys: ((h * R) + r) * E + t."""
    e, r = len(store.entities), len(store.relations)
    if e * r * e >= 2**63:
        raise OverflowError(
            "graph too large for int64 triple encoding; "
            "reduce vocabulary or extend encode_triples"
        )
    t = triples.astype(np.int64, copy=False)
    return (t[:, 0] * r + t[:, 1]) * e + t[:, 2]


def load_triples(
    path: str | Path | Sequence[str | Path],
    format: str = TSV,
    columns: tuple[int, int, int] = (0, 1, 2),
    header: bool = False,
) -> TripleStore:
    """Read one or more delimited triple files into a TripleStore.

    Args:
        path: file path, or a sequence of paths concatenated in order
            (e.g. pre-split train/valid/test files).
        format: "tsv" or "csv".
        columns: 0-based positions of (head, relation, tail) in each row.
        header: skip the first row of every file.

    Vocabularies are assigned in first-appearance order. Exact duplicate
    rows are dropped and counted in ``duplicates_dropped``.

    Raises:
        ValueError: unknown format, malformed row (with file and line
            number) or empty input.
        OSError: unreadable file.
    """
    if format not in _DELIMITERS:
        raise ValueError(f"unknown format {format!r}; expected one of {sorted(_DELIMITERS)}")
    delimiter = _DELIMITERS[format]
    paths = [path] if isinstance(path, (str, Path)) else list(path)
    need = max(columns) + 1

    entities = Vocabulary()
    relations = Vocabulary()
    rows: list[tuple[int, int, int]] = []
    seen: set[tuple[int, int, int]] = set()
    duplicates = 0

    hc, rc, tc = columns
    for p in paths:
        with open(p, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh, delimiter=delimiter)
            for lineno, row in enumerate(reader, start=1):
                if header and lineno == 1:
                    continue
                if not row or (len(row) == 1 and not row[0].strip()):
                    continue
                if len(row) < need:
                    raise ValueError(
                        f"{p}:{lineno}: malformed row, expected >= {need} columns, got {len(row)}"
                    )
                h = entities.add(row[hc])
                r = relations.add(row[rc])
                t = entities.add(row[tc])
                key = (h, r, t)
                if key in seen:
                    duplicates += 1
                else:
                    seen.add(key)
                    rows.append(key)

    if not rows:
        raise ValueError("empty input: a knowledge graph must contain at least one triple")
    triples = np.asarray(rows, dtype=ID_DTYPE)
    return TripleStore(entities, relations, triples, duplicates_dropped=duplicates)


def load_entity_types(path: str | Path, store: TripleStore, format: str = TSV) -> list[str]:
    """Read a two-column (entity label, type label) file into a per-id type list.

    Entities absent from the file are typed "unknown"; labels in the file
    that are not in the store are ignored.
    """
    delimiter = _DELIMITERS[format]
    types = ["unknown"] * len(store.entities)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        for lineno, row in enumerate(reader, start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 2:
                raise ValueError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            if row[0] in store.entities:
                types[store.entities.id(row[0])] = row[1]
    return types


def save_triples(store: TripleStore, path: str | Path, format: str = TSV) -> None:
    """Write triples back out as labels, one row per triple, in store order."""
    delimiter = _DELIMITERS[format]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        for h, r, t in store.triples:
            writer.writerow(
                [store.entities.label(h), store.relations.label(r), store.entities.label(t)]
            )


def dedup_reverse(store: TripleStore) -> TripleStore:
    """Drop one triple of every reciprocal pair sharing a relation.

    For every pair where both (h, r, t) and (t, r, h) exist with h != t,
    only the triple whose id tuple is lexicographically smaller (h < t)
    survives. Self-loops are untouched. Vocabularies are preserved, so ids
    stay valid; the number of removals is recorded in ``reverse_dropped``.
    """
    t = store.triples
    keys = encode_triples(store, t)
    reverse = t[:, [2, 1, 0]]
    rev_keys = encode_triples(store, reverse)
    has_reverse = np.isin(rev_keys, keys)
    drop = has_reverse & (t[:, 0] > t[:, 2])
    kept = t[~drop]
    return TripleStore(
        store.entities,
        store.relations,
        kept.copy(),
        entity_types=store.entity_types,
        duplicates_dropped=store.duplicates_dropped,
        reverse_dropped=int(drop.sum()),
    )


class IndexedGraph:
    """Immutable adjacency indexes over a TripleStore.

    Provides, per entity, outgoing (relation, tail) and incoming
    (relation, head) lists sorted ascending; per (head, relation) and
    (tail, relation) the sorted neighbor list; O(1) triple membership; and
    sorted distinct-neighbor arrays used by intersection queries.

    Construction is single-threaded; afterwards the object is read-only
    and safe for concurrent use.
    """

    def __init__(self, store: TripleStore):
        store.validate()
        self.store = store
        t = store.triples
        n_ent = len(store.entities)
        n_rel = len(store.relations)

        # Triples sorted by (h, r, t) back the out_by_head and
        # out_by_head_rel indexes; (t, r, h) order backs the incoming ones.
        order = np.lexsort((t[:, 2], t[:, 1], t[:, 0]))
        self._hrt = t[order]
        self._out_indptr = _indptr(self._hrt[:, 0], n_ent)

        order = np.lexsort((t[:, 0], t[:, 1], t[:, 2]))
        self._trh = t[order]
        self._in_indptr = _indptr(self._trh[:, 2], n_ent)

        # Group boundaries of (h, r) within _hrt and (t, r) within _trh.
        hr = self._hrt[:, 0].astype(np.int64) * n_rel + self._hrt[:, 1]
        self._hr_keys, self._hr_starts = np.unique(hr, return_index=True)
        tr = self._trh[:, 2].astype(np.int64) * n_rel + self._trh[:, 1]
        self._tr_keys, self._tr_starts = np.unique(tr, return_index=True)

        self._members = set(encode_triples(store, t).tolist())

        # Distinct out-/in-neighbors regardless of relation type.
        ht = np.unique(t[:, 0].astype(np.int64) * n_ent + t[:, 2])
        self._outn = (ht % n_ent).astype(ID_DTYPE)
        self._outn_indptr = _indptr((ht // n_ent).astype(ID_DTYPE), n_ent)
        th = np.unique(t[:, 2].astype(np.int64) * n_ent + t[:, 0])
        self._inn = (th % n_ent).astype(ID_DTYPE)
        self._inn_indptr = _indptr((th // n_ent).astype(ID_DTYPE), n_ent)

    # -- sizes ------------------------------------------------------------

    @property
    def num_entities(self) -> int:
        return len(self.store.entities)

    @property
    def num_relations(self) -> int:
        return len(self.store.relations)

    @property
    def num_triples(self) -> int:
        return self.store.num_triples

    # -- indexes ----------------------------------------------------------

    def out_by_head(self, h: int) -> np.ndarray:
        """(r, t) pairs for triples with head h, sorted by (r, t); shape (k, 2)."""
        lo, hi = self._out_indptr[h], self._out_indptr[h + 1]
        return self._hrt[lo:hi, 1:]

    def in_by_tail(self, t: int) -> np.ndarray:
        """(r, h) pairs for triples with tail t, sorted by (r, h); shape (k, 2)."""
        lo, hi = self._in_indptr[t], self._in_indptr[t + 1]
        return self._trh[lo:hi][:, [1, 0]]

    def tails_of(self, h: int, r: int) -> np.ndarray:
        """Sorted tails t' with (h, r, t') in the graph."""
        key = np.int64(h) * self.num_relations + r
        return self._group(self._hr_keys, self._hr_starts, self._hrt, key)[:, 2]

    def heads_of(self, t: int, r: int) -> np.ndarray:
        """Sorted heads h' with (h', r, t) in the graph."""
        key = np.int64(t) * self.num_relations + r
        return self._group(self._tr_keys, self._tr_starts, self._trh, key)[:, 0]

    def _group(self, keys, starts, table, key) -> np.ndarray:
        i = np.searchsorted(keys, key)
        if i == len(keys) or keys[i] != key:
            return table[:0]
        lo = starts[i]
        hi = starts[i + 1] if i + 1 < len(starts) else table.shape[0]
        return table[lo:hi]

    def has_triple(self, h: int, r: int, t: int) -> bool:
        e, nr = self.num_entities, self.num_relations
        if not (0 <= h < e and 0 <= t < e and 0 <= r < nr):
            return False
        return (int(h) * nr + int(r)) * e + int(t) in self._members

    def out_neighbors(self, h: int) -> np.ndarray:
        """Sorted distinct tails reachable from h via any relation."""
        return self._outn[self._outn_indptr[h] : self._outn_indptr[h + 1]]

    def in_neighbors(self, t: int) -> np.ndarray:
        """Sorted distinct heads pointing at t via any relation."""
        return self._inn[self._inn_indptr[t] : self._inn_indptr[t + 1]]

    def require_triple(self, h: int, r: int, t: int) -> None:
        if not self.has_triple(h, r, t):
            raise ValueError(f"triple ({h}, {r}, {t}) is not in the graph")


def _indptr(sorted_ids: np.ndarray, n: int) -> np.ndarray:
    counts = np.bincount(sorted_ids, minlength=n)
    out = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=out[1:])
    return out


def build_indexes(store: TripleStore) -> IndexedGraph:
    """Build all adjacency indexes for a valid TripleStore."""
    return IndexedGraph(store)


def graph_stats(g: IndexedGraph) -> GraphStats:
    """Entity/relation/triple counts plus average node degree (2 * T / E)."""
    e = g.num_entities
    t = g.num_triples
    return GraphStats(
        num_entities=e,
        num_relations=g.num_relations,
        num_triples=t,
        avg_node_degree=2.0 * t / e,
    )
