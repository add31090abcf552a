"""Deterministic train/valid/test partitioning and counterpart provenance.

The split must reproduce bit-for-bit across platforms, so it avoids any
library shuffle whose implementation might drift. The documented scheme:

1. Draw one 64-bit key per triple from the counter-based Philox generator,
   ``numpy.random.Generator(numpy.random.Philox(key=seed))``, as a single
   block: ``integers(0, 2**64, size=n, dtype=uint64, endpoint=False)``.
2. Order triples by (key, original index) ascending.
3. Cut the ordered sequence at ``floor(n * train)`` and
   ``floor(n * (train + valid))``; the three segments are train, valid and
   test in that order.

Anyone can re-derive a triple's label from (triple order, ratios, seed)
with ten lines of code, which is exactly the point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .graph import IndexedGraph, TripleStore, encode_triples

TRAIN, VALID, TEST = "train", "valid", "test"
LABELS = (TRAIN, VALID, TEST)

NO_COUNTERPART = "NO_COUNTERPART"
COUNTERPART_IN_TRAIN = "COUNTERPART_IN_TRAIN"
COUNTERPART_ELSEWHERE = "COUNTERPART_ELSEWHERE"

COUNTERPART_PATTERNS = ("symmetric", "inference", "inverse")


@dataclass
class SplitAssignment:
    """Per-triple split labels, aligned with the store's triple order."""

    labels: np.ndarray  # (n,) uint8: 0 train, 1 valid, 2 test
    ratios: tuple[float, float, float]
    seed: int

    def indices(self, label: str) -> np.ndarray:
        return np.flatnonzero(self.labels == LABELS.index(label))

    def triples_of(self, store: TripleStore, label: str) -> np.ndarray:
        return store.triples[self.indices(label)]

    def counts(self) -> dict[str, int]:
        return {lab: int((self.labels == i).sum()) for i, lab in enumerate(LABELS)}

    def to_frame(self, store: TripleStore) -> pd.DataFrame:
        t = store.triples
        return pd.DataFrame(
            {
                "h": t[:, 0],
                "r": t[:, 1],
                "t": t[:, 2],
                "label": [LABELS[i] for i in self.labels],
            }
        )


def shuffle_order(n: int, seed: int) -> np.ndarray:
    """The documented Philox key-sort permutation of range(n)."""
    gen = np.random.Generator(np.random.Philox(key=seed))
    keys = gen.integers(0, 2**64, size=n, dtype=np.uint64, endpoint=False)
    return np.lexsort((np.arange(n), keys))


def random_split(
    store: TripleStore, ratios: tuple[float, float, float] = (0.8, 0.1, 0.1), seed: int = 0
) -> SplitAssignment:
    """Partition the store's triples uniformly at random, reproducibly.

    Raises:
        ValueError: ratios not positive or not summing to 1, or any split
            empty (graph too small for the requested ratios).
    """
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be three positive numbers, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got sum={sum(ratios)!r}")
    n = store.num_triples
    order = shuffle_order(n, seed)
    c1 = int(n * ratios[0])
    c2 = int(n * (ratios[0] + ratios[1]))
    if c1 == 0 or c2 == c1 or c2 == n:
        raise ValueError(
            f"split of {n} triples with ratios {ratios} leaves an empty part"
        )
    labels = np.empty(n, dtype=np.uint8)
    labels[order[:c1]] = 0
    labels[order[c1:c2]] = 1
    labels[order[c2:]] = 2
    return SplitAssignment(labels=labels, ratios=tuple(ratios), seed=seed)


def split_to_csv(store: TripleStore, split: SplitAssignment, path) -> None:
    split.to_frame(store).to_csv(path, index=False)


def split_from_labels(labels) -> SplitAssignment:
    """Rebuild an assignment from string labels (e.g. a loaded split CSV)."""
    codes = np.asarray([LABELS.index(l) for l in labels], dtype=np.uint8)
    return SplitAssignment(labels=codes, ratios=(0.0, 0.0, 0.0), seed=-1)


class CounterpartAnalyzer:
    """Looks up whether a test triple's pattern witnesses were trained on.

    Pattern flags are decided on the *full* graph; the training split only
    decides between IN_TRAIN and ELSEWHERE. Witnesses:

        symmetric: the single triple (t, r, h)
        inference: any (h, r', t) with r' != r
        inverse:   any (t, r', h) with r' != r
    """

    def __init__(self, g_full: IndexedGraph, split: SplitAssignment):
        self.g = g_full
        self.split = split
        keys = encode_triples(g_full.store, g_full.store.triples)
        self._label_of = dict(zip(keys.tolist(), split.labels.tolist()))

    def _label(self, h: int, r: int, t: int) -> int:
        e, nr = self.g.num_entities, self.g.num_relations
        return self._label_of[(h * nr + r) * e + t]

    def status(self, test_triple) -> dict[str, str]:
        h, r, t = (int(x) for x in test_triple)
        self.g.require_triple(h, r, t)
        if self._label(h, r, t) != 2:
            raise ValueError(f"triple ({h}, {r}, {t}) is not in the test split")

        out: dict[str, str] = {}
        if h != t and self.g.has_triple(t, r, h):
            out["symmetric"] = _status_of([self._label(t, r, h)])
        else:
            out["symmetric"] = NO_COUNTERPART

        rels_ht = self.g.out_by_head(h)
        witnesses = [int(rr) for rr, tt in rels_ht if tt == t and rr != r]
        out["inference"] = (
            _status_of([self._label(h, rr, t) for rr in witnesses])
            if witnesses
            else NO_COUNTERPART
        )

        rels_th = self.g.out_by_head(t)
        witnesses = [int(rr) for rr, tt in rels_th if tt == h and rr != r]
        out["inverse"] = (
            _status_of([self._label(t, rr, h) for rr in witnesses])
            if witnesses
            else NO_COUNTERPART
        )
        return out

    def table(self, test_triples: np.ndarray | None = None) -> pd.DataFrame:
        """Status per test triple, wide form: one column per pattern."""
        if test_triples is None:
            test_triples = self.split.triples_of(self.g.store, TEST)
        rows = []
        for triple in test_triples:
            s = self.status(triple)
            rows.append(
                (
                    int(triple[0]),
                    int(triple[1]),
                    int(triple[2]),
                    s["symmetric"],
                    s["inference"],
                    s["inverse"],
                )
            )
        return pd.DataFrame(
            rows,
            columns=["h", "r", "t", "counterpart_symmetric", "counterpart_inference", "counterpart_inverse"],
        )


def _status_of(witness_labels: list[int]) -> str:
    return COUNTERPART_IN_TRAIN if 0 in witness_labels else COUNTERPART_ELSEWHERE


def counterpart_status(g_full: IndexedGraph, split: SplitAssignment, test_triple) -> dict[str, str]:
    """One-shot form of :class:`CounterpartAnalyzer` for a single triple."""
    return CounterpartAnalyzer(g_full, split).status(test_triple)


def counterpart_report(g_full: IndexedGraph, split: SplitAssignment) -> pd.DataFrame:
    """Long-form report: one (h, r, t, pattern, status) row per pattern."""
    wide = CounterpartAnalyzer(g_full, split).table()
    rows = wide.melt(
        id_vars=["h", "r", "t"],
        value_vars=["counterpart_symmetric", "counterpart_inference", "counterpart_inverse"],
        var_name="pattern",
        value_name="status",
    )
    rows["pattern"] = rows["pattern"].str.removeprefix("counterpart_")
    return rows.sort_values(["h", "r", "t", "pattern"], kind="mergesort").reset_index(drop=True)
