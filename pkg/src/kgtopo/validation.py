"""Input validation helpers for array-facing entry points."""

from __future__ import annotations

import numpy as np

from .graph import ID_DTYPE, TripleStore, Vocabulary


def check_triples(X, n_entities: int | None = None, n_relations: int | None = None) -> np.ndarray:
    """Coerce X to a validated (n, 3) integer triple array.

    Ids must be non-negative and, when table sizes are given, in range.
    """
    arr = np.asarray(X)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"expected an (n, 3) triple array, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise ValueError("expected at least one triple")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.floor(arr)):
            raise ValueError("triple ids must be integers")
        arr = arr.astype(np.int64)
    if arr.min() < 0:
        raise ValueError("triple ids must be non-negative")
    if n_entities is not None and arr[:, [0, 2]].max() >= n_entities:
        raise ValueError(f"entity id out of range [0, {n_entities})")
    if n_relations is not None and arr[:, 1].max() >= n_relations:
        raise ValueError(f"relation id out of range [0, {n_relations})")
    return arr.astype(ID_DTYPE)


def check_queries(X) -> np.ndarray:
    """Coerce X to (n, 2) (head, relation) queries; accepts (n, 3) triples too."""
    arr = np.asarray(X)
    if arr.ndim != 2 or arr.shape[1] not in (2, 3):
        raise ValueError(f"expected an (n, 2) query or (n, 3) triple array, got {arr.shape}")
    return arr[:, :2].astype(np.int64)


def store_from_array(triples: np.ndarray) -> TripleStore:
    """Wrap an id array in a TripleStore with synthetic label vocabularies."""
    triples = check_triples(triples)
    n_ent = int(triples[:, [0, 2]].max()) + 1
    n_rel = int(triples[:, 1].max()) + 1
    uniq = np.unique(
        triples[:, 0].astype(np.int64) * n_rel * n_ent
        + triples[:, 1].astype(np.int64) * n_ent
        + triples[:, 2].astype(np.int64)
    )
    if len(uniq) != len(triples):
        raise ValueError("duplicate triples in input array")
    entities = Vocabulary(f"E{i}" for i in range(n_ent))
    relations = Vocabulary(f"R{i}" for i in range(n_rel))
    return TripleStore(entities, relations, triples)
