"""Estimator-style wrappers so the core algorithms compose with sklearn.

``KGERanker`` is fit/predict-shaped: fit trains embedding tables on a
triple array, predict returns the top filtered tail per query, and score
is the filtered MRR (higher is better), so the usual model-selection
tooling applies. ``TopologyFeatures`` is a transformer turning triples
into their per-triple topology feature rows against a fitted graph.
"""

from __future__ import annotations

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin

from .evaluation import EvalConfig, evaluate, rank_tail
from .graph import build_indexes
from .models import ModelConfig, init_model, score_tails, score_triples
from .topology import DEFAULT_DEGREE_BIN_EDGES, topology_table
from .training import TrainConfig, train
from .validation import check_queries, check_triples, store_from_array

_TOPOLOGY_FEATURES = [
    "head_out",
    "tail_in",
    "head_out_same_rel",
    "tail_in_same_rel",
    "cardinality",
    "is_symmetric",
    "has_inference",
    "has_inverse",
    "has_composition",
    "composition_count",
]


class TopologyFeatures(BaseEstimator, TransformerMixin):
    """Per-triple topology features computed against a fitted graph.

    fit(X) indexes the triple array X as the background graph; transform(X)
    returns the feature rows of the given triples, which must all be
    present in the fitted graph.
    """

    def __init__(self, degree_bin_edges=DEFAULT_DEGREE_BIN_EDGES):
        self.degree_bin_edges = degree_bin_edges

    def fit(self, X, y=None):
        store = store_from_array(check_triples(X))
        self.graph_ = build_indexes(store)
        self.table_ = topology_table(self.graph_)
        self._lookup = self.table_.set_index(["h", "r", "t"])
        return self

    def transform(self, X) -> pd.DataFrame:
        if not hasattr(self, "graph_"):
            raise RuntimeError("TopologyFeatures is not fitted")
        X = check_triples(X, self.graph_.num_entities, self.graph_.num_relations)
        try:
            rows = self._lookup.loc[[tuple(map(int, t)) for t in X]]
        except KeyError as err:
            raise ValueError(f"triple not in the fitted graph: {err}") from None
        return rows.reset_index()[["h", "r", "t"] + _TOPOLOGY_FEATURES]

    def get_feature_names_out(self, input_features=None):
        return np.asarray(["h", "r", "t"] + _TOPOLOGY_FEATURES, dtype=object)


class KGERanker(BaseEstimator):
    """Shallow embedding link predictor with a fit/predict/score surface.

    Parameters mirror the model and training configs; ``n_entities`` /
    ``n_relations`` may be set explicitly when the training array does not
    mention every id. Prediction masks tails already linked in the
    training graph, so predict(X) proposes *new* links.
    """

    def __init__(
        self,
        scorer: str = "distmult",
        dim: int = 64,
        norm: int = 2,
        margin: float = 12.0,
        learning_rate: float = 3e-3,
        epochs: int = 50,
        batch_size: int = 128,
        negatives_per_positive: int = 16,
        adversarial_temperature: float = 1.0,
        init_scale: float | None = None,
        n_entities: int | None = None,
        n_relations: int | None = None,
        seed: int = 0,
    ):
        self.scorer = scorer
        self.dim = dim
        self.norm = norm
        self.margin = margin
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.negatives_per_positive = negatives_per_positive
        self.adversarial_temperature = adversarial_temperature
        self.init_scale = init_scale
        self.n_entities = n_entities
        self.n_relations = n_relations
        self.seed = seed

    def fit(self, X, y=None):
        X = check_triples(X, self.n_entities, self.n_relations)
        n_ent = self.n_entities or int(X[:, [0, 2]].max()) + 1
        n_rel = self.n_relations or int(X[:, 1].max()) + 1
        self.graph_ = build_indexes(store_from_array(X))
        model_config = ModelConfig(
            scorer=self.scorer, dim=self.dim, norm=self.norm,
            init_scale=self.init_scale, seed=self.seed,
        )
        train_config = TrainConfig(
            margin=self.margin,
            batch_size=self.batch_size,
            negatives_per_positive=self.negatives_per_positive,
            adversarial_temperature=self.adversarial_temperature,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            patience=0,
            seed=self.seed,
        )
        model = init_model(model_config, n_ent, n_rel)
        self.model_, self.report_ = train(X, train_config, model)
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise RuntimeError("KGERanker is not fitted")

    def predict(self, X) -> np.ndarray:
        """Highest-scoring unseen tail per (h, r) query."""
        self._check_fitted()
        queries = check_queries(X)
        out = np.empty(len(queries), dtype=np.int64)
        for i, (h, r) in enumerate(queries):
            scores = score_tails(self.model_, int(h), int(r), np.arange(self.model_.num_entities))
            known = self.graph_.tails_of(int(h), int(r))
            scores[known] = -np.inf
            out[i] = int(np.argmax(scores))
        return out

    def rank(self, X) -> np.ndarray:
        """Filtered rank of each triple's tail against the training graph."""
        self._check_fitted()
        X = check_triples(X, self.model_.num_entities, self.model_.num_relations)
        return np.asarray(
            [rank_tail(self.model_, self.graph_, (h, r), t).rank for h, r, t in X],
            dtype=np.int64,
        )

    def decision_function(self, X) -> np.ndarray:
        """Raw scores of the given triples."""
        self._check_fitted()
        return score_triples(self.model_, check_triples(X))

    def score(self, X, y=None) -> float:
        """Filtered MRR over the given test triples (higher is better)."""
        self._check_fitted()
        X = check_triples(X, self.model_.num_entities, self.model_.num_relations)
        frame = evaluate(self.model_, self.graph_, X, EvalConfig())
        return float(frame["reciprocal_rank"].mean())
