import math
import os
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
import scipy.stats

from kgtopo.analysis import (
    case_study_split,
    interaction_report,
    join_topology,
    match_shared_triples,
    relation_level_aggregate,
    spearman,
    stratify,
)
from kgtopo.graph import TripleStore, Vocabulary, build_indexes
from kgtopo.splits import COUNTERPART_IN_TRAIN, NO_COUNTERPART
from kgtopo.topology import topology_table
from kgtopo.validation import store_from_array

from oracles import random_store


class TestSpearman:
    def test_perfect_positive(self):
        assert spearman([1, 2, 3], [10, 20, 30]) == pytest.approx(1.0)

    def test_perfect_negative(self):
        assert spearman([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)

    def test_matches_scipy_on_random_pairs(self, rng):
        for _ in range(100):
            n = int(rng.integers(3, 40))
            x = rng.integers(0, 8, n).astype(float)  # ties likely
            y = rng.normal(size=n)
            expected = scipy.stats.spearmanr(x, y).statistic
            got = spearman(x, y)
            if math.isnan(expected):
                assert math.isnan(got)
            else:
                assert got == pytest.approx(expected, abs=1e-12)

    def test_symmetry_and_monotone_invariance(self, rng):
        x = rng.normal(size=50)
        y = rng.normal(size=50)
        assert spearman(x, y) == pytest.approx(spearman(y, x))
        assert spearman(np.exp(x), y) == pytest.approx(spearman(x, y))
        assert spearman(x, 3 * y + 7) == pytest.approx(spearman(x, y))

    def test_zero_variance_is_nan(self):
        assert math.isnan(spearman([1, 1, 1], [1, 2, 3]))

    def test_length_checks(self):
        with pytest.raises(ValueError):
            spearman([1], [2])
        with pytest.raises(ValueError):
            spearman([1, 2], [1, 2, 3])


def records_frame(ranks, rels=None, extra=None):
    n = len(ranks)
    frame = pd.DataFrame(
        {
            "h": np.arange(n),
            "r": rels if rels is not None else np.zeros(n, int),
            "t": np.arange(n),
            "rank": ranks,
            "candidate_count": np.full(n, 100),
        }
    )
    frame["reciprocal_rank"] = 1.0 / frame["rank"]
    if extra:
        for k, v in extra.items():
            frame[k] = v
    return frame


class TestStratify:
    def test_single_stratum_equals_overall(self):
        frame = records_frame([1, 2, 4], extra={"cardinality": ["one-to-one"] * 3})
        out = stratify(frame, "cardinality")
        assert len(out) == 1
        assert out.loc[0, "mrr"] == pytest.approx(frame["reciprocal_rank"].mean())

    def test_two_strata_mrr(self):
        frame = records_frame([1, 2], extra={"cardinality": ["one-to-one", "many-to-many"]})
        out = stratify(frame, "cardinality").set_index("cardinality")
        assert out.loc["one-to-one", "mrr"] == 1.0
        assert out.loc["many-to-many", "mrr"] == 0.5

    def test_partition_counts_sum(self, rng):
        n = 200
        frame = records_frame(
            rng.integers(1, 50, n),
            rels=rng.integers(0, 4, n),
            extra={
                "cardinality": rng.choice(["one-to-one", "many-to-many"], n),
                "head_out_same_rel": rng.integers(1, 200, n),
                "tail_in_same_rel": rng.integers(1, 200, n),
            },
        )
        for key in ("cardinality", "relation_type", "degree_bins"):
            out = stratify(frame, key)
            assert out["count"].sum() == n

    def test_matches_groupby_oracle(self, rng):
        n = 300
        cards = rng.choice(["one-to-one", "one-to-many", "many-to-one", "many-to-many"], n)
        frame = records_frame(rng.integers(1, 9, n), extra={"cardinality": cards})
        out = stratify(frame, "cardinality").set_index("cardinality")
        groups = {}
        for card, rr in zip(cards, frame["reciprocal_rank"]):
            groups.setdefault(card, []).append(rr)
        for card, vals in groups.items():
            assert out.loc[card, "count"] == len(vals)
            assert out.loc[card, "mrr"] == pytest.approx(np.mean(vals))

    def test_pattern_counterpart_strata(self):
        frame = records_frame(
            [1, 2, 5, 10],
            extra={
                "counterpart_symmetric": [NO_COUNTERPART, COUNTERPART_IN_TRAIN] * 2,
                "counterpart_inference": [NO_COUNTERPART] * 4,
                "counterpart_inverse": [COUNTERPART_IN_TRAIN] * 4,
            },
        )
        out = stratify(frame, "pattern_counterpart")
        assert set(out["pattern"]) == {"symmetric", "inference", "inverse"}
        for pattern in ("symmetric", "inference", "inverse"):
            assert out[out["pattern"] == pattern]["count"].sum() == 4

    def test_per_model_breakdown(self):
        frame = records_frame(
            [1, 2, 1, 4],
            extra={"cardinality": ["one-to-one"] * 4, "model": ["a", "a", "b", "b"]},
        )
        out = stratify(frame, "cardinality")
        assert out.loc[0, "mrr_a"] == pytest.approx(0.75)
        assert out.loc[0, "mrr_b"] == pytest.approx(0.625)

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown stratum key"):
            stratify(records_frame([1]), "degree")


class TestRelationLevel:
    def topo_extra(self, n, rng):
        return {
            "cardinality": rng.choice(["one-to-one", "many-to-many"], n),
            "is_symmetric": rng.random(n) < 0.5,
            "has_inference": rng.random(n) < 0.5,
            "has_inverse": rng.random(n) < 0.5,
            "has_composition": rng.random(n) < 0.5,
        }

    def test_single_relation_reports_nan_correlations(self, rng):
        frame = records_frame([1, 2, 3], extra=self.topo_extra(3, rng))
        per_rel, corr = relation_level_aggregate(frame)
        assert len(per_rel) == 1
        assert corr["spearman_with_avg_mrr"].isna().all()

    def test_constructed_monotone_correlation(self):
        # Three relations, symmetric-pattern frequency and MRR both increasing.
        rows = []
        for rel, (rank, freq) in enumerate([(10, 0.0), (4, 0.5), (1, 1.0)]):
            for i in range(4):
                rows.append((rel, rank, i < freq * 4))
        frame = records_frame(
            [r for _, r, _ in rows],
            rels=[rel for rel, _, _ in rows],
            extra={
                "cardinality": ["many-to-many"] * len(rows),
                "is_symmetric": [s for _, _, s in rows],
                "has_inference": [False] * len(rows),
                "has_inverse": [False] * len(rows),
                "has_composition": [False] * len(rows),
            },
        )
        _, corr = relation_level_aggregate(frame)
        sym = corr.set_index("column").loc["freq_symmetric", "spearman_with_avg_mrr"]
        assert sym == pytest.approx(1.0)

    def test_matches_groupby_oracle(self, rng):
        n = 120
        rels = rng.integers(0, 3, n)
        frame = records_frame(rng.integers(1, 20, n), rels=rels, extra=self.topo_extra(n, rng))
        per_rel, _ = relation_level_aggregate(frame)
        for rel in range(3):
            sel = frame[frame["r"] == rel]
            row = per_rel[per_rel["r"] == rel].iloc[0]
            assert row["avg_mrr"] == pytest.approx(sel["reciprocal_rank"].mean())
            assert row["freq_symmetric"] == pytest.approx(sel["is_symmetric"].mean())
            assert row["freq_one-to-one"] == pytest.approx((sel["cardinality"] == "one-to-one").mean())

    def test_relation_level_equals_triple_level_when_homogeneous(self):
        # Equal-sized relations, each with one (flag, rank) value: the
        # relation-level correlation must coincide with the triple-level one.
        flags = [False, False, True, True, False]
        ranks = [8, 6, 2, 1, 4]
        per_rel_rows = 6
        rels, rank_col, flag_col = [], [], []
        for rel, (flag, rank) in enumerate(zip(flags, ranks)):
            rels += [rel] * per_rel_rows
            rank_col += [rank] * per_rel_rows
            flag_col += [flag] * per_rel_rows
        frame = records_frame(
            rank_col,
            rels=rels,
            extra={
                "cardinality": ["many-to-many"] * len(rels),
                "is_symmetric": flag_col,
                "has_inference": [False] * len(rels),
                "has_inverse": [False] * len(rels),
                "has_composition": [False] * len(rels),
            },
        )
        _, corr = relation_level_aggregate(frame)
        relation_level = corr.set_index("column").loc["freq_symmetric", "spearman_with_avg_mrr"]
        triple_level = spearman(
            frame["is_symmetric"].to_numpy(float), frame["reciprocal_rank"].to_numpy()
        )
        assert relation_level == pytest.approx(triple_level)


HETIONET = Path(os.environ.get("KGTOPO_DATA", Path(__file__).resolve().parent.parent / "data")) / "hetionet" / "edges.tsv"


@pytest.mark.skipif(not HETIONET.is_file(), reason="Hetionet edges.tsv not available offline")
def test_hetionet_drug_disease_unique_tails():
    from kgtopo.graph import load_triples

    store = load_triples(HETIONET, header=True)
    # node ids look like "Compound::DB00997"; the prefix is the type
    store.entity_types = [label.split("::")[0] for label in store.entities.labels]
    g = build_indexes(store)
    out = interaction_report(g, store.entity_types, ("Compound", "Disease"))
    assert out["unique_tails"] == 91


class TestInteractionReport:
    def test_single_gene_gene_triple(self):
        store = store_from_array(np.array([[0, 0, 1], [2, 0, 3]]))
        store.entity_types = ["Gene", "Gene", "Drug", "Disease"]
        g = build_indexes(store)
        out = interaction_report(g, store.entity_types, ("Gene", "Gene"))
        assert out["triple_count"] == 1
        assert out["unique_tails"] == 1
        assert out["median_head_out_same_rel"] == 1.0
        assert out["median_tail_in_same_rel"] == 1.0

    def test_unknown_type_label(self, toy_graph, toy_store):
        with pytest.raises(ValueError, match="unknown entity type"):
            interaction_report(toy_graph, toy_store.entity_types, ("Gene", "Pathway"))

    def test_matches_filtered_recount(self, rng, toy_graph, toy_store):
        topo = topology_table(toy_graph)
        out = interaction_report(toy_graph, toy_store.entity_types, ("Drug", "Disease"), topo)
        types = toy_store.entity_types
        sel = [
            i
            for i, (h, r, t) in enumerate(toy_store.triples)
            if types[h] == "Drug" and types[t] == "Disease"
        ]
        assert out["triple_count"] == len(sel)
        assert out["unique_tails"] == len({int(toy_store.triples[i, 2]) for i in sel})
        assert out["median_head_out_same_rel"] == pytest.approx(
            float(np.median([topo.iloc[i]["head_out_same_rel"] for i in sel]))
        )
        assert out["frac_composition"] == pytest.approx(
            float(np.mean([topo.iloc[i]["has_composition"] for i in sel]))
        )


def relabeled_copy(store, entity_prefix="x_", relation_prefix=""):
    entities = Vocabulary(entity_prefix + l for l in store.entities.labels)
    relations = Vocabulary(relation_prefix + l for l in store.relations.labels)
    return TripleStore(entities, relations, store.triples.copy())


class TestMatchSharedTriples:
    def test_identical_stores_match_fully(self, rng):
        store = random_store(rng, max_entities=15, n_relations=3, max_triples=80)
        match = match_shared_triples(store, relabeled_copy(store, entity_prefix=""), None)
        assert len(match.pairs) == store.num_triples
        assert (match.relation_stats["matching_rate"] == 1.0).all()

    def test_disjoint_stores_match_nothing(self):
        a = store_from_array(np.array([[0, 0, 1]]))
        b_ents = Vocabulary(["p", "q"])
        b = TripleStore(b_ents, Vocabulary(["R9"]), np.array([[0, 0, 1]], dtype=np.int32))
        match = match_shared_triples(a, b)
        assert len(match.pairs) == 0
        assert (match.relation_stats["matching_rate"] == 0.0).all()

    def test_normalizer_joins_namespaces(self, rng):
        store = random_store(rng, max_entities=10, n_relations=2, max_triples=40)
        other = relabeled_copy(store, entity_prefix="x_")
        normalizer = {f"x_{l}": l for l in store.entities.labels}
        match = match_shared_triples(store, other, normalizer)
        assert len(match.pairs) == store.num_triples

    def test_collision_raises_with_listing(self, rng):
        store = random_store(rng, max_entities=10, n_relations=2, max_triples=40)
        labels = store.entities.labels
        normalizer = {labels[0]: "same", labels[1]: "same"}
        with pytest.raises(ValueError, match="collision"):
            match_shared_triples(store, relabeled_copy(store, entity_prefix=""), normalizer)

    def test_planted_overlap_rate(self, rng):
        # B keeps 60% of A's triples of relation r0 plus its own extras.
        rows_a = [(h, 0, h + 1) for h in range(0, 100, 2)]  # 50 triples
        a = store_from_array(np.array(rows_a))
        kept = rows_a[:30]
        extras = [(h, 0, h + 3) for h in range(1, 41, 2)]
        b = store_from_array(np.array(kept + extras))
        # align labels: store_from_array names by id, so regenerate via labels
        a_lab = TripleStore(Vocabulary(f"n{h}" for h in range(101)), Vocabulary(["r0"]),
                            np.array([[h, 0, h + 1] for h in range(0, 100, 2)], dtype=np.int32))
        b_rows = kept + extras
        b_ents = sorted({x for h, _, t in b_rows for x in (h, t)})
        b_map = {e: i for i, e in enumerate(b_ents)}
        b_lab = TripleStore(
            Vocabulary(f"n{e}" for e in b_ents),
            Vocabulary(["r0"]),
            np.array([[b_map[h], 0, b_map[t]] for h, _, t in b_rows], dtype=np.int32),
        )
        match = match_shared_triples(a_lab, b_lab)
        stats = match.relation_stats.set_index("side")
        assert len(match.pairs) == 30
        assert stats.loc["a", "matching_rate"] == pytest.approx(30 / 50)
        assert stats.loc["b", "matching_rate"] == pytest.approx(30 / 50)
        # spot-check a stat against a direct recount
        ga = build_indexes(a_lab)
        topo_a = topology_table(ga)
        assert stats.loc["a", "median_head_out"] == pytest.approx(
            float(topo_a["head_out"].median())
        )

    def test_injective_both_ways(self, rng):
        store = random_store(rng, max_entities=12, n_relations=2, max_triples=60)
        match = match_shared_triples(store, relabeled_copy(store, entity_prefix=""), None)
        assert match.pairs["index_a"].is_unique
        assert match.pairs["index_b"].is_unique


class TestCaseStudySplit:
    def twin_stores(self, rng, n=100):
        store = random_store(rng, max_entities=30, n_relations=1, max_triples=3 * n)
        while store.num_triples < n:
            store = random_store(rng, max_entities=30, n_relations=1, max_triples=3 * n)
        b = relabeled_copy(store, entity_prefix="")
        return store, b

    def test_ten_percent_identical_test_sets(self, rng):
        a, b = self.twin_stores(rng)
        match = match_shared_triples(a, b)
        relation = a.relations.labels[0]
        case = case_study_split(match, a, b, relation, 0.10, seed=4)
        n_shared = (match.pairs["relation"] == relation).sum()
        assert len(case.test_pairs) == int(n_shared * 0.10)
        for _, row in case.test_pairs.iterrows():
            ta = a.triples[row["index_a"]]
            tb = b.triples[row["index_b"]]
            assert a.entities.label(ta[0]) == b.entities.label(tb[0])
            assert a.entities.label(ta[2]) == b.entities.label(tb[2])
        # test triples are test in both splits, everything else trains
        assert set(case.split_a.indices("test")) == set(case.test_pairs["index_a"])
        assert set(case.split_b.indices("test")) == set(case.test_pairs["index_b"])
        assert len(case.split_a.indices("valid")) == 0

    def test_candidate_sets_identical_across_graphs(self, rng):
        a, b = self.twin_stores(rng)
        match = match_shared_triples(a, b)
        case = case_study_split(match, a, b, a.relations.labels[0], 0.10, seed=0)
        labels_a = sorted(a.entities.label(c) for c in case.candidates_a)
        labels_b = sorted(b.entities.label(c) for c in case.candidates_b)
        assert labels_a == labels_b

    def test_too_few_shared_triples(self, rng):
        a = store_from_array(np.array([[0, 0, 1], [1, 0, 2]]))
        b = relabeled_copy(a, entity_prefix="")
        match = match_shared_triples(a, b)
        with pytest.raises(ValueError, match=">= 10"):
            case_study_split(match, a, b, "R0")


class TestJoins:
    def test_join_topology_brings_columns(self, toy_graph, toy_store):
        topo = topology_table(toy_graph)
        frame = records_frame([1, 2])
        frame[["h", "r", "t"]] = toy_store.triples[:2]
        joined = join_topology(frame, topo)
        assert "cardinality" in joined.columns
        assert len(joined) == 2
