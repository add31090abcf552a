"""Command-line pipeline: stats -> split -> topology -> train -> eval -> stratify.

Configuration lives in a JSON file; every key can be overridden with
``--set dotted.key=value`` (values parsed as JSON, falling back to plain
strings) or the dedicated flags. Reruns with the same config and seed
produce byte-identical CSV/JSON artifacts; the manifest records input
hashes, the resolved config and wall times (the only timestamp fields).

Environment: KGTOPO_OUT sets the default output root.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__, analysis, evaluation, models, splits, topology, training
from .graph import build_indexes, dedup_reverse, graph_stats, load_entity_types, load_triples

DEFAULT_CONFIG = {
    "data": {
        "paths": [],
        "format": "tsv",
        "columns": [0, 1, 2],
        "header": False,
        "entity_types": None,
        "dedup_reverse": False,
    },
    "split": {"ratios": [0.8, 0.1, 0.1]},
    "model": {"scorer": "distmult", "dim": 64, "norm": 2, "init_scale": None},
    "train": {
        "margin": 12.0,
        "batch_size": 128,
        "negatives_per_positive": 16,
        "adversarial_temperature": 1.0,
        "learning_rate": 0.003,
        "epochs": 50,
        "beta1": 0.9,
        "beta2": 0.999,
        "epsilon": 1e-8,
        "negative_mode": "shared",
        "patience": 5,
        "val_sample": 2048,
    },
    "eval": {"filter": "full_graph", "top_k": 100, "degree_bias": True},
    "analysis": {"degree_bin_edges": [1, 2, 4, 11, 32, 101], "interactions": []},
    "case_study": {
        "paths_b": [],
        "mapping": None,
        "relation": None,
        "test_fraction": 0.1,
    },
    "out": None,
    "seed": 42,
    "threads": 0,  # 0 -> all available cores
}

STAGES = ("stats", "topology", "split", "train", "eval", "stratify")


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _write_csv(path: Path, frame: pd.DataFrame) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.12g", lineterminator="\n")


def _sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _apply_set(config: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ValueError(f"--set expects dotted.key=value, got {assignment!r}")
    dotted, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = config
    *parents, leaf = dotted.split(".")
    for part in parents:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ValueError(f"--set path {dotted!r} crosses a non-dict value")
    node[leaf] = value


def resolve_config(args: argparse.Namespace) -> dict:
    config = copy.deepcopy(DEFAULT_CONFIG)
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            config = _deep_merge(config, json.load(fh))
    for assignment in args.set or []:
        _apply_set(config, assignment)
    if args.data:
        config["data"]["paths"] = list(args.data)
    if args.format:
        config["data"]["format"] = args.format
    if args.dedup_reverse:
        config["data"]["dedup_reverse"] = True
    if args.filter:
        config["eval"]["filter"] = {"graph": "full_graph", "train": "train_only"}[args.filter]
    if args.scorer:
        config["model"]["scorer"] = args.scorer
    if args.dim:
        config["model"]["dim"] = args.dim
    if args.epochs is not None:
        config["train"]["epochs"] = args.epochs
    if args.seed is not None:
        config["seed"] = args.seed
    if args.threads is not None:
        config["threads"] = args.threads
    if args.out:
        config["out"] = args.out
    if config["out"] is None:
        config["out"] = os.environ.get("KGTOPO_OUT", "kgtopo-out")
    if not config["data"]["paths"]:
        raise ValueError("no input data: pass --data or set data.paths in the config")
    for p in config["data"]["paths"]:
        if not Path(p).exists():
            raise ValueError(f"input file not found: {p}")
    return config


class Pipeline:
    """Holds loaded data and runs stages, accumulating manifest entries."""

    def __init__(self, config: dict):
        self.cfg = config
        self.out = Path(config["out"])
        self.threads = config["threads"] or (os.cpu_count() or 1)
        self.seed = int(config["seed"])
        self.manifest: dict = {
            "tool": "kgtopo",
            "version": __version__,
            "config": config,
            "config_hash": hashlib.sha256(
                json.dumps(config, sort_keys=True).encode()
            ).hexdigest(),
            "inputs": {str(p): _sha256(p) for p in config["data"]["paths"]},
            "versions": {
                "python": sys.version.split()[0],
                "numpy": np.__version__,
                "pandas": pd.__version__,
            },
            "stages": {},
        }
        self._store = None
        self._graph = None
        self._split = None
        self._topo = None
        self._model = None
        self._records = None

    # -- lazy shared state --------------------------------------------------

    @property
    def store(self):
        if self._store is None:
            d = self.cfg["data"]
            store = load_triples(
                d["paths"], format=d["format"], columns=tuple(d["columns"]), header=d["header"]
            )
            if d["dedup_reverse"]:
                store = dedup_reverse(store)
            if d["entity_types"]:
                store.entity_types = load_entity_types(d["entity_types"], store, format=d["format"])
            self._store = store
        return self._store

    @property
    def graph(self):
        if self._graph is None:
            self._graph = build_indexes(self.store)
        return self._graph

    @property
    def split(self):
        if self._split is None:
            path = self.out / "split.csv"
            if path.exists():
                frame = pd.read_csv(path)
                self._split = splits.split_from_labels(frame["label"])
            else:
                self._split = splits.random_split(
                    self.store, tuple(self.cfg["split"]["ratios"]), self.seed
                )
        return self._split

    @property
    def topo(self):
        if self._topo is None:
            path = self.out / "topology.csv"
            if path.exists():
                self._topo = pd.read_csv(path)
            else:
                self._topo = topology.topology_table(self.graph, threads=self.threads)
        return self._topo

    @property
    def model(self):
        if self._model is None:
            path = self.out / "model.ckpt"
            if not path.exists():
                raise ValueError(f"no checkpoint at {path}; run the train stage first")
            self._model = models.load_checkpoint(path)
        return self._model

    @property
    def records(self):
        if self._records is None:
            path = self.out / "rank_records.csv"
            if not path.exists():
                raise ValueError(f"no rank records at {path}; run the eval stage first")
            self._records = pd.read_csv(path)
        return self._records

    # -- stages --------------------------------------------------------------

    def run_stage(self, name: str) -> None:
        started = time.perf_counter()
        getattr(self, f"stage_{name.replace('-', '_')}")()
        self.manifest["stages"][name] = {"seconds": round(time.perf_counter() - started, 3)}

    def stage_stats(self) -> None:
        stats = graph_stats(self.graph)
        _write_json(
            self.out / "stats.json",
            {
                "num_entities": stats.num_entities,
                "num_relations": stats.num_relations,
                "num_triples": stats.num_triples,
                "avg_node_degree": stats.avg_node_degree,
                "duplicates_dropped": self.store.duplicates_dropped,
                "reverse_dropped": self.store.reverse_dropped,
            },
        )

    def stage_topology(self) -> None:
        # always recompute: the on-disk report may belong to another run
        table = topology.topology_table(self.graph, threads=self.threads)
        self._topo = table
        _write_csv(self.out / "topology.csv", table)
        edges = self.cfg["analysis"]["degree_bin_edges"]
        _write_json(
            self.out / "topology_summary.json",
            {
                "pattern_fractions": topology.dataset_pattern_fractions(self.graph, table),
                "cardinality_fractions": topology.cardinality_histogram(self.graph, table),
            },
        )
        hist = topology.degree_histogram2d(self.graph, edges, table)
        _write_csv(self.out / "degree_histogram2d.csv", hist.reset_index(names="head_bin"))

    def stage_split(self) -> None:
        split = splits.random_split(self.store, tuple(self.cfg["split"]["ratios"]), self.seed)
        self._split = split
        _write_csv(self.out / "split.csv", split.to_frame(self.store))
        _write_csv(self.out / "counterpart.csv", splits.counterpart_report(self.graph, split))

    def stage_train(self) -> None:
        mc = self.cfg["model"]
        config = models.ModelConfig(
            scorer=mc["scorer"], dim=mc["dim"], norm=mc["norm"],
            init_scale=mc["init_scale"], seed=self.seed,
        )
        tc = training.TrainConfig(seed=self.seed, **self.cfg["train"])
        model = models.init_model(config, self.store.num_entities, self.store.num_relations)
        g_train = build_indexes(self._subgraph(splits.TRAIN))
        valid = self.split.triples_of(self.store, splits.VALID)
        self.out.mkdir(parents=True, exist_ok=True)
        with open(self.out / "training_log.jsonl", "w", encoding="utf-8") as fh:
            def log(entry):
                fh.write(json.dumps(entry, sort_keys=True) + "\n")

            model, report = training.train(g_train, tc, model, valid_triples=valid, log=log)
        models.save_checkpoint(model, self.out / "model.ckpt")
        self._model = model

    def stage_eval(self) -> None:
        ec = self.cfg["eval"]
        config = evaluation.EvalConfig(filter_source=ec["filter"], top_k=ec["top_k"])
        test = self.split.triples_of(self.store, splits.TEST)
        g_train = None
        if ec["filter"] == evaluation.FILTER_TRAIN_ONLY:
            g_train = build_indexes(self._subgraph(splits.TRAIN))
        frame = evaluation.evaluate(
            self.model, self.graph, test, config, g_train=g_train, threads=self.threads
        )
        frame = analysis.join_topology(frame, self.topo)
        counterpart = splits.CounterpartAnalyzer(self.graph, self.split).table(test)
        frame = analysis.join_counterpart(frame, counterpart)
        self._records = frame
        _write_csv(self.out / "rank_records.csv", frame)
        _write_json(self.out / "eval_summary.json", evaluation.summary(frame))
        if ec.get("degree_bias", True):
            corr, skipped = evaluation.degree_bias(self.model, self.graph, test, top_k=ec["top_k"])
            bias = pd.DataFrame(
                {"r": list(corr.keys()), "spearman": list(corr.values())}
            )
            _write_csv(self.out / "degree_bias.csv", bias)
            if skipped:
                self.manifest.setdefault("notes", []).append(
                    f"degree_bias skipped relations with <5 predicted entities: {skipped}"
                )

    def stage_stratify(self) -> None:
        records = self.records
        edges = self.cfg["analysis"]["degree_bin_edges"]
        plots = self.out / "plots"

        by_card = analysis.stratify(records, "cardinality", edges)
        by_deg = analysis.stratify(records, "degree_bins", edges)
        by_pc = analysis.stratify(records, "pattern_counterpart", edges)
        by_rel = analysis.stratify(records, "relation_type", edges)
        _write_csv(self.out / "strata_cardinality.csv", by_card)
        _write_csv(self.out / "strata_degree_bins.csv", by_deg)
        _write_csv(self.out / "strata_pattern_counterpart.csv", by_pc)
        _write_csv(self.out / "strata_relation.csv", by_rel)

        per_rel, corr = analysis.relation_level_aggregate(records)
        _write_csv(self.out / "relation_level.csv", per_rel)
        _write_csv(self.out / "relation_level_corr.csv", corr)

        _write_csv(plots / "fig5_cardinality.csv", by_card)
        _write_csv(plots / "fig6_degrees.csv", by_deg)
        comp = records.copy()
        labels = topology.degree_bin_labels(edges)
        comp["head_bin"] = [labels[i] for i in topology.degree_bin_index(comp["head_out_same_rel"].to_numpy(), edges)]
        comp["tail_bin"] = [labels[i] for i in topology.degree_bin_index(comp["tail_in_same_rel"].to_numpy(), edges)]
        fig7 = (
            comp.groupby(["head_bin", "tail_bin", "has_composition"], sort=True)
            .agg(count=("reciprocal_rank", "size"), mrr=("reciprocal_rank", "mean"))
            .reset_index()
        )
        _write_csv(plots / "fig7_composition.csv", fig7)
        _write_csv(plots / "figC7_counterpart.csv", by_pc)

        test = records[["h", "r", "t"]].to_numpy()
        fractions = np.empty(len(test))
        for rel in np.unique(test[:, 1]):
            sel = test[:, 1] == rel
            tail_set = np.unique(self.store.triples[self.store.triples[:, 1] == rel, 2])
            k = min(self.cfg["eval"]["top_k"], self.graph.num_entities)
            fractions[sel] = evaluation.demixing(self.model, self.graph, test[sel], tail_set, k)
        demix = pd.DataFrame(
            {"h": test[:, 0], "r": test[:, 1], "t": test[:, 2], "top_k_type_fraction": fractions}
        )
        _write_csv(plots / "figC9_demixing.csv", demix)

        interactions = self.cfg["analysis"]["interactions"]
        if interactions:
            if self.store.entity_types is None:
                raise ValueError("analysis.interactions requires data.entity_types")
            reports = [
                analysis.interaction_report(self.graph, self.store.entity_types, tuple(pair), self.topo)
                for pair in interactions
            ]
            _write_json(self.out / "interactions.json", reports)

    def stage_case_study(self) -> None:
        cs = self.cfg["case_study"]
        if not cs["paths_b"] or not cs["relation"]:
            raise ValueError("case-study needs case_study.paths_b and case_study.relation")
        d = self.cfg["data"]
        store_a = self.store
        store_b = load_triples(
            cs["paths_b"], format=d["format"], columns=tuple(d["columns"]), header=d["header"]
        )
        normalizer = None
        if cs["mapping"]:
            frame = pd.read_csv(cs["mapping"], sep="\t", header=None, names=["raw", "norm"])
            normalizer = dict(zip(frame["raw"], frame["norm"]))
        match = analysis.match_shared_triples(store_a, store_b, normalizer)
        _write_csv(self.out / "match_pairs.csv", match.pairs)
        _write_csv(self.out / "plots" / "tabC1_matchstats.csv", match.relation_stats)

        case = analysis.case_study_split(
            match, store_a, store_b, cs["relation"], cs["test_fraction"], self.seed
        )
        for side, store, split, cands in (
            ("a", store_a, case.split_a, case.candidates_a),
            ("b", store_b, case.split_b, case.candidates_b),
        ):
            g_full = build_indexes(store)
            train_store = _store_subset(store, split, splits.TRAIN)
            g_train = build_indexes(train_store)
            mc = self.cfg["model"]
            config = models.ModelConfig(
                scorer=mc["scorer"], dim=mc["dim"], norm=mc["norm"],
                init_scale=mc["init_scale"], seed=self.seed,
            )
            tc = training.TrainConfig(seed=self.seed, **self.cfg["train"])
            model = models.init_model(config, store.num_entities, store.num_relations)
            model, _ = training.train(g_train, tc, model)
            test = split.triples_of(store, splits.TEST)
            ec = evaluation.EvalConfig(
                filter_source=self.cfg["eval"]["filter"],
                top_k=self.cfg["eval"]["top_k"],
                candidates=cands,
            )
            frame = evaluation.evaluate(
                model, g_full, test, ec, g_train=g_train, threads=self.threads
            )
            _write_csv(self.out / f"case_records_{side}.csv", frame)
            _write_json(self.out / f"case_summary_{side}.json", evaluation.summary(frame))

    def _subgraph(self, label: str):
        return _store_subset(self.store, self.split, label)

    def finish(self, status: str) -> None:
        self.manifest["status"] = status
        self.manifest["finished_unix"] = time.time()
        _write_json(self.out / "manifest.json", self.manifest)


def _store_subset(store, split, label):
    from .graph import TripleStore

    return TripleStore(
        store.entities,
        store.relations,
        split.triples_of(store, label).copy(),
        entity_types=store.entity_types,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgtopo",
        description="Knowledge-graph topology profiling, embedding training and stratified evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("stats", "graph size statistics"),
        ("topology", "per-triple topology report and dataset summary"),
        ("split", "deterministic train/valid/test split and counterpart report"),
        ("train", "train an embedding model on the train split"),
        ("eval", "filtered tail ranking of the test split"),
        ("stratify", "stratified MRR reports and plot-pack tables"),
        ("case-study", "two-graph shared-triple comparison pipeline"),
        ("all", "run stats, topology, split, train, eval and stratify"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--data", nargs="+", help="input triple file(s)")
        p.add_argument("--out", help="output directory (default $KGTOPO_OUT or ./kgtopo-out)")
        p.add_argument("--seed", type=int, help="global seed for every stochastic stage")
        p.add_argument("--threads", type=int, help="worker processes (1 = fully sequential)")
        p.add_argument("--format", choices=["tsv", "csv"], help="input file format")
        p.add_argument("--dedup-reverse", action="store_true", help="drop reciprocal duplicates")
        p.add_argument("--filter", choices=["graph", "train"], help="rank-filter source")
        p.add_argument("--scorer", choices=list(models.SCORERS), help="scoring function")
        p.add_argument("--dim", type=int, help="embedding size")
        p.add_argument("--epochs", type=int, help="training epochs")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
    except (ValueError, OSError, json.JSONDecodeError) as err:
        print(f"kgtopo: {err}", file=sys.stderr)
        return 2

    pipeline = Pipeline(config)
    stages = list(STAGES) if args.command == "all" else [args.command]
    for stage in stages:
        try:
            pipeline.run_stage(stage)
        except Exception as err:  # halt with a partial manifest
            pipeline.manifest["failed_stage"] = stage
            pipeline.manifest["error"] = str(err)
            pipeline.finish("failed")
            print(f"kgtopo: stage {stage} failed: {err}", file=sys.stderr)
            return 1
    pipeline.finish("ok")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
