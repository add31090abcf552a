"""kgtopo: knowledge-graph topology profiling, shallow embedding training
and topology-stratified link-prediction evaluation."""

__version__ = "0.1.0"

from .analysis import (
    CaseStudySplit,
    MatchTable,
    case_study_split,
    interaction_report,
    join_counterpart,
    join_topology,
    match_shared_triples,
    relation_level_aggregate,
    spearman,
    stratify,
)
from .estimators import KGERanker, TopologyFeatures
from .evaluation import (
    EvalConfig,
    RankRecord,
    degree_bias,
    demixing,
    evaluate,
    hits_at,
    mrr,
    rank_tail,
)
from .graph import (
    GraphStats,
    IndexedGraph,
    TripleStore,
    Vocabulary,
    build_indexes,
    dedup_reverse,
    graph_stats,
    load_entity_types,
    load_triples,
    save_triples,
)
from .models import (
    EmbeddingModel,
    ModelConfig,
    init_model,
    load_checkpoint,
    save_checkpoint,
    score,
    score_tails,
    score_triples,
)
from .splits import (
    CounterpartAnalyzer,
    SplitAssignment,
    counterpart_report,
    counterpart_status,
    random_split,
)
from .topology import (
    DegreeProfile,
    EdgeCardinality,
    PatternFlags,
    TopologyRecord,
    cardinality_histogram,
    composition_count,
    dataset_pattern_fractions,
    degree_histogram2d,
    edge_cardinality,
    pattern_flags,
    topology_record,
    topology_table,
    triple_degrees,
)
from .training import (
    Adam,
    RowGradients,
    TrainConfig,
    TrainReport,
    TrainingDiverged,
    adversarial_loss,
    sample_negatives,
    train,
)
