"""Tiered cascaded reranking for knowledge-graph link prediction.

Cheap embedding scorers produce full query-answer score matrices; more
expensive scorers (ingested or simulated) rerank adaptively pruned candidate
subsets, trading ranking accuracy against an abstract inference-cost model.
"""

from .analysis import (
    DistributionSummary,
    ParetoRow,
    average_margin,
    distribution_summary,
    margin_rank_correlation,
    pareto_table,
    rank_correlation,
)
from .cascade import (
    Boundary,
    CandidateSets,
    CascadeConfig,
    CascadeResult,
    CostReport,
    PruningSpec,
    QuantileRegressor,
    RegressorConfig,
    dynamic_prune,
    load_regressor,
    pinball_loss,
    prepare_cascade,
    run_cascade,
    save_regressor,
    select_k_from_quantile,
    sort_rows_descending,
    static_prune,
    train_rank_regressor,
)
from .datasets import (
    HEAD,
    TAIL,
    FilterIndex,
    KnowledgeGraph,
    Query,
    build_filter_index,
    build_queries,
    load_dataset,
    save_dataset,
)
from .ensemble import DEFAULT_ALPHA_GRID, additive_combine, tune_alpha
from .errors import (
    AlignmentError,
    DatasetError,
    FormatError,
    KGCascadeError,
    TrainingDivergedError,
)
from .evaluation import EvalReport, evaluate, filtered_rank, gold_ranks, uniform_random_mrr
from .kge import (
    KGEModel,
    TrainConfig,
    TrainResult,
    load_model,
    save_model,
    score_all,
    score_triple,
    train_kge,
)
from .scores import (
    CostModel,
    ScoreMatrix,
    cascade_cost,
    keys_from_queries,
    load_matrix,
    normalize_per_query,
    queries_from_keys,
    save_matrix,
    synthesize_scorer,
)
from .synthetic import planted_kg

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
