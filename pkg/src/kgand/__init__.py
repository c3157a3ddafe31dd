"""Author name disambiguation on scholarly knowledge graphs.

The pipeline ingests bibliographic triples, trains bilinear graph
embeddings (optionally fused with title and year literals), blocks
author records by last name + first initial, clusters each block with
single-linkage agglomerative clustering over cosine distance, and
evaluates against identifier-labeled ground truth with pairwise
precision/recall/F1.  Two reproducible baselines are included.
"""

from .clustering import (
    AuthorFeature,
    Block,
    Clustering,
    build_author_feature,
    build_blocks,
    cluster_block,
    dedupe_kg,
    post_block_filter,
    threshold_sweep,
)
from .evaluation import EvalReport, PairCounts, aggregate, pairwise_counts, prf
from .features import (
    NumericFeatureTable,
    TextFeatureTable,
    build_numeric_features,
    fallback_title_embed,
    load_text_vectors,
)
from .kg import (
    AuthorRecord,
    DatasetSplit,
    KnowledgeGraph,
    extract_author_records,
    parse_ntriples,
    parse_triples,
    split_structural,
)
from .model import (
    ModelParams,
    distmult_score,
    entity_representation,
    gated_fusion,
    init_params,
    linear_fusion,
    load_checkpoint,
    save_checkpoint,
    score_triple,
)
from .names import ln_fi_key
from .training import (
    TrainConfig,
    TrainHistory,
    adam_step,
    eval_link_prediction,
    sample_negatives,
    smoothed_bce,
    train_model,
)

__version__ = "0.1.0"

__all__ = [
    "AuthorFeature",
    "AuthorRecord",
    "Block",
    "Clustering",
    "DatasetSplit",
    "EvalReport",
    "KnowledgeGraph",
    "ModelParams",
    "NumericFeatureTable",
    "PairCounts",
    "TextFeatureTable",
    "TrainConfig",
    "TrainHistory",
    "adam_step",
    "aggregate",
    "build_author_feature",
    "build_blocks",
    "build_numeric_features",
    "cluster_block",
    "dedupe_kg",
    "distmult_score",
    "entity_representation",
    "eval_link_prediction",
    "extract_author_records",
    "fallback_title_embed",
    "gated_fusion",
    "init_params",
    "linear_fusion",
    "ln_fi_key",
    "load_checkpoint",
    "load_text_vectors",
    "pairwise_counts",
    "parse_ntriples",
    "parse_triples",
    "post_block_filter",
    "prf",
    "sample_negatives",
    "save_checkpoint",
    "score_triple",
    "smoothed_bce",
    "split_structural",
    "threshold_sweep",
    "train_model",
]
