"""Shared-account cross-domain sequential recommendation.

Pipeline: interaction logs -> CDS graph (account-item plus same-domain item
transitions) -> attention-weighted message passing with H latent users per
account -> joint two-domain training -> leave-last-out MRR@K / Recall@K.
"""

__version__ = "0.1.0"

from .data import (
    HybridSequence,
    ItemRef,
    SyntheticSpec,
    Vocabulary,
    generate_synthetic,
    parse_log,
    parse_log_file,
    serialize_log,
    split_sequences,
)
from .errors import ConfigError, DataError
from .evaluation import (
    MetricsReport,
    evaluate,
    leave_last_out,
    mrr_at_k,
    popularity_baseline,
    rank_of_target,
    recall_at_k,
)
from .graph import (
    CdsGraph,
    GraphOptions,
    build_cds_graph,
    graph_stats,
    item_neighbors,
    user_neighbors,
)
from .model import ModelConfig, ModelParams, propagate
from .training import TrainConfig, finite_difference_check, train
