"""Dual-scale softmax loss trainer for implicit-feedback recommenders."""

from .data import (
    DatasetSplits,
    InteractionDataset,
    PopularityBuckets,
    TrainingBatch,
    build_buckets,
    generate_synthetic,
    load_interactions,
    sample_negatives,
    split_iid,
    split_ood,
)
from .evaluation import MetricsReport, evaluate, ndcg_at_k, recall_at_k
from .loss import (
    CAState,
    DSLConfig,
    KappaWeights,
    LossOutput,
    bpr_loss,
    compute_ca,
    compute_kappa,
    dsl_loss,
    pairwise_weights,
    softmax_loss,
)
from .model import (
    EmbeddingModel,
    ScoreMatrix,
    SimilarityMatrix,
    effective_embeddings,
    init_embeddings,
    item_similarity,
    score,
    score_all_items,
)
from .runner import ExperimentConfig, RunRecord, grid_search, report, run_ablation, train
from .theory import (
    DROResult,
    PayoffInstance,
    free_energy,
    gibbs_optimizer,
    kl_radius,
    run_theory_suite,
    smooth_max_bounds,
    verify_rank_surrogate,
    verify_rho_monotonicity,
    verify_variational_identity,
)

__version__ = "0.1.0"
