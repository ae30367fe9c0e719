"""Full-ranking Recall@K and NDCG@K, overall and per popularity bucket."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .data import DatasetSplits, InteractionDataset, PopularityBuckets
from .model import EmbeddingModel, effective_embeddings


class EvaluationError(ValueError):
    """Raised when a requested evaluation has no eligible users."""


@dataclass(frozen=True)
class MetricsReport:
    recall_at_k: float
    ndcg_at_k: float
    k: int
    users_evaluated: int
    bucket: str      # "all" | "head" | "tail"
    split_kind: str  # "iid" | "ood"


def recall_at_k(ranked: np.ndarray, test_positives, k: int) -> float:
    """|top-k intersect positives| / |positives|; the denominator is not capped at k."""
    positives = set(int(i) for i in test_positives)
    if not positives:
        raise EvaluationError("recall is undefined without test positives")
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = sum(1 for i in ranked[:k] if int(i) in positives)
    return hits / len(positives)


def ndcg_at_k(ranked: np.ndarray, test_positives, k: int) -> float:
    """Hits at 1-indexed position p contribute 1/log2(1+p); ideal puts positives first."""
    positives = set(int(i) for i in test_positives)
    if not positives:
        raise EvaluationError("ndcg is undefined without test positives")
    if k < 1:
        raise ValueError("k must be >= 1")
    dcg = 0.0
    for p, item in enumerate(ranked[:k], start=1):
        if int(item) in positives:
            dcg += 1.0 / np.log2(1.0 + p)
    ideal = sum(1.0 / np.log2(1.0 + p) for p in range(1, min(k, len(positives)) + 1))
    return dcg / ideal


def rank_users(
    model: EmbeddingModel,
    users: list[int],
    exclude_by_user: dict[int, np.ndarray],
    adjacency: sp.csr_matrix | None = None,
) -> dict[int, np.ndarray]:
    """Full-catalog rankings for many users, excluded items removed.

    Rankings are by cosine score descending with ties broken by item id
    ascending; identical math to scoring one user at a time, but the
    normalized item table is computed once.
    """
    u_eff, v_eff = effective_embeddings(model, adjacency)
    eps = model.norm_epsilon
    u_norm = u_eff / np.maximum(np.linalg.norm(u_eff, axis=1, keepdims=True), eps)
    v_norm = v_eff / np.maximum(np.linalg.norm(v_eff, axis=1, keepdims=True), eps)
    out: dict[int, np.ndarray] = {}
    for user in users:
        scores = np.clip(v_norm @ u_norm[user], -1.0, 1.0)
        order = np.argsort(-scores, kind="stable")
        excluded = exclude_by_user.get(user)
        if excluded is not None and len(excluded):
            keep = np.ones(len(scores), dtype=bool)
            keep[excluded] = False
            order = order[keep[order]]
        out[user] = order
    return out


def _mean_metrics(
    rankings: dict[int, np.ndarray], positives_of: dict[int, np.ndarray], k: int
) -> tuple[float, float, int]:
    """Macro-average over users in ascending id order (deterministic reduction)."""
    recall_sum = 0.0
    ndcg_sum = 0.0
    count = 0
    for user in sorted(rankings):
        pos = positives_of.get(user)
        if pos is None or len(pos) == 0:
            continue
        ranked = rankings[user]
        recall_sum += recall_at_k(ranked, pos, k)
        ndcg_sum += ndcg_at_k(ranked, pos, k)
        count += 1
    if count == 0:
        return 0.0, 0.0, 0
    return recall_sum / count, ndcg_sum / count, count


def _merge_exclusions(parts: list[InteractionDataset | None], users: list[int]) -> dict[int, np.ndarray]:
    out: dict[int, np.ndarray] = {}
    for user in users:
        chunks = [p.positives(user) for p in parts if p is not None]
        chunks = [c for c in chunks if len(c)]
        out[user] = np.unique(np.concatenate(chunks)) if chunks else np.empty(0, dtype=np.int64)
    return out


def evaluate(
    model: EmbeddingModel,
    splits: DatasetSplits,
    buckets: PopularityBuckets | None = None,
    k: int = 20,
    adjacency: sp.csr_matrix | None = None,
) -> list[MetricsReport]:
    """Rank the full catalog per test user and average Recall@k / NDCG@k.

    Candidates exclude each user's train positives and, when a validation
    split exists, its validation positives. Only users with at least one
    eligible test positive enter an average; bucket reports restrict test
    positives to the bucket's items first.
    """
    test = splits.test
    users = sorted(test.positives_by_user)
    if not users:
        raise EvaluationError("test split has no users with positives")

    exclusions = _merge_exclusions([splits.train, splits.validation], users)
    rankings = rank_users(model, users, exclusions, adjacency)

    reports: list[MetricsReport] = []
    recall, ndcg, count = _mean_metrics(rankings, test.positives_by_user, k)
    if count == 0:
        raise EvaluationError("bucket 'all' has no eligible users")
    reports.append(MetricsReport(recall, ndcg, k, count, "all", splits.split_kind))

    if buckets is not None:
        for name, members in (("head", buckets.head_items), ("tail", buckets.tail_items)):
            restricted = {
                u: np.array(
                    [i for i in test.positives_by_user[u] if int(i) in members], dtype=np.int64
                )
                for u in users
            }
            recall, ndcg, count = _mean_metrics(rankings, restricted, k)
            if count == 0:
                raise EvaluationError(f"bucket {name!r} has no eligible users")
            reports.append(MetricsReport(recall, ndcg, k, count, name, splits.split_kind))
    return reports


def validation_ndcg(
    model: EmbeddingModel,
    train: InteractionDataset,
    validation: InteractionDataset,
    k: int = 20,
    adjacency: sp.csr_matrix | None = None,
) -> float:
    """Mean NDCG@k on the validation split, excluding only train positives."""
    users = sorted(validation.positives_by_user)
    if not users:
        raise EvaluationError("validation split has no users with positives")
    exclusions = _merge_exclusions([train], users)
    rankings = rank_users(model, users, exclusions, adjacency)
    _, ndcg, count = _mean_metrics(rankings, validation.positives_by_user, k)
    if count == 0:
        raise EvaluationError("validation split has no eligible users")
    return ndcg


METRICS_CSV_FIELDS = ("run_id", "split", "bucket", "metric", "k", "value", "users_evaluated", "seed")


def write_metrics_csv(
    path: str | Path, reports: list[MetricsReport], run_id: str, seed: int
) -> None:
    """One row per (report, metric), with the stable column schema."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_CSV_FIELDS)
        for rep in reports:
            for metric, value in (("recall", rep.recall_at_k), ("ndcg", rep.ndcg_at_k)):
                writer.writerow(
                    [run_id, rep.split_kind, rep.bucket, metric, rep.k, repr(value), rep.users_evaluated, seed]
                )
