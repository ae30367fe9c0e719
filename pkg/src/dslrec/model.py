"""Embedding model: MF and graph-propagated backbones, cosine scoring, checkpoints."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .data import InteractionDataset

BACKBONES = ("mf", "graphconv")


@dataclass
class EmbeddingModel:
    """User/item embedding tables plus the backbone that resolves them.

    Tables are float64 and mutated in place by the optimizer; every scoring
    operation is read-only. For the graphconv backbone, effective embeddings
    are the mean over propagation layers of symmetric-normalized bipartite
    neighbor averaging; for mf they are the raw tables.
    """

    user_table: np.ndarray
    item_table: np.ndarray
    backbone: str = "mf"
    layers: int = 2
    norm_epsilon: float = 1e-12

    def __post_init__(self) -> None:
        if self.backbone not in BACKBONES:
            raise ValueError(f"unknown backbone {self.backbone!r}")
        if self.backbone == "graphconv" and self.layers < 1:
            raise ValueError("graphconv requires at least 1 layer")
        if self.user_table.ndim != 2 or self.item_table.ndim != 2:
            raise ValueError("embedding tables must be 2-D")
        if self.user_table.shape[1] != self.item_table.shape[1]:
            raise ValueError("user and item embedding dims differ")
        if self.user_table.shape[1] < 1:
            raise ValueError("embedding dim must be >= 1")
        if not (np.isfinite(self.user_table).all() and np.isfinite(self.item_table).all()):
            raise ValueError("embedding tables contain non-finite entries")

    @property
    def num_users(self) -> int:
        return self.user_table.shape[0]

    @property
    def num_items(self) -> int:
        return self.item_table.shape[0]

    @property
    def dim(self) -> int:
        return self.user_table.shape[1]

    def copy(self) -> "EmbeddingModel":
        return EmbeddingModel(
            user_table=self.user_table.copy(),
            item_table=self.item_table.copy(),
            backbone=self.backbone,
            layers=self.layers,
            norm_epsilon=self.norm_epsilon,
        )


@dataclass(frozen=True)
class ScoreMatrix:
    """Cosine preference scores; column 0 is the positive, columns 1..N negatives."""

    values: np.ndarray  # (B, 1 + N), in [-1, 1]


@dataclass(frozen=True)
class SimilarityMatrix:
    """Item-item cosine between each row's positive and its negatives."""

    raw: np.ndarray      # (B, N), in [-1, 1]
    shifted: np.ndarray  # (B, N) = (raw + 1) / 2, in [0, 1]


def init_embeddings(
    num_users: int,
    num_items: int,
    dim: int,
    seed,
    backbone: str = "mf",
    layers: int = 2,
) -> EmbeddingModel:
    """Draw both tables i.i.d. Normal(0, 0.1/sqrt(dim)), deterministic under seed."""
    if min(num_users, num_items, dim) < 1:
        raise ValueError("num_users, num_items and dim must all be >= 1")
    rng = np.random.default_rng(seed)
    std = 0.1 / np.sqrt(dim)
    return EmbeddingModel(
        user_table=rng.normal(0.0, std, size=(num_users, dim)),
        item_table=rng.normal(0.0, std, size=(num_items, dim)),
        backbone=backbone,
        layers=layers,
    )


def build_adjacency(train: InteractionDataset) -> sp.csr_matrix:
    """Symmetric-normalized user-item adjacency D_u^{-1/2} A D_i^{-1/2} (train only)."""
    inter = train.interactions
    ones = np.ones(len(inter))
    a = sp.coo_matrix(
        (ones, (inter[:, 0], inter[:, 1])), shape=(train.num_users, train.num_items)
    ).tocsr()
    du = np.asarray(a.sum(axis=1)).ravel()
    di = np.asarray(a.sum(axis=0)).ravel()
    with np.errstate(divide="ignore"):
        du_inv = np.where(du > 0, 1.0 / np.sqrt(du), 0.0)
        di_inv = np.where(di > 0, 1.0 / np.sqrt(di), 0.0)
    return sp.diags(du_inv) @ a @ sp.diags(di_inv)


def propagate(
    adjacency: sp.csr_matrix,
    user_table: np.ndarray,
    item_table: np.ndarray,
    layers: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Mean over layers 0..L of repeated normalized neighbor averaging.

    The stacked propagation operator is symmetric, so this same routine also
    backpropagates gradients through the graphconv chain. Isolated nodes
    receive zero propagated mass and come out as table / (layers + 1).
    """
    u_acc = user_table.copy()
    v_acc = item_table.copy()
    u_cur, v_cur = user_table, item_table
    for _ in range(layers):
        u_cur, v_cur = adjacency @ v_cur, adjacency.T @ u_cur
        u_acc += u_cur
        v_acc += v_cur
    scale = 1.0 / (layers + 1)
    return u_acc * scale, v_acc * scale


def effective_embeddings(
    model: EmbeddingModel, adjacency: sp.csr_matrix | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Resolve backbone-specific embeddings used for all scoring."""
    if model.backbone == "mf":
        return model.user_table, model.item_table
    if adjacency is None:
        raise ValueError("graphconv backbone requires the train adjacency")
    return propagate(adjacency, model.user_table, model.item_table, model.layers)


def _guarded_norms(x: np.ndarray, eps: float) -> np.ndarray:
    if x.ndim == 2:
        sq = np.einsum("bd,bd->b", x, x)
    else:
        sq = np.einsum("bkd,bkd->bk", x, x)
    return np.maximum(np.sqrt(sq), eps)


def cosine_scores(
    user_vecs: np.ndarray, item_vecs: np.ndarray, eps: float = 1e-12
) -> np.ndarray:
    """Cosine of (B, d) user rows against (B, K, d) item blocks -> (B, K).

    Denominators are guarded at eps and results clamped to [-1, 1] against
    rounding overshoot.
    """
    nu = _guarded_norms(user_vecs, eps)
    ni = _guarded_norms(item_vecs, eps)
    dots = np.einsum("bd,bkd->bk", user_vecs, item_vecs)
    return np.clip(dots / (nu[:, None] * ni), -1.0, 1.0)


def score(
    model: EmbeddingModel,
    users: np.ndarray,
    items: np.ndarray,
    adjacency: sp.csr_matrix | None = None,
) -> ScoreMatrix:
    """Score a (B,) user list against a (B, 1+N) item id matrix (column 0 = positive)."""
    u_eff, v_eff = effective_embeddings(model, adjacency)
    return ScoreMatrix(values=cosine_scores(u_eff[users], v_eff[items], model.norm_epsilon))


def item_similarity(
    model: EmbeddingModel,
    pos_items: np.ndarray,
    neg_items: np.ndarray,
    adjacency: sp.csr_matrix | None = None,
) -> SimilarityMatrix:
    """Item-item cosine between (B,) positives and (B, N) negatives, plus its [0,1] shift."""
    _, v_eff = effective_embeddings(model, adjacency)
    raw = cosine_scores(v_eff[pos_items], v_eff[neg_items], model.norm_epsilon)
    return SimilarityMatrix(raw=raw, shifted=(raw + 1.0) / 2.0)


def score_all_items(
    model: EmbeddingModel,
    user: int,
    exclude: set[int] | frozenset[int],
    adjacency: sp.csr_matrix | None = None,
) -> np.ndarray:
    """Full-catalog ranking for one user, excluded items removed.

    Descending cosine score with ties broken by item id ascending (stable
    sort over the natural id order).
    """
    u_eff, v_eff = effective_embeddings(model, adjacency)
    scores = cosine_scores(u_eff[user][None, :], v_eff[None, :, :], model.norm_epsilon)[0]
    order = np.argsort(-scores, kind="stable")
    if exclude:
        keep = np.ones(model.num_items, dtype=bool)
        keep[list(exclude)] = False
        order = order[keep[order]]
    return order


def cosine_backward(
    user_vecs: np.ndarray,
    item_vecs: np.ndarray,
    grad_scores: np.ndarray,
    eps: float = 1e-12,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of cosine scores w.r.t. the (B, d) user and (B, K, d) item vectors.

    When a norm is pinned at the eps guard, the corresponding norm term is a
    constant and its gradient contribution vanishes. The [-1, 1] clamp only
    absorbs rounding overshoot and is treated as the identity.
    """
    nu_raw = np.linalg.norm(user_vecs, axis=-1)
    ni_raw = np.linalg.norm(item_vecs, axis=-1)
    nu = np.maximum(nu_raw, eps)
    ni = np.maximum(ni_raw, eps)
    dots = np.einsum("bd,bkd->bk", user_vecs, item_vecs)
    cos = dots / (nu[:, None] * ni)

    inv = grad_scores / (nu[:, None] * ni)  # (B, K)
    grad_user = np.einsum("bk,bkd->bd", inv, item_vecs)
    user_norm_term = (grad_scores * cos).sum(axis=1) / nu**2
    grad_user -= np.where(nu_raw > eps, user_norm_term, 0.0)[:, None] * user_vecs

    grad_item = inv[:, :, None] * user_vecs[:, None, :]
    item_norm_term = grad_scores * cos / ni**2
    grad_item -= np.where(ni_raw > eps, item_norm_term, 0.0)[:, :, None] * item_vecs
    return grad_user, grad_item


def score_backward(
    users: np.ndarray,
    items: np.ndarray,
    grad_scores: np.ndarray,
    u_eff: np.ndarray,
    v_eff: np.ndarray,
    eps: float = 1e-12,
) -> tuple[np.ndarray, np.ndarray]:
    """Scatter score gradients back onto full effective embedding tables.

    Algebraically identical to cosine_backward plus index accumulation, but
    organized per item so the item-side reduction runs as one sparse matmul
    instead of materializing a (B, K, d) gradient block.
    """
    batch, k_cols = grad_scores.shape
    user_vecs = u_eff[users]
    item_vecs = v_eff[items]
    nu_raw = np.sqrt(np.einsum("bd,bd->b", user_vecs, user_vecs))
    ni_raw = np.sqrt(np.einsum("bkd,bkd->bk", item_vecs, item_vecs))
    nu = np.maximum(nu_raw, eps)
    ni = np.maximum(ni_raw, eps)
    dots = np.einsum("bd,bkd->bk", user_vecs, item_vecs)
    cos = dots / (nu[:, None] * ni)

    inv = grad_scores / (nu[:, None] * ni)  # (B, K)
    # User side: grad_u[b] = sum_k inv * v_bk - (sum_k g * cos / nu^2) * u_b.
    grad_user_vecs = np.einsum("bk,bkd->bd", inv, item_vecs)
    user_norm_term = (grad_scores * cos).sum(axis=1) / nu**2
    grad_user_vecs -= np.where(nu_raw > eps, user_norm_term, 0.0)[:, None] * user_vecs
    grad_u = np.zeros_like(u_eff)
    np.add.at(grad_u, users, grad_user_vecs)

    # Item side, accumulated per item id: sum_b inv * u_b - v_i * sum_b g * cos / ni^2.
    flat_items = items.ravel()
    rows = np.repeat(np.arange(batch), k_cols)
    scatter = sp.csr_matrix(
        (inv.ravel(), (flat_items, rows)), shape=(v_eff.shape[0], batch)
    )
    grad_v = scatter @ user_vecs
    norm_term = np.where(ni_raw > eps, grad_scores * cos / ni**2, 0.0)
    norm_per_item = np.bincount(flat_items, weights=norm_term.ravel(), minlength=v_eff.shape[0])
    grad_v -= norm_per_item[:, None] * v_eff
    return grad_u, grad_v


def backbone_backward(
    model: EmbeddingModel,
    grad_u_eff: np.ndarray,
    grad_v_eff: np.ndarray,
    adjacency: sp.csr_matrix | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Pull effective-embedding gradients back to the raw tables."""
    if model.backbone == "mf":
        return grad_u_eff, grad_v_eff
    if adjacency is None:
        raise ValueError("graphconv backbone requires the train adjacency")
    return propagate(adjacency, grad_u_eff, grad_v_eff, model.layers)


_CHECKPOINT_MAGIC = "dslrec-checkpoint v1"


def save_checkpoint(model: EmbeddingModel, path: str | Path, seed: int = 0) -> None:
    """Dump both tables as little-endian float64 after a single text header line.

    Round-trip load is bit-exact; the written bytes depend only on the model
    state and seed tag.
    """
    header = (
        f"{_CHECKPOINT_MAGIC} num_users={model.num_users} num_items={model.num_items} "
        f"d={model.dim} backbone={model.backbone} layers={model.layers} "
        f"norm_epsilon={model.norm_epsilon!r} seed={seed}\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(model.user_table, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.item_table, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[EmbeddingModel, int]:
    """Load a checkpoint written by save_checkpoint; returns (model, seed)."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").strip()
        payload = fh.read()
    parts = header.split()
    if " ".join(parts[:2]) != _CHECKPOINT_MAGIC:
        raise ValueError(f"not a dslrec checkpoint: {path}")
    fields = dict(p.split("=", 1) for p in parts[2:])
    num_users = int(fields["num_users"])
    num_items = int(fields["num_items"])
    dim = int(fields["d"])
    expected = (num_users + num_items) * dim * 8
    if len(payload) != expected:
        raise ValueError(f"checkpoint payload is {len(payload)} bytes, expected {expected}")
    flat = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    model = EmbeddingModel(
        user_table=flat[: num_users * dim].reshape(num_users, dim).copy(),
        item_table=flat[num_users * dim:].reshape(num_items, dim).copy(),
        backbone=fields["backbone"],
        layers=int(fields["layers"]),
        norm_epsilon=float(fields["norm_epsilon"]),
    )
    return model, int(fields["seed"])
