"""Sampled-softmax losses: plain SL, BPR, and the dual-scale variants.

The dual-scale loss augments the log-sum-exp backbone in two ways that are
both treated as gradient-blocked constants:

* per-negative competition weights kappa, built from hardness (the negative's
  score) plus shifted item-item similarity, exponentially normalized to mean
  one per row and strengthened via kappa <- 1 + beta * (kappa - 1);
* a per-example temperature tau_i = tau / m_i, where m_i exponentially tilts
  a bounded competition-intensity statistic measured on a top-K slate of the
  hardest negatives and is mean-normalized across the batch.

Before entering the exponent, kappa is rescaled per row by the mean inverse
weight so that E_j[1/kappa] = 1, which keeps the effective temperature

    tau_ij = tau_i / kappa_ij

from drifting on average. All log-sum-exp evaluations subtract the row max
first; temperatures down to 0.005 are in the supported range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ScoreMatrix, SimilarityMatrix

_FLOOR_REPAIR_ROUNDS = 100


@dataclass(frozen=True)
class DSLConfig:
    """Hyperparameters that fully determine the dual-scale loss surface."""

    tau: float = 0.2
    beta: float = 1.0
    alpha: float = 1.0
    slate_size: int = 20
    kappa_enabled: bool = True
    ca_enabled: bool = True
    kappa_floor: float = 1e-3

    def __post_init__(self) -> None:
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.beta < 0 or self.alpha < 0:
            raise ValueError("beta and alpha must be nonnegative")
        if self.slate_size < 1:
            raise ValueError("slate_size must be >= 1")
        if not 0.0 < self.kappa_floor < 1.0:
            raise ValueError("kappa_floor must lie in (0, 1)")


@dataclass(frozen=True)
class KappaWeights:
    """Per-negative competition weights at the mean-one stage."""

    values: np.ndarray    # (B, N), mean one per row, all >= kappa_floor
    inv_mean: np.ndarray  # (B,), E_j[1 / values] before the drift rescale

    @property
    def rescaled(self) -> np.ndarray:
        """Drift-controlled weights: per row kappa * E_j[1/kappa], so E_j[1/kappa] = 1."""
        return self.values * self.inv_mean[:, None]


@dataclass(frozen=True)
class CAState:
    """Competition-aware temperature diagnostics for one batch."""

    slate: np.ndarray           # (B, K) column indices into the negatives
    slate_probs: np.ndarray     # (B, K) hardness distribution, rows sum to 1
    intensity: np.ndarray       # (B,) log-partition gap, in [0, 1]
    multiplier: np.ndarray      # (B,) batch mean 1
    per_example_tau: np.ndarray  # (B,) = tau / multiplier


@dataclass(frozen=True)
class LossDiagnostics:
    """Quantities the loss actually placed in the exponent, for audit."""

    kappa: KappaWeights | None
    ca: CAState | None
    q: np.ndarray               # (B, N) softmax over the scaled margins
    kappa_applied: np.ndarray   # (B, N) weights inside the exponent (drift-rescaled)
    tau_applied: np.ndarray     # (B,) per-example temperatures inside the exponent


@dataclass(frozen=True)
class LossOutput:
    total: float
    per_example: np.ndarray         # (B,)
    grad_wrt_scores: np.ndarray     # (B, 1 + N); column 0 = -sum(columns 1..N)
    diagnostics: LossDiagnostics | None = None


def _weighted_lse(
    scores: np.ndarray, kappa: np.ndarray, tau_per_example: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Loss kernel: per-example log sum_j exp(kappa_ij * (s_j - s_pos) / tau_i).

    Returns (per_example, q, grad_wrt_scores). The gradient treats kappa and
    tau_i as constants: d/ds_j = q_ij * kappa_ij / tau_i for negatives, and
    the positive column is the negated row sum.
    """
    margins = scores[:, 1:] - scores[:, :1]
    z = kappa * margins / tau_per_example[:, None]
    z_max = z.max(axis=1, keepdims=True)
    ez = np.exp(z - z_max)
    sez = ez.sum(axis=1, keepdims=True)
    per_example = (z_max + np.log(sez))[:, 0]
    q = ez / sez
    grad = np.empty_like(scores)
    grad[:, 1:] = q * kappa / tau_per_example[:, None]
    grad[:, 0] = -grad[:, 1:].sum(axis=1)
    return per_example, q, grad


def softmax_loss(scores: ScoreMatrix, tau: float) -> LossOutput:
    """Sampled softmax loss: sum over examples of log sum_j exp((s_j - s_pos) / tau)."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    values = scores.values
    batch, cols = values.shape
    kappa = np.ones((batch, cols - 1))
    taus = np.full(batch, float(tau))
    per_example, q, grad = _weighted_lse(values, kappa, taus)
    diag = LossDiagnostics(kappa=None, ca=None, q=q, kappa_applied=kappa, tau_applied=taus)
    return LossOutput(float(per_example.sum()), per_example, grad, diag)


def bpr_loss(scores: ScoreMatrix) -> LossOutput:
    """Pairwise ranking loss: mean over (row, negative) of -log sigmoid(s_pos - s_j)."""
    values = scores.values
    batch, cols = values.shape
    n_neg = cols - 1
    x = values[:, :1] - values[:, 1:]
    pair_losses = np.logaddexp(0.0, -x)  # -log sigmoid(x), stable
    scale = 1.0 / (batch * n_neg)
    per_example = pair_losses.sum(axis=1) * scale
    grad = np.empty_like(values)
    with np.errstate(over="ignore"):
        grad[:, 1:] = scale / (1.0 + np.exp(x))  # sigmoid(-x) * scale
    grad[:, 0] = -grad[:, 1:].sum(axis=1)
    return LossOutput(float(per_example.sum()), per_example, grad, diagnostics=None)


def compute_kappa(
    scores: ScoreMatrix, sims: SimilarityMatrix, beta: float, kappa_floor: float = 1e-3
) -> KappaWeights:
    """Competition weights from hardness plus shifted similarity.

    Per row: logits l_j = s_j + sbar_j are exponentially normalized to mean
    one, then pulled toward/away from 1 by kappa <- 1 + beta * (kappa - 1),
    which preserves the row mean. Strengths beta > 1 can push small weights
    negative; those rows are repaired by clamping at kappa_floor and
    renormalizing to mean one until both properties hold. The result is a
    constant with respect to the score gradient.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    logits = scores.values[:, 1:] + sims.shifted
    ez = np.exp(logits - logits.max(axis=1, keepdims=True))
    kappa = ez / ez.mean(axis=1, keepdims=True)
    kappa = 1.0 + beta * (kappa - 1.0)
    # Row-independent repair: only rows that dip below the floor are touched.
    for _ in range(_FLOOR_REPAIR_ROUNDS):
        low = (kappa < kappa_floor).any(axis=1)
        if not low.any():
            break
        sub = np.maximum(kappa[low], kappa_floor)
        kappa[low] = sub / sub.mean(axis=1, keepdims=True)
    else:
        kappa = np.maximum(kappa, kappa_floor)
    inv_mean = (1.0 / kappa).mean(axis=1)
    return KappaWeights(values=kappa, inv_mean=inv_mean)


def _top_k_columns(values: np.ndarray, k: int, ids: np.ndarray | None) -> np.ndarray:
    """Column indices of the k largest entries per row, ties by id ascending."""
    if ids is None:
        ids = np.broadcast_to(np.arange(values.shape[1]), values.shape)
    by_id = np.argsort(ids, axis=1, kind="stable")
    reordered = np.take_along_axis(values, by_id, axis=1)
    by_score = np.argsort(-reordered, axis=1, kind="stable")[:, :k]
    return np.take_along_axis(by_id, by_score, axis=1)


def _logsumexp_rows(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(x - m).sum(axis=1, keepdims=True)))[:, 0]


def compute_ca(
    scores: ScoreMatrix,
    sims: SimilarityMatrix,
    tau: float,
    alpha: float,
    slate_size: int,
    neg_item_ids: np.ndarray | None = None,
) -> CAState:
    """Competition-aware per-example temperatures from a top-K competitor slate.

    The slate holds the K highest-scoring negatives (ties by item id
    ascending; K capped at N). Slate scores at the global tau induce a
    hardness distribution p; the intensity c = lse(s/tau + sbar) - lse(s/tau)
    equals log E_p[exp(sbar)] and lies in [0, 1]. Temperatures follow from
    m = exp(alpha * c) normalized to batch mean one, tau_i = tau / m_i. Like
    kappa, everything here is a constant to the score gradient.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if tau <= 0:
        raise ValueError("tau must be positive")
    neg_scores = scores.values[:, 1:]
    k = min(slate_size, neg_scores.shape[1])
    slate = _top_k_columns(neg_scores, k, neg_item_ids)
    slate_scores = np.take_along_axis(neg_scores, slate, axis=1)
    slate_sims = np.take_along_axis(sims.shifted, slate, axis=1)

    logits = slate_scores / tau
    intensity = np.clip(
        _logsumexp_rows(logits + slate_sims) - _logsumexp_rows(logits), 0.0, 1.0
    )
    ez = np.exp(logits - logits.max(axis=1, keepdims=True))
    slate_probs = ez / ez.sum(axis=1, keepdims=True)

    tilt = alpha * intensity
    w = np.exp(tilt - tilt.max())
    multiplier = w / w.mean()
    return CAState(
        slate=slate,
        slate_probs=slate_probs,
        intensity=intensity,
        multiplier=multiplier,
        per_example_tau=tau / multiplier,
    )


def dsl_loss(
    scores: ScoreMatrix,
    sims: SimilarityMatrix | None,
    config: DSLConfig,
    neg_item_ids: np.ndarray | None = None,
    kappa: KappaWeights | None = None,
    ca: CAState | None = None,
) -> LossOutput:
    """Dual-scale softmax loss with drift-controlled competition weights.

    Disabled branches degrade to kappa = 1 / m = 1, reproducing softmax_loss
    exactly. Precomputed `kappa`/`ca` may be injected to evaluate the loss
    with the weighting held fixed (they are gradient-blocked constants, so
    finite-difference checks must freeze them the same way).
    """
    values = scores.values
    batch, cols = values.shape
    n_neg = cols - 1

    if config.kappa_enabled:
        if kappa is None:
            if sims is None:
                raise ValueError("kappa branch needs item similarities")
            kappa = compute_kappa(scores, sims, config.beta, config.kappa_floor)
        kappa_applied = kappa.rescaled
    else:
        kappa = None
        kappa_applied = np.ones((batch, n_neg))

    if config.ca_enabled:
        if ca is None:
            if sims is None:
                raise ValueError("competition-aware branch needs item similarities")
            ca = compute_ca(scores, sims, config.tau, config.alpha, config.slate_size, neg_item_ids)
        tau_applied = ca.per_example_tau
    else:
        ca = None
        tau_applied = np.full(batch, float(config.tau))

    per_example, q, grad = _weighted_lse(values, kappa_applied, tau_applied)
    diag = LossDiagnostics(
        kappa=kappa, ca=ca, q=q, kappa_applied=kappa_applied, tau_applied=tau_applied
    )
    return LossOutput(float(per_example.sum()), per_example, grad, diag)


def pairwise_weights(loss_out: LossOutput, config: DSLConfig) -> np.ndarray:
    """Implicit per-pair update weights lambda_ij = q_ij * kappa_ij / tau_i.

    These coincide exactly with the negative-score gradient columns of the
    producing loss.
    """
    diag = loss_out.diagnostics
    if diag is None:
        raise ValueError("loss output carries no diagnostics (was this bpr?)")
    return diag.q * diag.kappa_applied / diag.tau_applied[:, None]


LOSS_NAMES = ("bpr", "sl", "dsl", "dsl-kappa-only", "dsl-ca-only")


def branch_toggles(loss_name: str) -> tuple[bool, bool]:
    """(kappa_enabled, ca_enabled) for a named loss variant."""
    table = {
        "sl": (False, False),
        "dsl": (True, True),
        "dsl-kappa-only": (True, False),
        "dsl-ca-only": (False, True),
    }
    if loss_name not in table:
        raise ValueError(f"no branch toggles for loss {loss_name!r}")
    return table[loss_name]
