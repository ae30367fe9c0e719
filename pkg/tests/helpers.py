"""Independent oracles shared by the test suite.

Everything here deliberately avoids the library's vectorized code paths:
extended-precision arithmetic via mpmath, plain-python loops, and central
finite differences. Oracles are the reference side of every dual-route
check and must stay that way.
"""

from __future__ import annotations

import math

import mpmath
import numpy as np

mpmath.mp.dps = 50


def mp_logsumexp(values) -> float:
    """Extended-precision log(sum(exp(v))) collapsed back to float64."""
    total = mpmath.mpf(0)
    for v in values:
        total += mpmath.exp(mpmath.mpf(float(v)))
    return float(mpmath.log(total))


def mp_cosine(u, v) -> float:
    """Extended-precision cosine of two float vectors."""
    u = [mpmath.mpf(float(x)) for x in u]
    v = [mpmath.mpf(float(x)) for x in v]
    dot = mpmath.fsum(a * b for a, b in zip(u, v))
    nu = mpmath.sqrt(mpmath.fsum(a * a for a in u))
    nv = mpmath.sqrt(mpmath.fsum(b * b for b in v))
    return float(dot / (nu * nv))


def finite_difference_gradient(fn, arrays: list[np.ndarray], step: float = 1e-5) -> list[np.ndarray]:
    """Central differences of scalar fn() w.r.t. every entry of the given arrays.

    fn must read the arrays by reference; entries are perturbed in place and
    restored.
    """
    grads = []
    for array in arrays:
        grad = np.zeros_like(array)
        flat = array.ravel()
        gflat = grad.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = fn()
            flat[i] = orig - step
            f_minus = fn()
            flat[i] = orig
            gflat[i] = (f_plus - f_minus) / (2.0 * step)
        grads.append(grad)
    return grads


def max_relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> float:
    """max |a-b| / max(|a|, |b|, floor); the floor handles near-zero entries."""
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float((np.abs(a - b) / denom).max())


def scalar_dual_scale_reference(
    scores: np.ndarray,
    shifted_sims: np.ndarray,
    neg_item_ids: np.ndarray,
    tau: float,
    beta: float,
    alpha: float,
    slate_size: int,
    kappa_floor: float,
    kappa_enabled: bool,
    ca_enabled: bool,
) -> dict:
    """Step-by-step scalar recomputation of the dual-scale loss and gradients.

    Works one number at a time in extended precision: competition weights
    with the floor repair, slate selection, intensity, batch-normalized
    multipliers, the weighted log-sum-exp, and the score gradients. Returns
    plain-float structures for comparison.
    """
    B = len(scores)
    N = scores.shape[1] - 1
    mpf = mpmath.mpf

    # Competition weights per row.
    kappa_rows: list[list] = []
    inv_means: list = []
    if kappa_enabled:
        for b in range(B):
            logits = [mpf(float(scores[b, 1 + j])) + mpf(float(shifted_sims[b, j])) for j in range(N)]
            exps = [mpmath.exp(l) for l in logits]
            mean = mpmath.fsum(exps) / N
            kap = [e / mean for e in exps]
            kap = [1 + mpf(float(beta)) * (k - 1) for k in kap]
            floor = mpf(float(kappa_floor))
            for _ in range(100):
                if all(k >= floor for k in kap):
                    break
                kap = [k if k >= floor else floor for k in kap]
                m = mpmath.fsum(kap) / N
                kap = [k / m for k in kap]
            else:
                kap = [k if k >= floor else floor for k in kap]
            inv_means.append(mpmath.fsum(1 / k for k in kap) / N)
            kappa_rows.append(kap)
    else:
        kappa_rows = [[mpf(1)] * N for _ in range(B)]
        inv_means = [mpf(1)] * B
    applied = [[k * inv_means[b] for k in kappa_rows[b]] for b in range(B)]

    # Competition-aware temperatures.
    taus: list = []
    intensities: list = []
    multipliers: list = []
    if ca_enabled:
        k_slate = min(slate_size, N)
        tilts = []
        for b in range(B):
            ranked = sorted(range(N), key=lambda j: (-float(scores[b, 1 + j]), int(neg_item_ids[b, j])))
            slate = ranked[:k_slate]
            logits = [mpf(float(scores[b, 1 + j])) / mpf(float(tau)) for j in slate]
            sims = [mpf(float(shifted_sims[b, j])) for j in slate]
            lse_num = mpmath.log(mpmath.fsum(mpmath.exp(l + s) for l, s in zip(logits, sims)))
            lse_den = mpmath.log(mpmath.fsum(mpmath.exp(l) for l in logits))
            c = lse_num - lse_den
            c = min(max(c, mpf(0)), mpf(1))
            intensities.append(c)
            tilts.append(mpmath.exp(mpf(float(alpha)) * c))
        tilt_mean = mpmath.fsum(tilts) / B
        for b in range(B):
            m = tilts[b] / tilt_mean
            multipliers.append(m)
            taus.append(mpf(float(tau)) / m)
    else:
        intensities = [mpf(0)] * B
        multipliers = [mpf(1)] * B
        taus = [mpf(float(tau))] * B

    # Weighted log-sum-exp and gradients.
    per_example = []
    grad = np.zeros_like(scores)
    for b in range(B):
        z = [
            applied[b][j] * (mpf(float(scores[b, 1 + j])) - mpf(float(scores[b, 0]))) / taus[b]
            for j in range(N)
        ]
        total = mpmath.fsum(mpmath.exp(v) for v in z)
        per_example.append(float(mpmath.log(total)))
        for j in range(N):
            q = mpmath.exp(z[j]) / total
            grad[b, 1 + j] = float(q * applied[b][j] / taus[b])
        grad[b, 0] = -float(mpmath.fsum(mpf(float(grad[b, 1 + j])) for j in range(N)))

    return {
        "per_example": np.array(per_example),
        "total": float(math.fsum(per_example)),
        "grad": grad,
        "kappa": np.array([[float(k) for k in row] for row in kappa_rows]),
        "inv_mean": np.array([float(v) for v in inv_means]),
        "kappa_applied": np.array([[float(k) for k in row] for row in applied]),
        "intensity": np.array([float(c) for c in intensities]),
        "multiplier": np.array([float(m) for m in multipliers]),
        "tau_per_example": np.array([float(t) for t in taus]),
    }


def brute_force_ranking(scores: np.ndarray, excluded: set[int]) -> list[int]:
    """Reference full ranking: score descending, item id ascending, exclusions removed."""
    items = [i for i in range(len(scores)) if i not in excluded]
    return sorted(items, key=lambda i: (-float(scores[i]), i))


def brute_force_recall(ranked: list[int], positives: set[int], k: int) -> float:
    return len(set(ranked[:k]) & positives) / len(positives)


def brute_force_ndcg(ranked: list[int], positives: set[int], k: int) -> float:
    dcg = 0.0
    for pos, item in enumerate(ranked[:k], start=1):
        if item in positives:
            dcg += 1.0 / math.log2(1.0 + pos)
    ideal = sum(1.0 / math.log2(1.0 + p) for p in range(1, min(k, len(positives)) + 1))
    return dcg / ideal


def dense_propagation_oracle(
    adjacency_dense: np.ndarray, user_table: np.ndarray, item_table: np.ndarray, layers: int
) -> tuple[np.ndarray, np.ndarray]:
    """Mean of stacked operator powers computed with dense linear algebra."""
    n_u = user_table.shape[0]
    stacked = np.vstack([user_table, item_table])
    n = stacked.shape[0]
    op = np.zeros((n, n))
    op[:n_u, n_u:] = adjacency_dense
    op[n_u:, :n_u] = adjacency_dense.T
    acc = stacked.copy()
    power = stacked.copy()
    for _ in range(layers):
        power = op @ power
        acc += power
    acc /= layers + 1
    return acc[:n_u], acc[n_u:]
