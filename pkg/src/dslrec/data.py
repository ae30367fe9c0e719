"""Interaction data: loading, splitting, negative sampling, popularity buckets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Raised for malformed interaction files or invalid split inputs."""


class SamplingError(ValueError):
    """Raised when a user has too few eligible negatives."""


def _group_positives(interactions: np.ndarray) -> dict[int, np.ndarray]:
    """Group an (n, 2) interaction array into {user: sorted item array}."""
    out: dict[int, np.ndarray] = {}
    if len(interactions) == 0:
        return out
    order = np.lexsort((interactions[:, 1], interactions[:, 0]))
    pairs = interactions[order]
    users, starts = np.unique(pairs[:, 0], return_index=True)
    bounds = list(starts) + [len(pairs)]
    for k, u in enumerate(users):
        out[int(u)] = pairs[bounds[k]:bounds[k + 1], 1].copy()
    return out


@dataclass(frozen=True)
class InteractionDataset:
    """Deduplicated user-item interactions over dense id spaces.

    `interactions` is an (n, 2) int64 array of (user, item) pairs, each pair
    appearing at most once. `positives_by_user` groups the same pairs per
    user with item ids sorted ascending. Instances are immutable and safe to
    share across threads.
    """

    num_users: int
    num_items: int
    interactions: np.ndarray
    positives_by_user: dict[int, np.ndarray] = field(repr=False)
    user_labels: tuple[str, ...] | None = field(default=None, repr=False)
    item_labels: tuple[str, ...] | None = field(default=None, repr=False)

    @classmethod
    def from_pairs(
        cls,
        pairs: np.ndarray,
        num_users: int,
        num_items: int,
        user_labels: tuple[str, ...] | None = None,
        item_labels: tuple[str, ...] | None = None,
    ) -> "InteractionDataset":
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        return cls(
            num_users=num_users,
            num_items=num_items,
            interactions=pairs,
            positives_by_user=_group_positives(pairs),
            user_labels=user_labels,
            item_labels=item_labels,
        )

    def __len__(self) -> int:
        return len(self.interactions)

    def positives(self, user: int) -> np.ndarray:
        """Sorted item ids the user interacted with (empty array if none)."""
        return self.positives_by_user.get(int(user), np.empty(0, dtype=np.int64))

    @cached_property
    def positives_mask(self) -> np.ndarray:
        """Dense (num_users, num_items) membership mask; cached, read-only."""
        mask = np.zeros((self.num_users, self.num_items), dtype=bool)
        if len(self.interactions):
            mask[self.interactions[:, 0], self.interactions[:, 1]] = True
        mask.setflags(write=False)
        return mask

    def item_counts(self) -> np.ndarray:
        """Per-item interaction counts, length num_items."""
        if len(self.interactions) == 0:
            return np.zeros(self.num_items, dtype=np.int64)
        return np.bincount(self.interactions[:, 1], minlength=self.num_items)

    def validate(self) -> None:
        """Assert the structural invariants; used by tests."""
        inter = self.interactions
        if len(inter) != len({(int(u), int(i)) for u, i in inter}):
            raise DataError("duplicate interaction pairs")
        if len(inter) and (inter[:, 0].min() < 0 or inter[:, 0].max() >= self.num_users):
            raise DataError("user id out of range")
        if len(inter) and (inter[:, 1].min() < 0 or inter[:, 1].max() >= self.num_items):
            raise DataError("item id out of range")
        regrouped = _group_positives(inter)
        if set(regrouped) != set(self.positives_by_user):
            raise DataError("positives_by_user does not match interactions")
        for u, items in regrouped.items():
            if not np.array_equal(items, self.positives_by_user[u]):
                raise DataError(f"positives mismatch for user {u}")


@dataclass(frozen=True)
class DatasetSplits:
    """Disjoint train/validation/test views over one id space."""

    train: InteractionDataset
    validation: InteractionDataset | None
    test: InteractionDataset
    split_kind: str  # "iid" | "ood"


@dataclass(frozen=True)
class TrainingBatch:
    """B positive pairs with an aligned B x N matrix of sampled negatives."""

    positives: np.ndarray  # (B, 2) int64
    negatives: np.ndarray  # (B, N) int64

    @property
    def users(self) -> np.ndarray:
        return self.positives[:, 0]

    @property
    def pos_items(self) -> np.ndarray:
        return self.positives[:, 1]


@dataclass(frozen=True)
class PopularityBuckets:
    """Head/tail item buckets by training interaction count."""

    head_items: frozenset[int]
    tail_items: frozenset[int]
    counts: np.ndarray  # per-item training interaction counts


def _detect_delimiter(line: str) -> str:
    return "\t" if "\t" in line else ","


def _is_numeric(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def load_interactions(path: str | Path, delimiter: str = "auto") -> InteractionDataset:
    """Load a user/item interaction log from a delimited text file.

    One interaction per line, first two columns = user token, item token;
    extra columns are ignored. A header line is auto-detected by a
    non-numeric second column. Tokens may be arbitrary strings; they are
    remapped to dense ids in order of first appearance, and duplicate pairs
    are dropped. Original tokens are retained as labels for reporting.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"interaction file not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    rows = [(n, ln) for n, ln in enumerate(lines, start=1) if ln.strip()]
    if not rows:
        raise DataError(f"interaction file is empty: {path}")

    sep = delimiter if delimiter != "auto" else _detect_delimiter(rows[0][1])
    # Header heuristic: a non-numeric second column on the first line counts
    # as a header only when the data lines underneath carry numeric ids;
    # fully string-valued id files have no detectable header.
    first_fields = [f.strip() for f in rows[0][1].split(sep)]
    if len(first_fields) >= 2 and not _is_numeric(first_fields[1]) and len(rows) > 1:
        second_fields = [f.strip() for f in rows[1][1].split(sep)]
        if len(second_fields) >= 2 and _is_numeric(second_fields[1]):
            rows = rows[1:]

    user_ids: dict[str, int] = {}
    item_ids: dict[str, int] = {}
    seen: set[tuple[int, int]] = set()
    pairs: list[tuple[int, int]] = []
    for lineno, line in rows:
        fields = [f.strip() for f in line.split(sep)]
        if len(fields) < 2 or not fields[0] or not fields[1]:
            raise DataError(f"line {lineno}: expected at least two columns, got {line!r}")
        u = user_ids.setdefault(fields[0], len(user_ids))
        i = item_ids.setdefault(fields[1], len(item_ids))
        if (u, i) not in seen:
            seen.add((u, i))
            pairs.append((u, i))

    return InteractionDataset.from_pairs(
        np.array(pairs, dtype=np.int64),
        num_users=len(user_ids),
        num_items=len(item_ids),
        user_labels=tuple(user_ids),
        item_labels=tuple(item_ids),
    )


def _subset(data: InteractionDataset, idx: np.ndarray) -> InteractionDataset:
    return InteractionDataset.from_pairs(
        data.interactions[idx],
        num_users=data.num_users,
        num_items=data.num_items,
        user_labels=data.user_labels,
        item_labels=data.item_labels,
    )


def _drop_users_missing_from_train(
    part: InteractionDataset, train: InteractionDataset
) -> InteractionDataset:
    """Remove eval interactions of users that have no training positives."""
    has_train = np.zeros(part.num_users, dtype=bool)
    has_train[list(train.positives_by_user)] = True
    keep = has_train[part.interactions[:, 0]]
    if keep.all():
        return part
    return _subset(part, np.nonzero(keep)[0])


def split_iid(data: InteractionDataset, seed: int) -> DatasetSplits:
    """Random 72/8/20 train/validation/test split over interactions.

    Assignment is a seeded permutation, so the three parts are disjoint by
    construction. Validation and test interactions of users left with no
    training positives are dropped from evaluation.
    """
    n = len(data)
    if n < 10:
        raise DataError(f"need at least 10 interactions to split, got {n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_test = int(round(0.2 * n))
    n_val = int(round(0.08 * n))
    test = _subset(data, np.sort(perm[:n_test]))
    val = _subset(data, np.sort(perm[n_test:n_test + n_val]))
    train = _subset(data, np.sort(perm[n_test + n_val:]))
    return DatasetSplits(
        train=train,
        validation=_drop_users_missing_from_train(val, train),
        test=_drop_users_missing_from_train(test, train),
        split_kind="iid",
    )


def split_ood(data: InteractionDataset, seed: int) -> DatasetSplits:
    """Popularity-shifted split: test resampled toward uniform item exposure.

    Each interaction is weighted by the inverse popularity of its item, and
    ceil(0.2 * n) interactions are drawn without replacement as the test
    set, flattening the test item histogram while train keeps the natural
    skew. No validation split is produced.
    """
    n = len(data)
    if n < 10:
        raise DataError(f"need at least 10 interactions to split, got {n}")
    rng = np.random.default_rng(seed)
    counts = data.item_counts()
    weights = 1.0 / counts[data.interactions[:, 1]].astype(np.float64)
    probs = weights / weights.sum()
    n_test = math.ceil(0.2 * n)
    test_idx = rng.choice(n, size=n_test, replace=False, p=probs)
    mask = np.ones(n, dtype=bool)
    mask[test_idx] = False
    train = _subset(data, np.nonzero(mask)[0])
    test = _subset(data, np.sort(test_idx))
    return DatasetSplits(
        train=train,
        validation=None,
        test=_drop_users_missing_from_train(test, train),
        split_kind="ood",
    )


def sample_negatives(
    data: InteractionDataset,
    positives: np.ndarray,
    num_negatives: int,
    seed,
) -> TrainingBatch:
    """Uniformly sample N negatives per positive pair from items outside P_u.

    Rejection sampling against each row user's positive set; draws are with
    replacement across rows and not deduplicated within a row. Deterministic
    under the given seed (an int or a sequence of ints, e.g. including a
    batch index).
    """
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 2)
    batch = len(positives)
    users = positives[:, 0]
    for u in np.unique(users):
        eligible = data.num_items - len(data.positives(int(u)))
        if eligible < num_negatives:
            raise SamplingError(
                f"user {int(u)} has only {eligible} eligible negatives, need {num_negatives}"
            )

    is_positive = data.positives_mask[users]

    rng = np.random.default_rng(seed)
    negatives = rng.integers(0, data.num_items, size=(batch, num_negatives), dtype=np.int64)
    rows = np.broadcast_to(np.arange(batch)[:, None], negatives.shape)
    bad = is_positive[rows, negatives]
    while bad.any():
        negatives[bad] = rng.integers(0, data.num_items, size=int(bad.sum()), dtype=np.int64)
        bad = is_positive[rows, negatives]
    return TrainingBatch(positives=positives, negatives=negatives)


def build_buckets(train: InteractionDataset) -> PopularityBuckets:
    """Top/bottom 20% of items by training interaction count.

    Items are ranked by count descending with ties broken by item id
    ascending; the head takes the first ceil(0.2 * num_items) ranks and the
    tail the last.
    """
    if train.num_items < 5:
        raise DataError(f"need at least 5 items for buckets, got {train.num_items}")
    counts = train.item_counts()
    order = np.lexsort((np.arange(train.num_items), -counts))
    m = math.ceil(0.2 * train.num_items)
    return PopularityBuckets(
        head_items=frozenset(int(i) for i in order[:m]),
        tail_items=frozenset(int(i) for i in order[-m:]),
        counts=counts,
    )


def export_split_manifest(data: InteractionDataset, splits: DatasetSplits, path: str | Path) -> None:
    """Write each interaction's split assignment for audit.

    One line per interaction of the parent dataset: `user<TAB>item<TAB>part`
    where part is train/validation/test, or `dropped` for eval interactions
    removed because their user has no training positives.
    """
    membership: dict[tuple[int, int], str] = {}
    parts = [("train", splits.train), ("validation", splits.validation), ("test", splits.test)]
    for name, part in parts:
        if part is None:
            continue
        for u, i in part.interactions:
            membership[(int(u), int(i))] = name
    lines = []
    for u, i in data.interactions:
        part = membership.get((int(u), int(i)), "dropped")
        lines.append(f"{int(u)}\t{int(i)}\t{part}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_synthetic_spec(spec: str) -> dict:
    """Parse a `synthetic:key=value,...` data string into generator kwargs."""
    kwargs: dict[str, float | int] = {}
    body = spec.split(":", 1)[1] if ":" in spec else ""
    int_keys = {"num_users", "num_items", "interactions_per_user", "num_clusters", "seed"}
    float_keys = {"zipf_exponent", "cluster_noise", "choice_temperature", "popularity_weight"}
    for piece in filter(None, body.split(",")):
        key, _, value = piece.partition("=")
        key = key.strip()
        if key in int_keys:
            kwargs[key] = int(value)
        elif key in float_keys:
            kwargs[key] = float(value)
        else:
            raise DataError(f"unknown synthetic data key: {key!r}")
    return kwargs


def generate_synthetic(
    num_users: int = 500,
    num_items: int = 300,
    interactions_per_user: int = 50,
    num_clusters: int = 12,
    zipf_exponent: float = 1.1,
    cluster_noise: float = 0.35,
    choice_temperature: float = 0.35,
    popularity_weight: float = 1.0,
    seed: int = 0,
) -> InteractionDataset:
    """Generate a clustered, popularity-skewed implicit-feedback dataset.

    Items live near one of `num_clusters` latent centers (so item-item
    similarity carries signal), global popularity follows a Zipf law
    decoupled from the cluster structure, and each user prefers a couple of
    clusters. Each user interacts with a fixed number of distinct items
    drawn proportionally to exp(affinity / temperature + popularity_weight *
    log popularity); lowering popularity_weight keeps the histogram skew but
    lets preference dominate item choice.
    """
    rng = np.random.default_rng(seed)
    dim = 8
    centers = rng.normal(size=(num_clusters, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)

    item_cluster = rng.integers(0, num_clusters, size=num_items)
    item_vecs = centers[item_cluster] + cluster_noise * rng.normal(size=(num_items, dim))
    item_vecs /= np.linalg.norm(item_vecs, axis=1, keepdims=True)

    # Popularity ranks are shuffled so head items spread across clusters.
    pop_rank = rng.permutation(num_items)
    popularity = (1.0 + pop_rank).astype(np.float64) ** (-zipf_exponent)

    pairs = []
    count = min(interactions_per_user, num_items)
    for u in range(num_users):
        primary, secondary = rng.integers(0, num_clusters, size=2)
        user_vec = centers[primary] + 0.5 * centers[secondary]
        user_vec = user_vec + cluster_noise * rng.normal(size=dim)
        user_vec /= np.linalg.norm(user_vec)
        affinity = item_vecs @ user_vec
        logits = affinity / choice_temperature + popularity_weight * np.log(popularity)
        probs = np.exp(logits - logits.max())
        probs /= probs.sum()
        items = rng.choice(num_items, size=count, replace=False, p=probs)
        pairs.extend((u, int(i)) for i in items)

    return InteractionDataset.from_pairs(
        np.array(pairs, dtype=np.int64), num_users=num_users, num_items=num_items
    )
