"""Loading, splitting, negative sampling, and popularity buckets."""

import numpy as np
import pytest
from scipy import stats

from dslrec.data import (
    DataError,
    InteractionDataset,
    SamplingError,
    build_buckets,
    export_split_manifest,
    generate_synthetic,
    load_interactions,
    sample_negatives,
    split_iid,
    split_ood,
)


def write_file(tmp_path, text, name="inter.tsv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadInteractions:
    def test_three_line_file(self, tmp_path):
        path = write_file(tmp_path, "a\tx\na\ty\nb\tx\n")
        ds = load_interactions(path)
        assert (ds.num_users, ds.num_items, len(ds)) == (2, 2, 3)
        ds.validate()

    def test_duplicate_pair_dropped(self, tmp_path):
        path = write_file(tmp_path, "a\tx\na\ty\nb\tx\na\tx\n")
        ds = load_interactions(path)
        assert len(ds) == 3

    def test_comma_autodetect_and_extra_columns(self, tmp_path):
        path = write_file(tmp_path, "a,x,5,1234\nb,y,3,999\n")
        ds = load_interactions(path)
        assert (ds.num_users, ds.num_items, len(ds)) == (2, 2, 2)

    def test_header_detected_by_nonnumeric_second_column(self, tmp_path):
        path = write_file(tmp_path, "user,item\n1,2\n1,3\n")
        ds = load_interactions(path)
        assert len(ds) == 2 and ds.num_users == 1 and ds.num_items == 2

    def test_labels_retained(self, tmp_path):
        path = write_file(tmp_path, "alice\t42\nbob\t17\n")
        ds = load_interactions(path)
        assert ds.user_labels == ("alice", "bob")
        assert ds.item_labels == ("42", "17")

    def test_malformed_line_reports_number(self, tmp_path):
        path = write_file(tmp_path, "a\tx\njunkline\n")
        with pytest.raises(DataError, match="line 2"):
            load_interactions(path)

    def test_empty_file_rejected(self, tmp_path):
        path = write_file(tmp_path, "")
        with pytest.raises(DataError, match="empty"):
            load_interactions(path)

    def test_large_file_matches_unique_scan(self, tmp_path):
        rng = np.random.default_rng(7)
        lines = [f"u{rng.integers(200)}\ti{rng.integers(300)}" for _ in range(100_000)]
        path = write_file(tmp_path, "\n".join(lines) + "\n")
        ds = load_interactions(path)
        # Oracle: a sort-unique pass over the raw token pairs.
        unique_pairs = {tuple(line.split("\t")) for line in lines}
        assert len(ds) == len(unique_pairs)
        ds.validate()


class TestSplitIID:
    def test_sizes_at_100(self):
        ds = generate_synthetic(num_users=10, num_items=20, interactions_per_user=10, seed=0)
        assert len(ds) == 100
        sp = split_iid(ds, seed=5)
        assert abs(len(sp.test) - 20) <= 1
        assert abs(len(sp.validation) - 8) <= 1
        assert abs(len(sp.train) - 72) <= 1

    def test_deterministic_under_seed(self):
        ds = generate_synthetic(num_users=10, num_items=20, interactions_per_user=10, seed=0)
        a = split_iid(ds, seed=9)
        b = split_iid(ds, seed=9)
        assert np.array_equal(a.train.interactions, b.train.interactions)
        assert np.array_equal(a.validation.interactions, b.validation.interactions)
        assert np.array_equal(a.test.interactions, b.test.interactions)

    @pytest.mark.parametrize("seed", range(100))
    def test_disjoint_and_ratios_over_seeds(self, seed):
        ds = generate_synthetic(num_users=8, num_items=15, interactions_per_user=8, seed=3)
        sp = split_iid(ds, seed=seed)
        # Oracle: brute-force set intersections over pair tuples.
        train = {tuple(p) for p in sp.train.interactions}
        val = {tuple(p) for p in sp.validation.interactions}
        test = {tuple(p) for p in sp.test.interactions}
        assert not (train & val) and not (train & test) and not (val & test)
        n = len(ds)
        assert abs(len(test) - round(0.2 * n)) <= 1
        # Dropped eval rows only shrink val/test, never train.
        assert len(train) == n - round(0.2 * n) - round(0.08 * n)

    def test_users_without_train_positives_dropped_from_eval(self):
        # User 9 has a single interaction; force it into test by seed search.
        pairs = [(u, i) for u in range(9) for i in range(u, u + 3)]
        pairs.append((9, 0))
        ds = InteractionDataset.from_pairs(np.array(pairs), num_users=10, num_items=12)
        for seed in range(200):
            sp = split_iid(ds, seed=seed)
            if 9 not in sp.train.positives_by_user:
                eval_users = set(sp.test.positives_by_user) | set(sp.validation.positives_by_user)
                assert 9 not in eval_users
                return
        pytest.fail("no seed sent the singleton user out of train")

    def test_too_small_rejected(self):
        ds = InteractionDataset.from_pairs(
            np.array([[0, 0], [1, 1]]), num_users=2, num_items=2
        )
        with pytest.raises(DataError):
            split_iid(ds, seed=0)


def _item_histogram(part, num_items):
    return np.bincount(part.interactions[:, 1], minlength=num_items).astype(float)


def _kl_to_uniform(hist):
    p = hist / hist.sum()
    support = p > 0
    n = len(hist)
    return float(np.sum(p[support] * np.log(p[support] * n)))


class TestSplitOOD:
    def test_flattens_zipf_popularity(self):
        ds = generate_synthetic(
            num_users=100, num_items=60, interactions_per_user=25, zipf_exponent=1.4, seed=2
        )
        sp = split_ood(ds, seed=4)
        n_items = ds.num_items
        kl_test = _kl_to_uniform(_item_histogram(sp.test, n_items))
        kl_train = _kl_to_uniform(_item_histogram(sp.train, n_items))
        assert kl_test < kl_train

    def test_entropy_increases_on_skewed_data(self):
        ds = generate_synthetic(
            num_users=100, num_items=60, interactions_per_user=25, zipf_exponent=1.4, seed=2
        )
        sp = split_ood(ds, seed=11)
        test_hist = _item_histogram(sp.test, ds.num_items)
        train_hist = _item_histogram(sp.train, ds.num_items)
        assert stats.entropy(test_hist) > stats.entropy(train_hist)

    def test_sizes_and_disjointness(self):
        ds = generate_synthetic(num_users=30, num_items=40, interactions_per_user=11, seed=1)
        sp = split_ood(ds, seed=0)
        assert sp.validation is None
        n = len(ds)
        expected_test = int(np.ceil(0.2 * n))
        # Test may only shrink through the no-train-positives drop.
        assert len(sp.train) == n - expected_test
        assert len(sp.test) <= expected_test
        train = {tuple(p) for p in sp.train.interactions}
        test = {tuple(p) for p in sp.test.interactions}
        assert not (train & test)

    def test_uniform_popularity_keeps_near_uniform_test(self):
        rng = np.random.default_rng(0)
        users = rng.integers(0, 50, size=1200)
        items = np.tile(np.arange(60), 20)
        pairs = np.unique(np.stack([users, items], axis=1), axis=0)
        ds = InteractionDataset.from_pairs(pairs, num_users=50, num_items=60)
        ood = split_ood(ds, seed=3)
        iid = split_iid(ds, seed=3)
        kl_ood = _kl_to_uniform(_item_histogram(ood.test, 60))
        kl_iid = _kl_to_uniform(_item_histogram(iid.test, 60))
        assert abs(kl_ood - kl_iid) < 0.05


class TestSampleNegatives:
    def test_forced_single_negative(self):
        # User 0 interacted with every item except item 4.
        pairs = [(0, i) for i in range(5) if i != 4] + [(1, 0)]
        ds = InteractionDataset.from_pairs(np.array(pairs), num_users=2, num_items=5)
        batch = sample_negatives(ds, np.array([[0, 0]]), num_negatives=1, seed=0)
        assert batch.negatives[0, 0] == 4

    def test_never_emits_positive(self):
        ds = generate_synthetic(num_users=40, num_items=30, interactions_per_user=8, seed=5)
        batch = sample_negatives(ds, ds.interactions[:200], num_negatives=10, seed=1)
        for b in range(200):
            user_pos = set(ds.positives(int(batch.users[b])))
            assert not (set(batch.negatives[b].tolist()) & user_pos)

    def test_deterministic_per_seed(self):
        ds = generate_synthetic(num_users=40, num_items=30, interactions_per_user=8, seed=5)
        a = sample_negatives(ds, ds.interactions[:50], 6, seed=[3, 0, 7])
        b = sample_negatives(ds, ds.interactions[:50], 6, seed=[3, 0, 7])
        c = sample_negatives(ds, ds.interactions[:50], 6, seed=[3, 0, 8])
        assert np.array_equal(a.negatives, b.negatives)
        assert not np.array_equal(a.negatives, c.negatives)

    def test_uniform_over_eligible_items(self):
        # One user, 5 positives among 25 items; 10^6 draws, per-item 3-sigma
        # band plus a chi-square goodness-of-fit check.
        pairs = [(0, i) for i in range(5)]
        ds = InteractionDataset.from_pairs(np.array(pairs), num_users=1, num_items=25)
        rows = np.tile(np.array([[0, 0]]), (1000, 1))
        draws = np.concatenate(
            [sample_negatives(ds, rows, 20, seed=[42, r]).negatives.ravel() for r in range(50)]
        )
        assert len(draws) == 1_000_000
        counts = np.bincount(draws, minlength=25)
        assert (counts[:5] == 0).all()
        eligible = counts[5:]
        n, p = len(draws), 1.0 / 20
        sigma = np.sqrt(n * p * (1 - p))
        assert (np.abs(eligible - n * p) <= 3 * sigma).all()
        chi2 = float(((eligible - n * p) ** 2 / (n * p)).sum())
        assert chi2 < stats.chi2.ppf(0.999, df=19)

    def test_insufficient_pool_names_user(self):
        pairs = [(0, i) for i in range(4)] + [(1, 0)]
        ds = InteractionDataset.from_pairs(np.array(pairs), num_users=2, num_items=5)
        with pytest.raises(SamplingError, match="user 0"):
            sample_negatives(ds, np.array([[0, 0]]), num_negatives=2, seed=0)


class TestBuildBuckets:
    def test_five_items_direct_ranking(self):
        pairs = []
        for item, count in enumerate([9, 7, 5, 3, 1]):
            pairs += [(u, item) for u in range(count)]
        ds = InteractionDataset.from_pairs(np.array(pairs), num_users=9, num_items=5)
        buckets = build_buckets(ds)
        assert buckets.head_items == {0}
        assert buckets.tail_items == {4}

    def test_boundary_tie_prefers_lower_id_for_head(self):
        # Items 0..4 with counts [5, 3, 3, 3, 1]: head size 1, the count-3 tie
        # between items 1..3 does not reach head; make the tie AT the boundary.
        pairs = []
        for item, count in enumerate([5, 3, 5, 3, 1]):
            pairs += [(u, item) for u in range(count)]
        ds = InteractionDataset.from_pairs(np.array(pairs), num_users=5, num_items=5)
        buckets = build_buckets(ds)
        # Counts: item0=5, item2=5 tie at the top; head has one slot.
        assert buckets.head_items == {0}

    def test_random_counts_match_full_sort_oracle(self):
        rng = np.random.default_rng(3)
        for trial in range(20):
            num_items = int(rng.integers(5, 40))
            pairs = []
            user = 0
            counts = rng.integers(0, 9, size=num_items)
            for item in range(num_items):
                for _ in range(counts[item]):
                    pairs.append((user, item))
                    user += 1
            if not pairs:
                continue
            ds = InteractionDataset.from_pairs(
                np.array(pairs), num_users=max(user, 1), num_items=num_items
            )
            buckets = build_buckets(ds)
            order = sorted(range(num_items), key=lambda i: (-counts[i], i))
            m = int(np.ceil(0.2 * num_items))
            assert buckets.head_items == set(order[:m])
            assert buckets.tail_items == set(order[-m:])
            assert not (buckets.head_items & buckets.tail_items)
            head_min = min(counts[i] for i in buckets.head_items)
            tail_max = max(counts[i] for i in buckets.tail_items)
            assert head_min >= tail_max

    def test_reproducible_from_same_train_split(self):
        ds = generate_synthetic(num_users=50, num_items=40, interactions_per_user=9, seed=8)
        sp = split_iid(ds, seed=1)
        assert build_buckets(sp.train).head_items == build_buckets(sp.train).head_items

    def test_too_few_items_rejected(self):
        ds = InteractionDataset.from_pairs(
            np.array([[0, 0], [0, 1], [0, 2], [0, 3]]), num_users=1, num_items=4
        )
        with pytest.raises(DataError):
            build_buckets(ds)


class TestManifest:
    def test_every_interaction_assigned_once(self, tmp_path):
        ds = generate_synthetic(num_users=20, num_items=25, interactions_per_user=8, seed=4)
        sp = split_iid(ds, seed=2)
        path = tmp_path / "manifest.txt"
        export_split_manifest(ds, sp, path)
        lines = path.read_text().splitlines()
        assert len(lines) == len(ds)
        parts = [line.split("\t")[2] for line in lines]
        counted = {p: parts.count(p) for p in set(parts)}
        assert counted.get("train") == len(sp.train)
        assert counted.get("validation") == len(sp.validation)
        assert counted.get("test") == len(sp.test)
