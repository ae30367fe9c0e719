"""Experiment orchestration: config, Adam training loop, grids, ablation, reports."""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import os
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import figures
from .data import (
    DatasetSplits,
    InteractionDataset,
    PopularityBuckets,
    build_buckets,
    export_split_manifest,
    generate_synthetic,
    load_interactions,
    parse_synthetic_spec,
    sample_negatives,
    split_iid,
    split_ood,
)
from .evaluation import (
    EvaluationError,
    MetricsReport,
    evaluate,
    validation_ndcg,
    write_metrics_csv,
)
from .loss import DSLConfig, LossOutput, bpr_loss, branch_toggles, dsl_loss, softmax_loss
from .model import (
    EmbeddingModel,
    ScoreMatrix,
    SimilarityMatrix,
    backbone_backward,
    build_adjacency,
    cosine_scores,
    effective_embeddings,
    init_embeddings,
    load_checkpoint,
    save_checkpoint,
    score_backward,
)

RUNS_DIR_ENV = "DSLREC_RUNS_DIR"
EARLY_STOP_PATIENCE = 10

# Seed-stream tags keeping init / shuffling / negative sampling independent.
_SEED_INIT, _SEED_SHUFFLE, _SEED_NEG = 11, 22, 33


class TrainingDiverged(RuntimeError):
    """Raised when a batch produces a non-finite loss."""


GRIDDABLE_FIELDS = (
    "tau",
    "beta",
    "alpha",
    "slate_size",
    "learning_rate",
    "weight_decay",
    "d",
    "batch_size",
    "epochs",
    "negatives",
)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one run; loss-specific fields are inert elsewhere."""

    data: str = "synthetic"
    data_format: str = "auto"
    split_kind: str = "iid"
    backbone: str = "mf"
    layers: int = 2
    loss: str = "dsl"
    tau: float = 0.2
    beta: float = 1.0
    alpha: float = 1.0
    slate_size: int = 20
    kappa_floor: float = 1e-3
    d: int = 64
    learning_rate: float = 0.1
    weight_decay: float = 0.0
    batch_size: int = 1024
    epochs: int = 50
    negatives: int = 200
    eval_k: int = 20
    seed: int = 0
    grid: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.split_kind not in ("iid", "ood"):
            raise ValueError(f"unknown split kind {self.split_kind!r}")
        if self.loss not in ("bpr", "sl", "dsl", "dsl-kappa-only", "dsl-ca-only"):
            raise ValueError(f"unknown loss {self.loss!r}")
        for name in ("tau", "learning_rate", "batch_size", "epochs", "negatives", "d", "eval_k"):
            if getattr(self, name) <= 0 and not (name == "learning_rate" and self.learning_rate == 0.0):
                raise ValueError(f"{name} must be positive")
        for key in self.grid:
            if key not in GRIDDABLE_FIELDS:
                raise ValueError(f"field {key!r} is not tunable via grid")

    def dsl_config(self) -> DSLConfig:
        kappa_on, ca_on = branch_toggles(self.loss if self.loss != "bpr" else "sl")
        return DSLConfig(
            tau=self.tau,
            beta=self.beta,
            alpha=self.alpha,
            slate_size=self.slate_size,
            kappa_enabled=kappa_on,
            ca_enabled=ca_on,
            kappa_floor=self.kappa_floor,
        )

    def resolved(self) -> dict:
        out = asdict(self)
        out.pop("grid")
        return out

    def run_id(self) -> str:
        digest = hashlib.sha1(
            json.dumps(self.resolved(), sort_keys=True).encode("utf-8")
        ).hexdigest()[:8]
        return f"{self.loss}_{self.backbone}_{self.split_kind}_s{self.seed}_{digest}"


@dataclass
class RunRecord:
    """Everything a finished run produced; suffices to re-launch it identically.

    wall_clock is informational only and deliberately left out of serialized
    outputs so repeated runs stay byte-identical.
    """

    run_id: str
    config: dict
    train_loss: list[float]
    val_ndcg: list[float]
    reports: list[MetricsReport]
    wall_clock: float = 0.0
    out_dir: Path | None = None

    @property
    def best_val_ndcg(self) -> float:
        return max(self.val_ndcg) if self.val_ndcg else float("nan")

    def report_for(self, bucket: str) -> MetricsReport | None:
        for rep in self.reports:
            if rep.bucket == bucket:
                return rep
        return None

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "config": self.config,
            "train_loss": self.train_loss,
            "val_ndcg": self.val_ndcg,
            "reports": [asdict(r) for r in self.reports],
        }

    @classmethod
    def from_dict(cls, payload: dict, out_dir: Path | None = None) -> "RunRecord":
        return cls(
            run_id=payload["run_id"],
            config=payload["config"],
            train_loss=payload["train_loss"],
            val_ndcg=payload["val_ndcg"],
            reports=[MetricsReport(**r) for r in payload["reports"]],
            out_dir=out_dir,
        )


def runs_root(out_root: str | Path | None = None) -> Path:
    if out_root is not None:
        return Path(out_root)
    return Path(os.environ.get(RUNS_DIR_ENV, "runs"))


def load_config_data(config: ExperimentConfig) -> InteractionDataset:
    """Load the file named by the config, or generate the `synthetic:...` dataset."""
    if config.data == "synthetic" or config.data.startswith("synthetic:"):
        return generate_synthetic(**parse_synthetic_spec(config.data))
    return load_interactions(config.data, delimiter=config.data_format)


def make_splits(config: ExperimentConfig, data: InteractionDataset) -> DatasetSplits:
    if config.split_kind == "iid":
        return split_iid(data, config.seed)
    return split_ood(data, config.seed)


class AdamOptimizer:
    """Adam with decoupled weight decay, dense over both embedding tables."""

    def __init__(
        self,
        shapes: list[tuple[int, int]],
        learning_rate: float,
        weight_decay: float = 0.0,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / bc1
            v_hat = v / bc2
            p -= self.learning_rate * (m_hat / (np.sqrt(v_hat) + self.eps) + self.weight_decay * p)


def _batch_loss(
    config: ExperimentConfig,
    score_mat: ScoreMatrix,
    u_eff: np.ndarray,
    v_eff: np.ndarray,
    pos_items: np.ndarray,
    negatives: np.ndarray,
    eps: float,
) -> LossOutput:
    if config.loss == "bpr":
        return bpr_loss(score_mat)
    if config.loss == "sl":
        return softmax_loss(score_mat, config.tau)
    raw = cosine_scores(v_eff[pos_items], v_eff[negatives], eps)
    sims = SimilarityMatrix(raw=raw, shifted=(raw + 1.0) / 2.0)
    return dsl_loss(score_mat, sims, config.dsl_config(), neg_item_ids=negatives)


_DIAG_FIELDS = (
    "epoch",
    "batch",
    "loss",
    "kappa_mean",
    "kappa_max",
    "c_mean",
    "c_min",
    "c_max",
    "tau_min",
    "tau_max",
)


def _diagnostics_row(epoch: int, batch_idx: int, out: LossOutput) -> list:
    row: list = [epoch, batch_idx, repr(out.total)]
    diag = out.diagnostics
    if diag is not None and diag.kappa is not None:
        row += [repr(float(diag.kappa.values.mean())), repr(float(diag.kappa.values.max()))]
    else:
        row += ["", ""]
    if diag is not None and diag.ca is not None:
        c = diag.ca.intensity
        t = diag.ca.per_example_tau
        row += [repr(float(c.mean())), repr(float(c.min())), repr(float(c.max()))]
        row += [repr(float(t.min())), repr(float(t.max()))]
    else:
        row += ["", "", "", "", ""]
    return row


def train(
    config: ExperimentConfig,
    out_root: str | Path | None = None,
    dataset: InteractionDataset | None = None,
    splits: DatasetSplits | None = None,
    buckets: PopularityBuckets | None = None,
    write_outputs: bool = True,
) -> RunRecord:
    """Run one seeded training job end to end and persist its outputs.

    Per epoch: seeded shuffle of the train positives, uniform negative
    sampling per batch, cosine scoring, loss plus hand-derived gradients
    through the backbone chain, and an Adam step with decoupled weight
    decay. With a validation split, NDCG@k is logged per epoch, the
    best-validation embedding state is retained, and training stops early
    after EARLY_STOP_PATIENCE stagnant epochs.
    """
    started = time.perf_counter()
    data = dataset if dataset is not None else load_config_data(config)
    parts = splits if splits is not None else make_splits(config, data)
    pop_buckets = buckets if buckets is not None else build_buckets(parts.train)
    train_part = parts.train
    n_train = len(train_part)
    if n_train == 0:
        raise ValueError("train split is empty")

    adjacency = build_adjacency(train_part) if config.backbone == "graphconv" else None
    model = init_embeddings(
        train_part.num_users,
        train_part.num_items,
        config.d,
        seed=[config.seed, _SEED_INIT],
        backbone=config.backbone,
        layers=config.layers,
    )
    optimizer = AdamOptimizer(
        [model.user_table.shape, model.item_table.shape],
        learning_rate=config.learning_rate,
        weight_decay=config.weight_decay,
    )

    train_loss: list[float] = []
    val_traj: list[float] = []
    diag_rows: list[list] = []
    best_val = -np.inf
    best_state: tuple[np.ndarray, np.ndarray] | None = None
    stale = 0

    for epoch in range(config.epochs):
        perm = np.random.default_rng([config.seed, _SEED_SHUFFLE, epoch]).permutation(n_train)
        epoch_total = 0.0
        for batch_idx, start in enumerate(range(0, n_train, config.batch_size)):
            rows = perm[start:start + config.batch_size]
            batch = sample_negatives(
                train_part,
                train_part.interactions[rows],
                config.negatives,
                seed=[config.seed, _SEED_NEG, epoch, batch_idx],
            )
            u_eff, v_eff = effective_embeddings(model, adjacency)
            items = np.concatenate([batch.pos_items[:, None], batch.negatives], axis=1)
            score_mat = ScoreMatrix(
                cosine_scores(u_eff[batch.users], v_eff[items], model.norm_epsilon)
            )
            out = _batch_loss(
                config, score_mat, u_eff, v_eff, batch.pos_items, batch.negatives,
                model.norm_epsilon,
            )
            if not np.isfinite(out.total):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} batch {batch_idx} "
                    f"(run {config.run_id()}): config={config.resolved()}"
                )
            grad_u_eff, grad_v_eff = score_backward(
                batch.users, items, out.grad_wrt_scores, u_eff, v_eff, model.norm_epsilon
            )
            grad_u, grad_v = backbone_backward(model, grad_u_eff, grad_v_eff, adjacency)
            optimizer.step([model.user_table, model.item_table], [grad_u, grad_v])
            epoch_total += out.total
            diag_rows.append(_diagnostics_row(epoch, batch_idx, out))
        train_loss.append(epoch_total / n_train)

        if parts.validation is not None:
            v = validation_ndcg(model, train_part, parts.validation, config.eval_k, adjacency)
            val_traj.append(v)
            if v > best_val:
                best_val = v
                best_state = (model.user_table.copy(), model.item_table.copy())
                stale = 0
            else:
                stale += 1
                if stale >= EARLY_STOP_PATIENCE:
                    break

    if best_state is not None:
        model.user_table[:] = best_state[0]
        model.item_table[:] = best_state[1]

    try:
        reports = evaluate(model, parts, pop_buckets, config.eval_k, adjacency)
    except EvaluationError:
        # Tiny or degenerate datasets can leave a popularity bucket with no
        # eligible users; keep the run and report the unbucketed metrics.
        reports = evaluate(model, parts, None, config.eval_k, adjacency)
    record = RunRecord(
        run_id=config.run_id(),
        config=config.resolved(),
        train_loss=train_loss,
        val_ndcg=val_traj,
        reports=reports,
        wall_clock=time.perf_counter() - started,
    )
    if write_outputs:
        record.out_dir = _write_run_outputs(record, config, model, data, parts, diag_rows, out_root)
    return record


def _write_run_outputs(
    record: RunRecord,
    config: ExperimentConfig,
    model: EmbeddingModel,
    data: InteractionDataset,
    parts: DatasetSplits,
    diag_rows: list[list],
    out_root: str | Path | None,
) -> Path:
    run_dir = runs_root(out_root) / record.run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "resolved_config.json").write_text(
        json.dumps(config.resolved(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (run_dir / "record.json").write_text(
        json.dumps(record.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    save_checkpoint(model, run_dir / "checkpoint.bin", seed=config.seed)
    write_metrics_csv(run_dir / "metrics.csv", record.reports, record.run_id, config.seed)
    with open(run_dir / "epoch_loss.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run_id", "epoch", "train_loss", "val_ndcg"])
        for epoch, loss_value in enumerate(record.train_loss):
            val = repr(record.val_ndcg[epoch]) if epoch < len(record.val_ndcg) else ""
            writer.writerow([record.run_id, epoch, repr(loss_value), val])
    export_split_manifest(data, parts, run_dir / "split_manifest.txt")
    with open(run_dir / "diagnostics.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_DIAG_FIELDS)
        writer.writerows(diag_rows)
    return run_dir


def evaluate_run(run_dir: str | Path, k: int | None = None) -> list[MetricsReport]:
    """Re-evaluate a persisted run from its checkpoint and resolved config."""
    run_dir = Path(run_dir)
    config = ExperimentConfig(**json.loads((run_dir / "resolved_config.json").read_text()))
    model, _ = load_checkpoint(run_dir / "checkpoint.bin")
    data = load_config_data(config)
    parts = make_splits(config, data)
    buckets = build_buckets(parts.train)
    adjacency = build_adjacency(parts.train) if config.backbone == "graphconv" else None
    return evaluate(model, parts, buckets, k or config.eval_k, adjacency)


def load_run_record(run_dir: str | Path) -> RunRecord:
    run_dir = Path(run_dir)
    payload = json.loads((run_dir / "record.json").read_text(encoding="utf-8"))
    return RunRecord.from_dict(payload, out_dir=run_dir)


def _grid_cells(config: ExperimentConfig) -> list[ExperimentConfig]:
    if not config.grid:
        return [replace(config, grid={})]
    keys = sorted(config.grid)
    cells = []
    for values in itertools.product(*(config.grid[k] for k in keys)):
        overrides = dict(zip(keys, values))
        cells.append(replace(config, grid={}, **overrides))
    return cells


def grid_search(
    config: ExperimentConfig,
    out_root: str | Path | None = None,
    dataset: InteractionDataset | None = None,
    write_outputs: bool = True,
) -> tuple[list[RunRecord], RunRecord]:
    """Train every cell of the Cartesian grid and pick the best by validation NDCG.

    Requires an IID split (the OOD protocol has no validation set). Ties are
    broken toward the lexicographically smaller configuration over the
    sorted grid keys.
    """
    if config.split_kind != "iid":
        raise ValueError("grid search needs a validation split; OOD has none")
    data = dataset if dataset is not None else load_config_data(config)
    parts = make_splits(config, data)
    buckets = build_buckets(parts.train)
    keys = sorted(config.grid) if config.grid else []

    records: list[RunRecord] = []
    best: RunRecord | None = None
    best_key: tuple = ()
    for cell in _grid_cells(config):
        record = train(
            cell, out_root, dataset=data, splits=parts, buckets=buckets,
            write_outputs=write_outputs,
        )
        records.append(record)
        cell_key = tuple(getattr(cell, k) for k in keys)
        if (
            best is None
            or record.best_val_ndcg > best.best_val_ndcg
            or (record.best_val_ndcg == best.best_val_ndcg and cell_key < best_key)
        ):
            best = record
            best_key = cell_key

    if write_outputs:
        group_dir = runs_root(out_root) / f"grid_{config.run_id()}"
        group_dir.mkdir(parents=True, exist_ok=True)
        with open(group_dir / "grid_summary.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["run_id", *keys, "best_val_ndcg", "selected"])
            for record in records:
                row = [record.run_id]
                row += [repr(record.config[k]) for k in keys]
                row += [repr(record.best_val_ndcg), int(record.run_id == best.run_id)]
                writer.writerow(row)
        lines = [f"{k}={v}" for k, v in sorted(best.config.items())]
        (group_dir / "best_config.cfg").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return records, best


ABLATION_LOSSES = ("sl", "dsl-ca-only", "dsl-kappa-only", "dsl")


def run_ablation(
    config: ExperimentConfig,
    out_root: str | Path | None = None,
    dataset: InteractionDataset | None = None,
    write_outputs: bool = True,
) -> list[RunRecord]:
    """Four runs toggling the two branches, sharing the seed and all other settings."""
    data = dataset if dataset is not None else load_config_data(config)
    parts = make_splits(config, data)
    buckets = build_buckets(parts.train)
    records = [
        train(
            replace(config, loss=loss_name, grid={}),
            out_root,
            dataset=data,
            splits=parts,
            buckets=buckets,
            write_outputs=write_outputs,
        )
        for loss_name in ABLATION_LOSSES
    ]
    if write_outputs:
        group_dir = runs_root(out_root) / f"ablation_{config.run_id()}"
        group_dir.mkdir(parents=True, exist_ok=True)
        with open(group_dir / "ablation_summary.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["loss", "run_id", "bucket", "recall_at_k", "ndcg_at_k", "k"])
            for loss_name, record in zip(ABLATION_LOSSES, records):
                for rep in record.reports:
                    writer.writerow(
                        [loss_name, record.run_id, rep.bucket, repr(rep.recall_at_k),
                         repr(rep.ndcg_at_k), rep.k]
                    )
    return records


def improvement_pct(baseline: float, value: float) -> float | None:
    if baseline == 0.0:
        return None
    return 100.0 * (value - baseline) / baseline


def _head_tail_rows(records: list[RunRecord]) -> list[dict]:
    """DSL-vs-SL percentage deltas per bucket for matching (backbone, split, seed)."""
    groups: dict[tuple, dict[str, RunRecord]] = {}
    for record in records:
        cfg = record.config
        key = (cfg["backbone"], cfg["split_kind"], cfg["seed"])
        groups.setdefault(key, {})[cfg["loss"]] = record
    rows: list[dict] = []
    for key in sorted(groups):
        pair = groups[key]
        if "sl" not in pair or "dsl" not in pair:
            continue
        for bucket in ("all", "head", "tail"):
            sl_rep = pair["sl"].report_for(bucket)
            dsl_rep = pair["dsl"].report_for(bucket)
            if sl_rep is None or dsl_rep is None:
                continue
            for metric in ("recall_at_k", "ndcg_at_k"):
                base = getattr(sl_rep, metric)
                val = getattr(dsl_rep, metric)
                imp = improvement_pct(base, val)
                rows.append(
                    {
                        "backbone": key[0],
                        "split": key[1],
                        "seed": key[2],
                        "bucket": bucket,
                        "metric": metric.split("_")[0],
                        "sl": base,
                        "dsl": val,
                        "improvement_pct": imp,
                    }
                )
    return rows


def report(records: list[RunRecord], out_dir: str | Path) -> list[Path]:
    """Aggregate finished runs into CSV tables plus rendered figures.

    Always writes metrics.csv, epoch_loss.csv, and summary.csv; adds the
    head/tail improvement table whenever a matching SL/DSL pair exists; and
    renders loss curves plus metric/improvement bar charts alongside.
    """
    if not records:
        raise ValueError("report needs at least one run record")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    path = out_dir / "metrics.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run_id", "split", "bucket", "metric", "k", "value", "users_evaluated", "seed"])
        for record in records:
            for rep in record.reports:
                for metric, value in (("recall", rep.recall_at_k), ("ndcg", rep.ndcg_at_k)):
                    writer.writerow(
                        [record.run_id, rep.split_kind, rep.bucket, metric, rep.k,
                         repr(value), rep.users_evaluated, record.config["seed"]]
                    )
    written.append(path)

    path = out_dir / "epoch_loss.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run_id", "epoch", "train_loss", "val_ndcg"])
        for record in records:
            for epoch, loss_value in enumerate(record.train_loss):
                val = repr(record.val_ndcg[epoch]) if epoch < len(record.val_ndcg) else ""
                writer.writerow([record.run_id, epoch, repr(loss_value), val])
    written.append(path)

    path = out_dir / "summary.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["run_id", "loss", "backbone", "split", "seed", "epochs_trained",
             "best_val_ndcg", "test_recall", "test_ndcg"]
        )
        for record in records:
            all_rep = record.report_for("all")
            writer.writerow(
                [record.run_id, record.config["loss"], record.config["backbone"],
                 record.config["split_kind"], record.config["seed"], len(record.train_loss),
                 repr(record.best_val_ndcg) if record.val_ndcg else "",
                 repr(all_rep.recall_at_k), repr(all_rep.ndcg_at_k)]
            )
    written.append(path)

    ht_rows = _head_tail_rows(records)
    if ht_rows:
        path = out_dir / "head_tail_improvement.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["backbone", "split", "seed", "bucket", "metric", "sl", "dsl", "improvement_pct"]
            )
            for row in ht_rows:
                imp = "" if row["improvement_pct"] is None else repr(row["improvement_pct"])
                writer.writerow(
                    [row["backbone"], row["split"], row["seed"], row["bucket"], row["metric"],
                     repr(row["sl"]), repr(row["dsl"]), imp]
                )
        written.append(path)

    written.append(
        figures.save_loss_curves({r.run_id: r.train_loss for r in records}, out_dir / "loss_curves.png")
    )
    val_curves = {r.run_id: r.val_ndcg for r in records if r.val_ndcg}
    if val_curves:
        written.append(figures.save_validation_curves(val_curves, out_dir / "val_ndcg.png"))
    if len({r.config["loss"] for r in records}) >= 2:
        bars = []
        for record in sorted(records, key=lambda r: r.run_id):
            rep = record.report_for("all")
            bars.append((f"{record.config['loss']} (s{record.config['seed']})", rep.recall_at_k, rep.ndcg_at_k))
        written.append(figures.save_metric_bars(bars, out_dir / "ablation.png", title="test metrics by loss"))
    if ht_rows:
        by_seed: dict = {}
        for row in ht_rows:
            if row["metric"] != "ndcg" or row["bucket"] not in ("head", "tail"):
                continue
            label = f"{row['backbone']}/s{row['seed']}"
            by_seed.setdefault(label, {})[row["bucket"]] = row["improvement_pct"]
        bars = [
            (label, vals.get("head") or 0.0, vals.get("tail") or 0.0)
            for label, vals in sorted(by_seed.items())
            if vals.get("head") is not None and vals.get("tail") is not None
        ]
        if bars:
            written.append(figures.save_head_tail_bars(bars, out_dir / "head_tail.png"))
    return written
