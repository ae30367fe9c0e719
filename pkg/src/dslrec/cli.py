"""Command-line interface: train, grid, ablate, evaluate, verify-theory, report."""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path

from .runner import (
    ExperimentConfig,
    grid_search,
    load_run_record,
    report,
    run_ablation,
    runs_root,
    train,
)
from .theory import format_check_table, run_theory_suite

_CONFIG_FIELDS = {f.name: f.type for f in fields(ExperimentConfig) if f.name != "grid"}
_INT_FIELDS = {"layers", "slate_size", "d", "batch_size", "epochs", "negatives", "eval_k", "seed"}
_FLOAT_FIELDS = {"tau", "beta", "alpha", "kappa_floor", "learning_rate", "weight_decay"}
_GRID_FLAGS = ("tau", "beta", "alpha", "learning_rate", "weight_decay")


def _coerce(name: str, raw: str):
    if name in _INT_FIELDS:
        return int(raw)
    if name in _FLOAT_FIELDS:
        return float(raw)
    return raw


def read_config_file(path: str | Path) -> dict:
    """Flat key=value config file; '#' starts a comment, grid_* keys take comma lists."""
    values: dict = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        key, value = key.strip(), value.strip()
        if key.startswith("grid_"):
            field_name = key[len("grid_"):]
            values.setdefault("grid", {})[field_name] = [
                _coerce(field_name, v) for v in value.split(",") if v
            ]
        elif key in _CONFIG_FIELDS:
            values[key] = _coerce(key, value)
        else:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
    return values


def _add_config_flags(parser: argparse.ArgumentParser, with_grid: bool = False) -> None:
    parser.add_argument("--config", help="flat key=value config file; flags override it")
    parser.add_argument("--out-dir", help=f"output root (default: $DSLREC_RUNS_DIR or ./runs)")
    parser.add_argument("--data", help="interaction file path, or synthetic:key=value,...")
    parser.add_argument("--data-format", dest="data_format", choices=["auto", "\t", ","],
                        help="column delimiter (default: auto)")
    parser.add_argument("--split", dest="split_kind", choices=["iid", "ood"])
    parser.add_argument("--backbone", choices=["mf", "graphconv"])
    parser.add_argument("--layers", type=int)
    parser.add_argument("--loss", choices=["bpr", "sl", "dsl", "dsl-kappa-only", "dsl-ca-only"])
    parser.add_argument("--tau", type=float)
    parser.add_argument("--beta", type=float)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--slate-size", dest="slate_size", type=int)
    parser.add_argument("--kappa-floor", dest="kappa_floor", type=float)
    parser.add_argument("--d", type=int, help="embedding dimension")
    parser.add_argument("--learning-rate", dest="learning_rate", type=float)
    parser.add_argument("--weight-decay", dest="weight_decay", type=float)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--negatives", type=int, help="negatives sampled per positive")
    parser.add_argument("--eval-k", dest="eval_k", type=int)
    parser.add_argument("--seed", type=int)
    if with_grid:
        for name in _GRID_FLAGS:
            parser.add_argument(
                f"--grid-{name.replace('_', '-')}",
                dest=f"grid_{name}",
                help=f"comma-separated {name} values to search",
            )


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    values: dict = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for name in _CONFIG_FIELDS:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    grid = dict(values.pop("grid", {}))
    for name in _GRID_FLAGS:
        raw = getattr(args, f"grid_{name}", None)
        if raw is not None:
            grid[name] = [_coerce(name, v) for v in raw.split(",") if v]
    return ExperimentConfig(grid=grid, **values)


def _print_reports(record) -> None:
    print(f"run {record.run_id} finished ({record.wall_clock:.1f}s, "
          f"{len(record.train_loss)} epochs)")
    for rep in record.reports:
        print(f"  {rep.bucket:>5}: Recall@{rep.k}={rep.recall_at_k:.4f} "
              f"NDCG@{rep.k}={rep.ndcg_at_k:.4f} (users={rep.users_evaluated})")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="dslrec",
        description="Train and evaluate implicit-feedback recommenders with the dual-scale softmax loss.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one training job")
    _add_config_flags(p_train)

    p_grid = sub.add_parser("grid", help="Cartesian hyperparameter search (IID only)")
    _add_config_flags(p_grid, with_grid=True)

    p_ablate = sub.add_parser("ablate", help="SL / CA-only / kappa-only / full runs sharing one seed")
    _add_config_flags(p_ablate)

    p_eval = sub.add_parser("evaluate", help="re-evaluate a finished run directory")
    p_eval.add_argument("run_dir", help="a runs/<run_id> directory")
    p_eval.add_argument("--eval-k", dest="eval_k", type=int, default=None)

    p_theory = sub.add_parser("verify-theory", help="run the robustness identity checks")
    p_theory.add_argument("--seed", type=int, default=0)
    p_theory.add_argument("--variational-instances", type=int, default=100)
    p_theory.add_argument("--simplex-trials", type=int, default=1000)
    p_theory.add_argument("--sandwich-instances", type=int, default=10_000)
    p_theory.add_argument("--rho-instances", type=int, default=50)
    p_theory.add_argument("--rank-catalogs", type=int, default=1000)

    p_report = sub.add_parser("report", help="aggregate run directories into tables and figures")
    p_report.add_argument("run_dirs", nargs="+", help="runs/<run_id> directories")
    p_report.add_argument("--out", required=True, help="report output directory")

    args = parser.parse_args(argv)

    if args.command == "train":
        record = train(build_config(args), out_root=args.out_dir)
        _print_reports(record)
        print(f"outputs: {record.out_dir}")
        return 0

    if args.command == "grid":
        config = build_config(args)
        records, best = grid_search(config, out_root=args.out_dir)
        print(f"searched {len(records)} cells; best by validation NDCG@{config.eval_k}:")
        _print_reports(best)
        print(f"outputs: {runs_root(args.out_dir) / ('grid_' + config.run_id())}")
        return 0

    if args.command == "ablate":
        config = build_config(args)
        records = run_ablation(config, out_root=args.out_dir)
        for record in records:
            _print_reports(record)
        print(f"outputs: {runs_root(args.out_dir) / ('ablation_' + config.run_id())}")
        return 0

    if args.command == "evaluate":
        from .runner import evaluate_run

        for rep in evaluate_run(args.run_dir, args.eval_k):
            print(f"  {rep.bucket:>5}: Recall@{rep.k}={rep.recall_at_k:.4f} "
                  f"NDCG@{rep.k}={rep.ndcg_at_k:.4f} (users={rep.users_evaluated})")
        return 0

    if args.command == "verify-theory":
        checks = run_theory_suite(
            seed=args.seed,
            variational_instances=args.variational_instances,
            simplex_trials=args.simplex_trials,
            sandwich_instances=args.sandwich_instances,
            rho_instances=args.rho_instances,
            rank_catalogs=args.rank_catalogs,
        )
        print(format_check_table(checks))
        return 0 if all(c.passed for c in checks) else 1

    if args.command == "report":
        records = [load_run_record(d) for d in args.run_dirs]
        written = report(records, args.out)
        for path in written:
            print(f"wrote {path}")
        return 0

    parser.error(f"unknown command {args.command!r}")
    return 2


if __name__ == "__main__":
    sys.exit(main())
