"""Command-line entry point.

Subcommands: train, extract, sparsity, cluster, report, all.
Exit codes: 0 success, 2 config error, 3 data error, 4 training divergence.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import artn
from .clustering import clustering_over_layers
from .errors import ConfigError, DataError, DivergenceError
from .nn.extraction import extract_representations
from .pipeline import (
    ClusterRecord,
    RunReport,
    SparsityRecord,
    aggregate_seeds,
    config_hash,
    derive_seed,
    emit_all_plot_data,
    load_config,
    load_splits,
    read_run_report,
    run_all,
    train_one,
    write_clustering_csv,
    write_sparsity_csv,
)
from .sparsity import sparsity_over_layers

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="repscope",
        description="Train CNNs with/without BatchNorm and measure "
                    "representational sparsity and cluster purity.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [
        ("train", "train the configured (variant, seed) matrix"),
        ("extract", "dump post-ReLU representations to ARTN files"),
        ("sparsity", "compute channel/layer sparsity CSV"),
        ("cluster", "compute class-based and class-agnostic purity CSV"),
        ("report", "aggregate seeds and emit plot data from existing CSVs"),
        ("all", "train, measure, aggregate, and emit plot data"),
    ]:
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="experiment JSON")
        p.add_argument("--seed", type=int, default=None,
                       help="restrict to one seed")
        p.add_argument("--variant", choices=["bn", "nbn"], default=None,
                       help="restrict to one variant")
        p.add_argument("--layers", default=None,
                       help="comma-separated 1-based analysis layers")
        p.add_argument("--out", default=None, help="override output_dir")
    return parser


def _effective_config(args):
    config = load_config(args.config)
    if args.out:
        config = replace(config, output_dir=args.out)
    if args.seed is not None:
        config = replace(config, seeds=(args.seed,))
    if args.variant is not None:
        config = replace(config, bn_variants=(args.variant,))
    if args.layers is not None:
        try:
            layers = tuple(int(x) for x in args.layers.split(","))
        except ValueError as exc:
            raise ConfigError(f"bad --layers value {args.layers!r}") from exc
        config = replace(config, analyzed_layers=layers)
    return config


def _run_dir(config) -> Path:
    return Path(config.output_dir) / f"run-{config_hash(config)}"


def _cmd_train(config) -> int:
    run_dir = _run_dir(config)
    run_dir.mkdir(parents=True, exist_ok=True)
    splits = load_splits(config)
    diverged = False
    for variant in config.bn_variants:
        for seed in config.seeds:
            try:
                model = train_one(config, variant, seed, splits, run_dir)
            except DivergenceError as exc:
                print(f"{variant} seed {seed}: diverged at epoch {exc.epoch}")
                diverged = True
                continue
            print(f"{variant} seed {seed}: stopped={model.stopped} "
                  f"epochs={len(model.history)} "
                  f"train_acc={model.final_train_acc:.4f}")
    return EXIT_DIVERGED if diverged else EXIT_OK


def _cmd_extract(config) -> int:
    run_dir = _run_dir(config)
    splits = load_splits(config)
    train_ds = splits[0]
    out = run_dir / "representations"
    out.mkdir(parents=True, exist_ok=True)
    for variant in config.bn_variants:
        for seed in config.seeds:
            model = train_one(config, variant, seed, splits, run_dir)
            relu = model.spec.relu_indices()
            ordinals = (config.analyzed_layer_list
                        or list(range(1, len(relu) + 1)))
            for ordinal in ordinals:
                tensor = extract_representations(
                    model, train_ds.images, relu[ordinal - 1],
                    batch_size=config.extraction_batch_size)
                path = out / f"{variant}-seed{seed}-layer{ordinal}.artn"
                artn.write_tensor(tensor, path)
                print(f"wrote {path}")
    return EXIT_OK


def _metrics_only(config, want_sparsity: bool, want_cluster: bool) -> int:
    run_dir = _run_dir(config)
    splits = load_splits(config)
    train_ds = splits[0]
    report = RunReport(run_dir.name, config_hash(config),
                       variants=config.bn_variants)
    diverged = False
    for variant in config.bn_variants:
        for seed in config.seeds:
            try:
                model = train_one(config, variant, seed, splits, run_dir)
            except DivergenceError as exc:
                print(f"{variant} seed {seed}: diverged at epoch {exc.epoch}")
                diverged = True
                continue
            if want_sparsity:
                for ordinal, ch, ls in sparsity_over_layers(
                        model, train_ds, config.sparsity_sample_count,
                        derive_seed(seed, "sparsity", variant),
                        layers=config.analyzed_layer_list,
                        batch_size=config.extraction_batch_size):
                    report.sparsity_records.append(SparsityRecord(
                        variant, seed, ordinal,
                        tuple(float(v) for v in ch.values), ls.value))
            if want_cluster:
                for rep in clustering_over_layers(
                        model, train_ds, config.clustering_sample_count,
                        derive_seed(seed, "clustering", variant),
                        layers=config.analyzed_layer_list,
                        batch_size=config.extraction_batch_size):
                    report.clustering_records.append(ClusterRecord(
                        variant, seed, rep.layer, rep.class_count_present,
                        rep.class_purity.dbi, rep.sweep.k_star,
                        rep.agnostic_purity.dbi, rep.sweep.best.inertia,
                        rep.dropped_rows))
    if want_sparsity:
        write_sparsity_csv(report, run_dir)
    if want_cluster:
        write_clustering_csv(report, run_dir)
    print(f"wrote metrics under {run_dir}")
    return EXIT_DIVERGED if diverged else EXIT_OK


def _cmd_report(config) -> int:
    run_dir = _run_dir(config)
    if not (run_dir / "manifest.json").exists():
        raise DataError(f"no completed run found under {run_dir}; "
                        "run `repscope all` first")
    report = read_run_report(run_dir)
    agg = aggregate_seeds(report)
    paths = emit_all_plot_data(agg, run_dir / "plotdata")
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


def _cmd_all(config) -> int:
    report = run_all(config)
    run_dir = Path(config.output_dir) / report.run_id
    print(f"run {report.run_id}: {len(report.accuracy_records)} trained cells, "
          f"{len(report.divergences)} diverged; reports under {run_dir}")
    return EXIT_DIVERGED if report.divergences else EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        config = _effective_config(args)
        if args.command == "train":
            return _cmd_train(config)
        if args.command == "extract":
            return _cmd_extract(config)
        if args.command == "sparsity":
            return _metrics_only(config, True, False)
        if args.command == "cluster":
            return _metrics_only(config, False, True)
        if args.command == "report":
            return _cmd_report(config)
        if args.command == "all":
            return _cmd_all(config)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
