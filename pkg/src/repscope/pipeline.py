"""Experiment orchestration: the {BatchNorm, no-BatchNorm} x seeds matrix.

Runs training (or reuses checkpoints), collects sparsity and clustering
metrics per layer, and writes deterministic CSV reports plus per-figure
plot data. A fixed master seed yields byte-identical CSV and plot-data
files across repeated invocations on the same machine.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import artn
from .clustering import clustering_over_layers
from .datasets import load_cifar10, load_mnist, synthetic_blob_images
from .errors import ConfigError, DivergenceError
from .nn.network import (
    LayerSpec,
    Network,
    NetworkSpec,
    build_standard_cnn,
    build_vgg16,
)
from .nn.training import (
    EpochStats,
    TrainConfig,
    TrainedModel,
    evaluate_accuracy,
    train,
)
from .sparsity import sparsity_over_layers

DATASETS = ("mnist", "cifar10", "synthetic_blobs")
ARCHITECTURES = ("standard_cnn", "vgg16")
VARIANTS = ("bn", "nbn")
FIGURE_KINDS = ("layer_sparsity", "channel_sparsity", "class_dbi",
                "agnostic_dbi", "optimal_k", "accuracy")

DATA_DIR_ENV = "REPSCOPE_DATA_DIR"


def _fmt(x) -> str:
    """Fixed 9-significant-digit decimal formatting for cross-run diffs."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.9g}"


def derive_seed(master: int, *parts) -> int:
    """Splittable seed: stable hash of (master, component, ...)."""
    text = f"{master}|" + "|".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "little") % (2 ** 63)


def paper_train_config(architecture: str, variant: str) -> TrainConfig:
    """The published training recipe for each architecture and variant."""
    if architecture == "standard_cnn":
        return TrainConfig(batch_size=64, learning_rate=0.01,
                           lr_decay_factor=0.99, lr_decay_every_n_epochs=10,
                           nesterov_momentum=0.99, max_epochs=1000,
                           stop_rule="interpolation", optimizer="sgd_nesterov")
    if architecture == "vgg16":
        lr = 0.001 if variant == "bn" else 0.0001
        return TrainConfig(batch_size=64, learning_rate=lr,
                           lr_decay_factor=0.99, lr_decay_every_n_epochs=1,
                           max_epochs=300, stop_rule="early_stopping",
                           patience_fraction=0.2, optimizer="adam")
    raise ConfigError(f"unknown architecture {architecture!r}")


_CONFIG_KEYS = {
    "dataset", "architecture", "bn_variants", "seeds", "train",
    "sparsity_sample_count", "clustering_sample_count", "analyzed_layers",
    "output_dir", "train_subset", "val_fraction", "split_seed",
    "dataset_params", "extraction_batch_size",
}


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str
    architecture: str
    bn_variants: tuple[str, ...]
    seeds: tuple[int, ...]
    output_dir: str
    train: dict = field(default_factory=dict)  # variant -> TrainConfig
    sparsity_sample_count: int = 5000
    clustering_sample_count: int = 15000
    analyzed_layers: object = "all"  # "all" or tuple of 1-based ordinals
    train_subset: int | None = None
    val_fraction: float = 0.1
    split_seed: int = 7193
    dataset_params: dict = field(default_factory=dict)
    extraction_batch_size: int = 256

    def __post_init__(self):
        if self.dataset not in DATASETS:
            raise ConfigError(f"unknown dataset {self.dataset!r}")
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {self.architecture!r}")
        variants = tuple(self.bn_variants)
        if not variants or any(v not in VARIANTS for v in variants):
            raise ConfigError("bn_variants must be a non-empty subset of "
                              f"{VARIANTS}")
        seeds = tuple(int(s) for s in self.seeds)
        if not seeds:
            raise ConfigError("seeds must be non-empty")
        train = dict(self.train)
        for v in variants:
            if v not in train:
                train[v] = paper_train_config(self.architecture, v)
            elif not isinstance(train[v], TrainConfig):
                raise ConfigError("train entries must be TrainConfig values")
        if self.sparsity_sample_count < 1 or self.clustering_sample_count < 1:
            raise ConfigError("sample counts must be positive")
        if not 0 < self.val_fraction < 1:
            raise ConfigError("val_fraction must lie in (0, 1)")
        layers = self.analyzed_layers
        if layers != "all":
            layers = tuple(int(x) for x in layers)
            if not layers or min(layers) < 1:
                raise ConfigError("analyzed_layers must be 1-based ordinals")
        object.__setattr__(self, "bn_variants", variants)
        object.__setattr__(self, "seeds", seeds)
        object.__setattr__(self, "train", train)
        object.__setattr__(self, "analyzed_layers", layers)

    @property
    def analyzed_layer_list(self):
        return None if self.analyzed_layers == "all" else list(self.analyzed_layers)

    def canonical_dict(self) -> dict:
        """Semantic content only, for hashing; key order never matters."""
        d = {
            "dataset": self.dataset,
            "architecture": self.architecture,
            "bn_variants": list(self.bn_variants),
            "seeds": list(self.seeds),
            "train": {v: asdict(tc) for v, tc in sorted(self.train.items())},
            "sparsity_sample_count": self.sparsity_sample_count,
            "clustering_sample_count": self.clustering_sample_count,
            "analyzed_layers": (self.analyzed_layers if self.analyzed_layers == "all"
                                else list(self.analyzed_layers)),
            "train_subset": self.train_subset,
            "val_fraction": self.val_fraction,
            "split_seed": self.split_seed,
            "dataset_params": dict(sorted(self.dataset_params.items())),
            "extraction_batch_size": self.extraction_batch_size,
        }
        return d


def config_hash(config: ExperimentConfig) -> str:
    blob = json.dumps(config.canonical_dict(), sort_keys=True,
                      separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def config_from_dict(raw: dict) -> ExperimentConfig:
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in ("dataset", "architecture", "bn_variants", "seeds", "output_dir"):
        if key not in raw:
            raise ConfigError(f"missing required config key {key!r}")
    raw = dict(raw)
    train = {}
    for variant, tc in raw.pop("train", {}).items():
        if variant not in VARIANTS:
            raise ConfigError(f"train config for unknown variant {variant!r}")
        try:
            train[variant] = TrainConfig(**tc)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad train config for {variant!r}: {exc}") from exc
    try:
        return ExperimentConfig(train=train, **raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(raw)


# ----------------------------------------------------------------------
# Datasets and splits


def data_root() -> Path:
    return Path(os.environ.get(DATA_DIR_ENV, "data"))


def load_splits(config: ExperimentConfig):
    """(train, val, test) LabeledDatasets per the configured split policy.

    The validation split is carved from the train pool with the recorded
    split seed; the optional train subset is drawn from what remains. The
    same split serves every (variant, seed) run, mirroring the shared-data,
    varying-initialization design of the study.
    """
    if config.dataset == "mnist":
        pool, test = load_mnist(data_root() / "mnist")
    elif config.dataset == "cifar10":
        pool, test = load_cifar10(data_root() / "cifar10")
    else:
        params = dict(config.dataset_params)
        n_train = int(params.pop("train_per_class", 64))
        n_test = int(params.pop("test_per_class", 16))
        classes = int(params.pop("classes", 3))
        hw = int(params.pop("hw", 28))
        noise = float(params.pop("noise", 0.05))
        seed = int(params.pop("seed", 2024))
        if params:
            raise ConfigError(f"unknown dataset_params: {sorted(params)}")
        pool = synthetic_blob_images(n_train, classes, hw, noise, seed)
        test = synthetic_blob_images(n_test, classes, hw, noise, seed + 1)

    n = len(pool)
    target = config.train_subset if config.train_subset else None
    val_count = max(1, round(config.val_fraction * (target or n)))
    if (target or 0) + val_count > n:
        raise ConfigError(f"train_subset {target} plus validation {val_count} "
                          f"exceeds the {n}-sample pool")
    perm = np.random.default_rng(config.split_seed).permutation(n)
    val_idx = np.sort(perm[:val_count])
    train_idx = perm[val_count:]
    if target:
        train_idx = train_idx[:target]
    train_idx = np.sort(train_idx)
    return pool.subset(train_idx), pool.subset(val_idx), test


def build_architecture(config: ExperimentConfig, variant: str) -> NetworkSpec:
    with_bn = variant == "bn"
    if config.architecture == "standard_cnn":
        return build_standard_cnn(with_bn)
    return build_vgg16(with_bn)


# ----------------------------------------------------------------------
# Checkpoints


def save_checkpoint(model: TrainedModel, ckpt_dir: Path) -> None:
    """One ARTN file per array plus a JSON manifest (written last)."""
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    arrays = model.network.param_arrays()
    for name, arr in arrays.items():
        artn.write_array(arr, ckpt_dir / f"{name}.artn")
    manifest = {
        "spec": {
            "name": model.spec.name,
            "input_shape": list(model.spec.input_shape),
            "layers": [asdict(ls) for ls in model.spec.layers],
        },
        "shapes": {name: list(arr.shape) for name, arr in arrays.items()},
        "seed": model.seed,
        "config": asdict(model.config),
        "stopped": model.stopped,
        "final_train_acc": model.final_train_acc,
        "history": [asdict(h) for h in model.history],
    }
    (ckpt_dir / "manifest.json").write_text(json.dumps(manifest, indent=1))


def load_checkpoint(ckpt_dir: Path) -> TrainedModel:
    manifest = json.loads((ckpt_dir / "manifest.json").read_text())
    spec = NetworkSpec(
        tuple(manifest["spec"]["input_shape"]),
        tuple(LayerSpec(**ls) for ls in manifest["spec"]["layers"]),
        manifest["spec"]["name"],
    )
    config = TrainConfig(**manifest["config"])
    network = Network(spec, seed=0)
    for name, arr in network.param_arrays().items():
        loaded, _ = artn.read_array(ckpt_dir / f"{name}.artn")
        arr[...] = loaded.astype(arr.dtype)
    model = TrainedModel(network=network, spec=spec, config=config,
                         seed=manifest["seed"],
                         history=[EpochStats(**h) for h in manifest["history"]],
                         stopped=manifest["stopped"],
                         final_train_acc=manifest["final_train_acc"])
    return model


def has_checkpoint(ckpt_dir: Path) -> bool:
    return (ckpt_dir / "manifest.json").exists()


# ----------------------------------------------------------------------
# Run records


@dataclass(frozen=True)
class SparsityRecord:
    variant: str
    seed: int
    layer: int
    channel_values: tuple
    layer_value: float


@dataclass(frozen=True)
class ClusterRecord:
    variant: str
    seed: int
    layer: int
    class_k: int
    class_dbi: float
    k_star: int
    agnostic_dbi: float
    inertia: float
    dropped_rows: int


@dataclass(frozen=True)
class AccuracyRecord:
    variant: str
    seed: int
    train_acc: float
    val_acc: float
    test_acc: float
    epochs: int
    stopped: str


@dataclass
class RunReport:
    run_id: str
    config_hash: str
    sparsity_records: list = field(default_factory=list)
    clustering_records: list = field(default_factory=list)
    accuracy_records: list = field(default_factory=list)
    divergences: list = field(default_factory=list)
    wall_seconds: float = 0.0
    variants: tuple = ()


# ----------------------------------------------------------------------
# The experiment itself


def train_one(config: ExperimentConfig, variant: str, seed: int,
              splits=None, run_dir: Path | None = None) -> TrainedModel:
    """Train (or load) the model for one (variant, seed) cell."""
    if splits is None:
        splits = load_splits(config)
    train_ds, val_ds, _ = splits
    if run_dir is not None:
        ckpt = run_dir / "checkpoints" / f"{variant}-seed{seed}"
        if has_checkpoint(ckpt):
            return load_checkpoint(ckpt)
    spec = build_architecture(config, variant)
    tc = replace(config.train[variant], seed=derive_seed(seed, "train", variant))
    model = train(spec, train_ds, val_ds, tc)
    if run_dir is not None:
        save_checkpoint(model, run_dir / "checkpoints" / f"{variant}-seed{seed}")
    return model


def run_experiment(config: ExperimentConfig) -> RunReport:
    """Execute the full run matrix and write CSV reports plus a manifest.

    Training divergence in one cell is recorded and the remaining cells
    continue; a missing dataset is fatal.
    """
    t0 = time.monotonic()
    chash = config_hash(config)
    run_id = f"run-{chash}"
    run_dir = Path(config.output_dir) / run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    splits = load_splits(config)
    train_ds, val_ds, test_ds = splits
    _check_sample_counts(config, len(train_ds))

    report = RunReport(run_id, chash, variants=config.bn_variants)
    reused = {}
    for variant in config.bn_variants:
        for seed in config.seeds:
            cell = f"{variant}-seed{seed}"
            ckpt = run_dir / "checkpoints" / cell
            reused[cell] = has_checkpoint(ckpt)
            try:
                model = train_one(config, variant, seed, splits, run_dir)
            except DivergenceError as exc:
                report.divergences.append(
                    {"variant": variant, "seed": seed, "epoch": exc.epoch})
                continue
            _collect_cell(config, report, model, variant, seed,
                          train_ds, val_ds, test_ds)

    report.wall_seconds = time.monotonic() - t0
    write_report_csvs(report, run_dir)
    _write_manifest(config, report, run_dir, reused)
    return report


def _check_sample_counts(config: ExperimentConfig, train_size: int):
    if config.sparsity_sample_count > train_size:
        raise ConfigError(f"sparsity_sample_count {config.sparsity_sample_count} "
                          f"exceeds the {train_size}-sample training split")
    if config.clustering_sample_count > train_size:
        raise ConfigError(f"clustering_sample_count "
                          f"{config.clustering_sample_count} exceeds the "
                          f"{train_size}-sample training split")


def _collect_cell(config, report, model, variant, seed,
                  train_ds, val_ds, test_ds):
    net = model.network
    report.accuracy_records.append(AccuracyRecord(
        variant=variant, seed=seed,
        train_acc=evaluate_accuracy(net, train_ds.images.data, train_ds.labels),
        val_acc=evaluate_accuracy(net, val_ds.images.data, val_ds.labels),
        test_acc=evaluate_accuracy(net, test_ds.images.data, test_ds.labels),
        epochs=len(model.history), stopped=model.stopped))

    layers = config.analyzed_layer_list
    for ordinal, ch, ls in sparsity_over_layers(
            model, train_ds, config.sparsity_sample_count,
            derive_seed(seed, "sparsity", variant), layers=layers,
            batch_size=config.extraction_batch_size):
        report.sparsity_records.append(SparsityRecord(
            variant=variant, seed=seed, layer=ordinal,
            channel_values=tuple(float(v) for v in ch.values),
            layer_value=ls.value))

    for rep in clustering_over_layers(
            model, train_ds, config.clustering_sample_count,
            derive_seed(seed, "clustering", variant), layers=layers,
            batch_size=config.extraction_batch_size):
        report.clustering_records.append(ClusterRecord(
            variant=variant, seed=seed, layer=rep.layer,
            class_k=rep.class_count_present,
            class_dbi=rep.class_purity.dbi,
            k_star=rep.sweep.k_star,
            agnostic_dbi=rep.agnostic_purity.dbi,
            inertia=rep.sweep.best.inertia,
            dropped_rows=rep.dropped_rows))


def _write_manifest(config, report, run_dir, reused):
    manifest = {
        "run_id": report.run_id,
        "config_hash": report.config_hash,
        "config": config.canonical_dict(),
        "data_dir": str(data_root()),
        "pixel_scaling": "bytes / 255, no mean/std normalization",
        "checkpoints_reused": reused,
        "divergences": report.divergences,
        "wall_seconds": report.wall_seconds,
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=1))


# ----------------------------------------------------------------------
# CSV emission and re-ingestion


def write_sparsity_csv(report: RunReport, run_dir: Path) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    with open(run_dir / "sparsity.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run_id", "seed", "bn_flag", "layer", "channel_index",
                    "sparsity"])
        for r in sorted(report.sparsity_records,
                        key=lambda r: (r.variant, r.seed, r.layer)):
            for c, v in enumerate(r.channel_values):
                w.writerow([report.run_id, r.seed, r.variant, r.layer, c,
                            _fmt(v)])
            w.writerow([report.run_id, r.seed, r.variant, r.layer, "layer",
                        _fmt(r.layer_value)])


def write_clustering_csv(report: RunReport, run_dir: Path) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    with open(run_dir / "clustering.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run_id", "seed", "bn_flag", "layer", "mode", "k", "dbi",
                    "k_star", "inertia", "dropped_rows"])
        for r in sorted(report.clustering_records,
                        key=lambda r: (r.variant, r.seed, r.layer)):
            w.writerow([report.run_id, r.seed, r.variant, r.layer,
                        "class_based", r.class_k, _fmt(r.class_dbi), "", "",
                        r.dropped_rows])
            w.writerow([report.run_id, r.seed, r.variant, r.layer,
                        "class_agnostic", r.k_star, _fmt(r.agnostic_dbi),
                        r.k_star, _fmt(r.inertia), r.dropped_rows])


def write_accuracy_csv(report: RunReport, run_dir: Path) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    with open(run_dir / "accuracy.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run_id", "variant", "seed", "train_acc", "val_acc",
                    "test_acc", "epochs", "stopped"])
        for r in sorted(report.accuracy_records,
                        key=lambda r: (r.variant, r.seed)):
            w.writerow([report.run_id, r.variant, r.seed, _fmt(r.train_acc),
                        _fmt(r.val_acc), _fmt(r.test_acc), r.epochs, r.stopped])


def write_report_csvs(report: RunReport, run_dir: Path) -> None:
    write_sparsity_csv(report, run_dir)
    write_clustering_csv(report, run_dir)
    write_accuracy_csv(report, run_dir)


def read_run_report(run_dir: Path) -> RunReport:
    """Rebuild a RunReport from its CSV files (for the report stage)."""
    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / "manifest.json").read_text())
    report = RunReport(manifest["run_id"], manifest["config_hash"],
                       divergences=manifest.get("divergences", []),
                       variants=tuple(manifest["config"]["bn_variants"]))
    by_key = {}
    with open(run_dir / "sparsity.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["bn_flag"], int(row["seed"]), int(row["layer"]))
            entry = by_key.setdefault(key, {"channels": {}, "layer": None})
            if row["channel_index"] == "layer":
                entry["layer"] = float(row["sparsity"])
            else:
                entry["channels"][int(row["channel_index"])] = float(row["sparsity"])
    for (variant, seed, layer), entry in by_key.items():
        channels = tuple(entry["channels"][c]
                         for c in sorted(entry["channels"]))
        report.sparsity_records.append(SparsityRecord(
            variant, seed, layer, channels, entry["layer"]))
    cluster_key = {}
    with open(run_dir / "clustering.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["bn_flag"], int(row["seed"]), int(row["layer"]))
            entry = cluster_key.setdefault(key, {})
            entry[row["mode"]] = row
    for (variant, seed, layer), entry in cluster_key.items():
        cb, ca = entry["class_based"], entry["class_agnostic"]
        report.clustering_records.append(ClusterRecord(
            variant, seed, layer, int(cb["k"]), float(cb["dbi"]),
            int(ca["k_star"]), float(ca["dbi"]), float(ca["inertia"]),
            int(cb["dropped_rows"])))
    with open(run_dir / "accuracy.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            report.accuracy_records.append(AccuracyRecord(
                row["variant"], int(row["seed"]), float(row["train_acc"]),
                float(row["val_acc"]), float(row["test_acc"]),
                int(row["epochs"]), row["stopped"]))
    return report


# ----------------------------------------------------------------------
# Cross-seed aggregation and plot data


@dataclass(frozen=True)
class AggregateRecord:
    variant: str
    layer: object  # int or "" for accuracy metrics
    metric: str
    index: object  # channel int, accuracy split name, or ""
    mean: float
    std: float
    n: int


@dataclass(frozen=True)
class AggregateReport:
    records: tuple


def _agg(values) -> tuple[float, float, int]:
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std(ddof=0)), len(arr)


def aggregate_seeds(report: RunReport) -> AggregateReport:
    """Mean and population standard deviation across seeds per metric."""
    groups = {}

    def add(variant, layer, metric, index, value):
        groups.setdefault((variant, layer, metric, index), []).append(value)

    for r in report.sparsity_records:
        add(r.variant, r.layer, "layer_sparsity", "", r.layer_value)
        for c, v in enumerate(r.channel_values):
            add(r.variant, r.layer, "channel_sparsity", c, v)
    for r in report.clustering_records:
        add(r.variant, r.layer, "class_dbi", "", r.class_dbi)
        add(r.variant, r.layer, "agnostic_dbi", "", r.agnostic_dbi)
        add(r.variant, r.layer, "optimal_k", "", r.k_star)
    for r in report.accuracy_records:
        add(r.variant, "", "accuracy", "train", r.train_acc)
        add(r.variant, "", "accuracy", "val", r.val_acc)
        add(r.variant, "", "accuracy", "test", r.test_acc)

    def sort_key(kv):
        variant, layer, metric, index = kv[0]
        return (variant, metric, layer if isinstance(layer, int) else -1,
                index if isinstance(index, int) else -1, str(index))

    records = []
    for (variant, layer, metric, index), values in sorted(groups.items(),
                                                          key=sort_key):
        mean, std, n = _agg(values)
        records.append(AggregateRecord(variant, layer, metric, index,
                                       mean, std, n))
    return AggregateReport(tuple(records))


def emit_plot_data(agg: AggregateReport, figure_kind: str, out_dir) -> Path:
    """Write one columnar plot-data file for a figure analogue.

    Columns are x coordinates (layer, channel, or split) followed by
    ``<variant>_mean`` and ``<variant>_std`` per variant present.
    """
    if figure_kind not in FIGURE_KINDS:
        raise ConfigError(f"unknown figure_kind {figure_kind!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if figure_kind == "accuracy":
        metric, xcols = "accuracy", ("split",)
        def xkey(r):
            return (r.index,)
        order = {"train": 0, "val": 1, "test": 2}
        def xsort(x):
            return order.get(x[0], 9)
    elif figure_kind == "channel_sparsity":
        metric, xcols = "channel_sparsity", ("layer", "channel")
        def xkey(r):
            return (r.layer, r.index)
        def xsort(x):
            return x
    else:
        metric, xcols = figure_kind, ("layer",)
        def xkey(r):
            return (r.layer,)
        def xsort(x):
            return x

    rows = {}
    variants = []
    for r in agg.records:
        if r.metric != metric:
            continue
        if r.variant not in variants:
            variants.append(r.variant)
        rows.setdefault(xkey(r), {})[r.variant] = r
    variants = [v for v in VARIANTS if v in variants]

    path = out_dir / f"{figure_kind}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = list(xcols)
        for v in variants:
            header += [f"{v}_mean", f"{v}_std"]
        w.writerow(header)
        for x in sorted(rows, key=xsort):
            row = list(x)
            for v in variants:
                rec = rows[x].get(v)
                row += ["", ""] if rec is None else [_fmt(rec.mean), _fmt(rec.std)]
            w.writerow(row)
    return path


def emit_all_plot_data(agg: AggregateReport, out_dir) -> list[Path]:
    return [emit_plot_data(agg, kind, out_dir) for kind in FIGURE_KINDS]


def run_all(config: ExperimentConfig) -> RunReport:
    """Full pipeline: run matrix, aggregation, and every plot-data file."""
    report = run_experiment(config)
    agg = aggregate_seeds(report)
    run_dir = Path(config.output_dir) / report.run_id
    emit_all_plot_data(agg, run_dir / "plotdata")
    return report


def desk_scale_mnist_config(output_dir, seeds=(0, 1, 2, 3),
                            max_epochs: int = 200) -> ExperimentConfig:
    """Desk-scale reproduction config: 4000-sample MNIST subset, both
    variants, the published recipe capped at ``max_epochs``."""
    train = {
        v: replace(paper_train_config("standard_cnn", v),
                   max_epochs=max_epochs)
        for v in VARIANTS
    }
    return ExperimentConfig(
        dataset="mnist", architecture="standard_cnn",
        bn_variants=("bn", "nbn"), seeds=tuple(seeds),
        output_dir=str(output_dir), train=train,
        sparsity_sample_count=4000, clustering_sample_count=4000,
        train_subset=4000,
    )
