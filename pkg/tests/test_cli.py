"""CLI subcommands, flags, and exit codes."""

import json

import pytest

from repscope.cli import main
from repscope.pipeline import config_hash, load_config


def write_config(tmp_path, **overrides):
    raw = {
        "dataset": "synthetic_blobs",
        "architecture": "standard_cnn",
        "bn_variants": ["bn", "nbn"],
        "seeds": [0],
        "output_dir": str(tmp_path / "out"),
        "train": {
            "bn": {"batch_size": 32, "learning_rate": 0.01,
                   "nesterov_momentum": 0.9, "max_epochs": 6},
            "nbn": {"batch_size": 32, "learning_rate": 0.01,
                    "nesterov_momentum": 0.9, "max_epochs": 6},
        },
        "sparsity_sample_count": 48,
        "clustering_sample_count": 48,
        "analyzed_layers": [1, 5],
        "dataset_params": {"classes": 3, "train_per_class": 32,
                           "test_per_class": 4, "seed": 5},
    }
    raw.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(raw))
    return path


@pytest.fixture(scope="module")
def cli_run(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("cli")
    cfg_path = write_config(tmp_path)
    code = main(["all", "--config", str(cfg_path)])
    cfg = load_config(cfg_path)
    run_dir = tmp_path / "out" / f"run-{config_hash(cfg)}"
    return code, cfg_path, run_dir


class TestAll:
    def test_exit_zero(self, cli_run):
        code, _, _ = cli_run
        assert code == 0

    def test_outputs_exist(self, cli_run):
        _, _, run_dir = cli_run
        assert (run_dir / "sparsity.csv").exists()
        assert (run_dir / "clustering.csv").exists()
        assert (run_dir / "accuracy.csv").exists()
        assert (run_dir / "plotdata" / "layer_sparsity.csv").exists()

    def test_report_regenerates_plotdata(self, cli_run):
        code, cfg_path, run_dir = cli_run
        before = (run_dir / "plotdata" / "class_dbi.csv").read_bytes()
        assert main(["report", "--config", str(cfg_path)]) == 0
        after = (run_dir / "plotdata" / "class_dbi.csv").read_bytes()
        assert before == after

    def test_train_reuses_checkpoints(self, cli_run, capsys):
        _, cfg_path, _ = cli_run
        assert main(["train", "--config", str(cfg_path)]) == 0
        out = capsys.readouterr().out
        assert "stopped=" in out

    def test_sparsity_subcommand(self, cli_run):
        _, cfg_path, run_dir = cli_run
        assert main(["sparsity", "--config", str(cfg_path)]) == 0
        assert (run_dir / "sparsity.csv").exists()

    def test_cluster_subcommand(self, cli_run):
        _, cfg_path, run_dir = cli_run
        assert main(["cluster", "--config", str(cfg_path)]) == 0
        assert (run_dir / "clustering.csv").exists()

    def test_extract_writes_artn(self, cli_run):
        _, cfg_path, run_dir = cli_run
        assert main(["extract", "--config", str(cfg_path),
                     "--variant", "bn", "--layers", "1"]) == 0
        reps = run_dir / "representations"
        files = sorted(p.name for p in reps.glob("*.artn"))
        assert files == ["bn-seed0-layer1.artn"]
        from repscope.artn import read_tensor
        t = read_tensor(reps / files[0])
        assert t.source_tag == "post_relu"
        assert t.data.min() >= 0.0


class TestFlagsAndErrors:
    def test_missing_config_file_is_config_error(self, tmp_path):
        assert main(["all", "--config", str(tmp_path / "nope.json")]) == 2

    def test_invalid_json_is_config_error(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert main(["all", "--config", str(path)]) == 2

    def test_unknown_key_is_config_error(self, tmp_path):
        path = write_config(tmp_path, zzz=1)
        assert main(["all", "--config", str(path)]) == 2

    def test_bad_layers_flag_is_config_error(self, tmp_path):
        path = write_config(tmp_path)
        assert main(["train", "--config", str(path), "--layers", "one,two"]) == 2

    def test_missing_dataset_is_data_error(self, tmp_path, monkeypatch):
        monkeypatch.setenv("REPSCOPE_DATA_DIR", str(tmp_path / "nodata"))
        path = write_config(tmp_path, dataset="mnist")
        assert main(["all", "--config", str(path)]) == 3

    def test_report_before_run_is_data_error(self, tmp_path):
        path = write_config(tmp_path, seeds=[3])
        assert main(["report", "--config", str(path)]) == 3

    def test_divergence_exit_code(self, tmp_path):
        path = write_config(
            tmp_path, seeds=[1],
            bn_variants=["nbn"],
            train={"nbn": {"batch_size": 32, "learning_rate": 1e18,
                           "nesterov_momentum": 0.99, "max_epochs": 3}})
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            assert main(["train", "--config", str(path)]) == 4
            assert main(["all", "--config", str(path)]) == 4

    def test_seed_and_variant_filters(self, tmp_path):
        path = write_config(tmp_path, seeds=[0, 1])
        assert main(["train", "--config", str(path),
                     "--variant", "bn", "--seed", "1"]) == 0
        cfg = load_config(path)
        from dataclasses import replace
        narrowed = replace(cfg, seeds=(1,), bn_variants=("bn",))
        run_dir = tmp_path / "out" / f"run-{config_hash(narrowed)}"
        ckpts = sorted(p.name for p in (run_dir / "checkpoints").iterdir())
        assert ckpts == ["bn-seed1"]
