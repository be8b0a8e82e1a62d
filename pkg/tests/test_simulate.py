import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from ggcal.cli import main
from ggcal.errors import ConfigError
from ggcal.simulate import (
    SimConfig,
    config_from_dict,
    load_config,
    run_analysis,
    run_fed,
    run_longtail,
)
from ggcal.synth import SynthSpec, synth_train_test
from ggcal.container import save_container
from ggcal.training import TrainConfig, evaluate, init_params, train


def small_fed_dict(out_dir, **over):
    cfg = {
        "mode": "fed_single_domain",
        "out": str(out_dir),
        "synth": {"num_classes": 4, "dim": 6, "samples_per_class": 30, "seed": 0},
        "synth_test_per_class": 20,
        "rounds": 2,
        "seeds": [0],
        "hidden_dim": 0,
        "partition": {"kind": "dirichlet_label_skew", "num_clients": 2, "beta": 0.5},
        "augment": {"target_count_per_class": 40},
        "trainer": {"learning_rate": 0.05, "batch_size": 32},
    }
    cfg.update(over)
    return cfg


class TestConfigParsing:
    def test_minimal_dict(self, tmp_path):
        cfg = config_from_dict(small_fed_dict(tmp_path))
        assert cfg.mode == "fed_single_domain"
        assert cfg.rounds == 2
        assert cfg.partition_spec.num_clients == 2

    def test_missing_mode(self):
        with pytest.raises(ConfigError, match="mode"):
            config_from_dict({"synth": {"num_classes": 2}})

    def test_unknown_mode(self, tmp_path):
        with pytest.raises(ConfigError):
            config_from_dict(small_fed_dict(tmp_path, mode="mystery"))

    def test_unknown_key_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown config keys"):
            config_from_dict(small_fed_dict(tmp_path, typo_key=1))

    def test_unknown_arm(self, tmp_path):
        with pytest.raises(ConfigError):
            config_from_dict(small_fed_dict(tmp_path, arms=["baseline", "magic"]))

    def test_longtail_needs_kb(self):
        with pytest.raises(ConfigError, match="knowledge base"):
            SimConfig(mode="longtail", train_path="x.geob")

    def test_data_source_required(self):
        with pytest.raises(ConfigError):
            SimConfig(mode="fed_single_domain")

    def test_load_yaml_file(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text(
            "mode: analysis\n"
            "out: " + str(tmp_path / "out") + "\n"
            "synth: {num_classes: 3, dim: 4, samples_per_class: 20, seed: 1}\n"
            "subsample_sizes: [5, 10]\n"
            "stability_trials: 3\n"
        )
        cfg = load_config(path)
        assert cfg.mode == "analysis"
        assert cfg.subsample_sizes == (5, 10)

    def test_load_json_file(self, tmp_path):
        # JSON is valid YAML, so the same loader takes both
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(small_fed_dict(tmp_path / "out")))
        assert load_config(path).mode == "fed_single_domain"

    def test_non_mapping_rejected(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text("- just\n- a\n- list\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_bad_nested_section(self, tmp_path):
        with pytest.raises(ConfigError):
            config_from_dict(
                small_fed_dict(tmp_path, trainer={"learning_rate": -1.0})
            )


class TestRunFed:
    def test_writes_expected_tree(self, tmp_path):
        cfg = config_from_dict(small_fed_dict(tmp_path / "run"))
        results = run_fed(cfg)
        for name in ("rounds.csv", "report.json", "manifest.json"):
            assert (tmp_path / "run" / name).exists()
        assert set(results) == {0}
        assert set(results[0]) == {"baseline", "ggeur"}
        assert all(len(accs) == 2 for accs in results[0].values())

    def test_byte_identical_reruns(self, tmp_path):
        trees = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            run_fed(config_from_dict(small_fed_dict(out)))
            trees.append(
                {p.name: p.read_bytes() for p in sorted(out.iterdir())}
            )
        assert trees[0] == trees[1]

    def test_single_client_single_round_matches_centralized(self, tmp_path):
        seed = 0
        cfg = config_from_dict(
            small_fed_dict(
                tmp_path / "run",
                rounds=1,
                arms=["baseline"],
                partition={"kind": "fixed_assignment", "num_clients": 1},
            )
        )
        results = run_fed(cfg)
        fed_acc = results[seed]["baseline"][0]

        spec = replace(cfg.synth, seed=cfg.synth.seed + seed)
        train_set, test_set, _ = synth_train_test(spec, cfg.synth_test_per_class)
        tc = replace(cfg.trainer, epochs=cfg.local_epochs, seed=seed * 1_000_003)
        params = train(
            train_set,
            tc,
            init_params(train_set.dim, cfg.hidden_dim, train_set.num_classes, seed),
        )
        central_acc = evaluate(params, test_set).top1_overall
        assert fed_acc == pytest.approx(central_acc)

    def test_report_final5_mean_matches_rounds(self, tmp_path):
        out = tmp_path / "run"
        cfg = config_from_dict(small_fed_dict(out, rounds=6))
        results = run_fed(cfg)
        report = json.loads((out / "report.json").read_text())
        for arm, accs in results[0].items():
            assert report["0"][arm]["final5_mean"] == pytest.approx(
                float(np.mean(accs[-5:]))
            )
            assert report["0"][arm]["final_round"] == pytest.approx(accs[-1])


class TestRunLongtail:
    def test_writes_report(self, tmp_path):
        out = tmp_path / "lt"
        cfg = config_from_dict(
            {
                "mode": "longtail",
                "out": str(out),
                "synth": {
                    "num_classes": 4,
                    "dim": 6,
                    "samples_per_class": 60,
                    "seed": 3,
                },
                "synth_test_per_class": 20,
                "seeds": [0],
                "hidden_dim": 0,
                "partition": {
                    "kind": "longtail_exponential",
                    "num_clients": 1,
                    "imbalance_factor": 10.0,
                },
                "trainer": {"learning_rate": 0.05, "epochs": 3},
            }
        )
        results = run_longtail(cfg)
        report = json.loads((out / "report.json").read_text())
        assert set(report["0"]) == {"baseline", "ggeur"}
        assert "top1_overall" in report["0"]["ggeur"]
        assert results[0]["ggeur"]["band_accuracy"].keys() == {
            "head",
            "middle",
            "tail",
        }


class TestRunAnalysis:
    def analysis_cfg(self, tmp_path, train_path):
        return config_from_dict(
            {
                "mode": "analysis",
                "out": str(tmp_path / "out"),
                "train": str(train_path),
                "m": 2,
                "subsample_sizes": [5, 10],
                "stability_trials": 3,
            }
        )

    def test_self_analysis_tables(self, tmp_path):
        spec = SynthSpec(num_classes=3, dim=5, samples_per_class=40, seed=7)
        train_set, _, _ = synth_train_test(spec, 10)
        train_path = tmp_path / "train.geob"
        save_container(train_set, train_path)
        cfg = self.analysis_cfg(tmp_path, train_path)
        tables = run_analysis(cfg)
        assert set(tables) == {
            "consistency.csv",
            "stability.csv",
            "size_ratio.csv",
            "cross_domain_similarity.csv",
        }
        # self-comparison: every class matches itself with similarity == m,
        # and the size ratio against itself is exactly 1
        for line in tables["size_ratio.csv"].strip().split("\n")[1:]:
            rc, cc, ratio = line.split(",")
            assert rc == cc
            assert float(ratio) == pytest.approx(1.0)
        for line in tables["consistency.csv"].strip().split("\n")[1:]:
            rc, rank, cc, cos, ss = line.split(",")
            if rc == cc:  # class compared against itself
                assert float(cos) == pytest.approx(1.0)
                assert float(ss) == pytest.approx(cfg.m)
                assert rank == "1"  # self is the nearest candidate

    def test_files_written(self, tmp_path):
        spec = SynthSpec(num_classes=3, dim=5, samples_per_class=40, seed=8)
        train_set, _, _ = synth_train_test(spec, 10)
        train_path = tmp_path / "train.geob"
        save_container(train_set, train_path)
        cfg = self.analysis_cfg(tmp_path, train_path)
        run_analysis(cfg)
        out = tmp_path / "out"
        assert (out / "consistency.csv").exists()
        assert (out / "stability.csv").exists()
        assert (out / "manifest.json").exists()


class TestCli:
    def test_simulate_requires_config(self):
        assert main(["simulate"]) == 2

    def test_bad_config_exit_2(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("mode: nonsense\n")
        assert main(["simulate", "--config", str(path)]) == 2

    def test_missing_input_exit_1(self, tmp_path):
        code = main(
            ["partition", "--in", str(tmp_path / "nope.geob"), "--out", str(tmp_path)]
        )
        assert code == 1

    def test_full_pipeline(self, tmp_path, capsys):
        root = tmp_path
        assert (
            main(
                [
                    "synth",
                    "--out",
                    str(root / "data"),
                    "--classes",
                    "4",
                    "--dim",
                    "6",
                    "--per-class",
                    "40",
                ]
            )
            == 0
        )
        assert (
            main(
                [
                    "partition",
                    "--in",
                    str(root / "data" / "train.geob"),
                    "--out",
                    str(root / "clients"),
                    "--clients",
                    "2",
                    "--beta",
                    "1.0",
                ]
            )
            == 0
        )
        for k in range(2):
            assert (
                main(
                    [
                        "stats",
                        "--in",
                        str(root / "clients" / f"client_{k:03d}.geob"),
                        "--client-id",
                        str(k),
                        "--out",
                        str(root / f"c{k}.geou"),
                    ]
                )
                == 0
            )
        assert (
            main(
                [
                    "aggregate",
                    str(root / "c0.geou"),
                    str(root / "c1.geou"),
                    "--m",
                    "2",
                    "--out",
                    str(root / "bank.geos"),
                ]
            )
            == 0
        )
        assert (
            main(
                [
                    "augment",
                    "--in",
                    str(root / "clients" / "client_000.geob"),
                    "--bank",
                    str(root / "bank.geos"),
                    "--target",
                    "50",
                    "--out",
                    str(root / "aug.geob"),
                ]
            )
            == 0
        )
        assert (
            main(
                [
                    "match",
                    "--in",
                    str(root / "clients" / "client_000.geob"),
                    "--kb",
                    str(root / "data" / "train.geob"),
                    "--m",
                    "2",
                    "--out",
                    str(root / "match.csv"),
                ]
            )
            == 0
        )
        assert (
            main(
                [
                    "train",
                    "--in",
                    str(root / "aug.geob"),
                    "--test",
                    str(root / "data" / "test.geob"),
                    "--hidden-dim",
                    "0",
                    "--epochs",
                    "2",
                    "--out",
                    str(root / "model.geow"),
                ]
            )
            == 0
        )
        cfg_path = root / "sim.yaml"
        cfg_path.write_text(
            json.dumps(small_fed_dict(root / "sim_out", rounds=1))
        )
        assert main(["simulate", "--config", str(cfg_path)]) == 0
        ana_path = root / "ana.yaml"
        ana_path.write_text(
            json.dumps(
                {
                    "mode": "analysis",
                    "train": str(root / "data" / "train.geob"),
                    "m": 2,
                    "subsample_sizes": [5],
                    "stability_trials": 2,
                }
            )
        )
        assert main(["analyze", "--config", str(ana_path), "--out", str(root / "ana")]) == 0
        assert (root / "model.geow").exists()
        assert (root / "model.report.json").exists()
        assert (root / "sim_out" / "report.json").exists()
        assert (root / "ana" / "consistency.csv").exists()
