import json

import numpy as np
import pytest

from adequacy_lab import adequacy, cli, traces
from adequacy_lab.cli import main


def write_trace_fixture(tmp_path, seed=0, n_train=40, n_eval=15, d=3, cc=2):
    rng = np.random.default_rng(seed)

    def build(split, n):
        return traces.from_arrays(split, cc, rng.normal(size=(n, d)),
                                  rng.integers(0, cc, size=n),
                                  rng.integers(0, cc, size=n))

    train = build("train", n_train)
    eval_ = build("test", n_eval)
    train_path = tmp_path / "train.lstr"
    eval_path = tmp_path / "eval.lstr"
    train_path.write_bytes(traces.write_traces(train))
    eval_path.write_bytes(traces.write_traces(eval_))
    return train, eval_, train_path, eval_path


TINY_CONFIG = {
    "dataset": {"params": {"classes": 3, "samples": 120, "spread": 0.05}},
    "train": {"epochs": 6},
    "fuzz": {"criteria": ["nc"], "max_iterations": 40},
    "sweep_ks": [50, 100],
    "validity": {"epochs": 15},
    "bench": {"n_train": 150, "n_eval": 40, "latent_dim": 4,
              "worker_counts": [2], "repeats": 3},
    "mutants": [
        {"operator": "increase_lr", "seed": 11},
        {"operator": "change_labels", "params": {"percent": 20}, "seed": 12},
        {"operator": "change_labels", "params": {"percent": 60}, "seed": 13},
        {"operator": "add_training_noise", "params": {"fraction": 0.6}, "seed": 14},
        {"operator": "make_classes_overlap", "params": {"fraction": 0.8}, "seed": 15},
        {"operator": "decrease_lr", "seed": 16},
    ],
}


def write_config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(TINY_CONFIG))
    return str(path)


class TestArgHandling:
    def test_no_command_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    def test_unknown_command_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_bad_choice_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["fuzz", "--criterion", "magic"])
        assert exc.value.code == 2

    def test_missing_file_exits_3(self, tmp_path, capsys):
        code = main(["lscd", "--train", str(tmp_path / "nope.lstr"),
                     "--eval", str(tmp_path / "nope2.lstr")])
        assert code == 3
        err = json.loads(capsys.readouterr().err)
        assert err["type"] == "missing_file"

    def test_corrupt_trace_file_exits_4(self, tmp_path, capsys):
        bad = tmp_path / "bad.lstr"
        bad.write_bytes(b"NOPE" + b"\x00" * 40)
        _, _, _, eval_path = write_trace_fixture(tmp_path)
        code = main(["lscd", "--train", str(bad), "--eval", str(eval_path)])
        assert code == 4
        err = json.loads(capsys.readouterr().err)
        assert err["type"] == "bad_input"

    def test_workers_default_from_env(self, monkeypatch):
        monkeypatch.setenv("ADEQUACY_LAB_THREADS", "6")
        assert cli._default_workers() == 6
        monkeypatch.setenv("ADEQUACY_LAB_THREADS", "garbage")
        assert cli._default_workers() == 1
        monkeypatch.delenv("ADEQUACY_LAB_THREADS")
        assert cli._default_workers() == 1


class TestTracesCommand:
    def test_binary_to_csv_and_back(self, tmp_path, capsys):
        train, _, train_path, _ = write_trace_fixture(tmp_path)
        csv_path = tmp_path / "train.csv"
        assert main(["traces", "--in", str(train_path), "--out", str(csv_path),
                     "--format", "binary"]) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["records"] == len(train)
        back_path = tmp_path / "back.lstr"
        assert main(["traces", "--in", str(csv_path), "--out", str(back_path),
                     "--format", "csv", "--split", "train",
                     "--class-count", "2"]) == 0
        restored = traces.read_traces(back_path.read_bytes())
        np.testing.assert_allclose(restored.latent_matrix(), train.latent_matrix(),
                                   rtol=1e-7)
        np.testing.assert_array_equal(restored.labels("ground_truth"),
                                      train.labels("ground_truth"))


class TestLscdCommand:
    def test_matches_library(self, tmp_path, capsys):
        train, eval_, train_path, eval_path = write_trace_fixture(tmp_path)
        assert main(["lscd", "--train", str(train_path),
                     "--eval", str(eval_path)]) == 0
        doc = json.loads(capsys.readouterr().out)
        expected = adequacy.lscd_per_class(eval_, adequacy.compute_centroids(train))
        assert doc["aggregate"] == pytest.approx(expected.aggregate)
        assert doc["metric"] == "lscd"

    def test_writes_artifact(self, tmp_path, capsys):
        _, _, train_path, eval_path = write_trace_fixture(tmp_path)
        out = tmp_path / "out"
        assert main(["lscd", "--train", str(train_path), "--eval", str(eval_path),
                     "--out-dir", str(out)]) == 0
        saved = json.loads((out / "lscd.json").read_text())
        assert saved == json.loads(capsys.readouterr().out)


class TestDscCommand:
    def test_worker_counts_agree(self, tmp_path, capsys):
        _, _, train_path, eval_path = write_trace_fixture(tmp_path, n_train=80,
                                                          n_eval=30)
        args = ["dsc", "--train", str(train_path), "--eval", str(eval_path),
                "--k", "50", "--upper-bound", "2.0"]
        assert main(args + ["--workers", "1"]) == 0
        single = json.loads(capsys.readouterr().out)
        assert main(args + ["--workers", "3"]) == 0
        multi = json.loads(capsys.readouterr().out)
        assert single == multi
        assert single["config"]["bucket_count"] == 50


class TestTrainCommand:
    def test_writes_model_and_traces(self, tmp_path, capsys):
        out = tmp_path / "out"
        cfg = write_config(tmp_path)
        assert main(["train", "--config", cfg, "--seed", "1",
                     "--out-dir", str(out)]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["train_accuracy"] > 0.5
        assert (out / "model.lmdl").exists()
        ts = traces.read_traces((out / "train.lstr").read_bytes())
        assert ts.split_tag == "train"
        assert ts.class_count == 3


class TestFuzzCommand:
    def test_summary_fields(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        assert main(["fuzz", "--config", cfg, "--criterion", "kmnc",
                     "--iterations", "60", "--seed", "2"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["criterion"] == "kmnc"
        assert doc["iterations"] == 60
        assert 0.0 <= doc["final_coverage"] <= 1.0


class TestValidateCommand:
    def test_test_split_mostly_valid(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        assert main(["validate", "--config", cfg, "--epsilon", "0.001",
                     "--seed", "3"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["epsilon"] == 0.001
        assert doc["validity_pct"] > 50.0


class TestCorrelateCommand:
    def test_from_study_json(self, tmp_path, capsys):
        rng = np.random.default_rng(4)
        records = []
        for i in range(10):
            ms = rng.uniform(0, 1)
            records.append({"mutant_id": f"m{i}",
                            "accuracy": 1.0 - ms + rng.normal(0, 0.02),
                            "dsc": 0.2 + 0.6 * ms + rng.normal(0, 0.02),
                            "lscd": 1.0 + ms, "mutation_score": ms})
        study_path = tmp_path / "study.json"
        study_path.write_text(json.dumps({"records": records}))
        assert main(["correlate", "--study", str(study_path)]) == 0
        doc = json.loads(capsys.readouterr().out)
        pairs = {c["pair"]: c for c in doc["correlations"]}
        assert pairs["accuracy_vs_ms"]["r"] < -0.9
        assert pairs["accuracy_vs_ms"]["significant"] is True


class TestBenchCommand:
    def test_synthetic_bench(self, tmp_path, capsys):
        assert main(["bench", "--n-train", "200", "--n-eval", "40",
                     "--latent-dim", "4", "--workers", "2", "--seed", "5"]) == 0
        doc = json.loads(capsys.readouterr().out)
        modes = [(t["metric"], t["mode"]) for t in doc["timing"]]
        assert ("lscd", "single_thread") in modes
        assert ("dsc", "multi_thread") in modes


class TestPipelineCommand:
    def test_report_bytes_deterministic(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        out1, out2 = tmp_path / "run1", tmp_path / "run2"
        assert main(["pipeline", "--config", cfg, "--seed", "6",
                     "--out-dir", str(out1), "--workers", "1"]) == 0
        capsys.readouterr()
        assert main(["pipeline", "--config", cfg, "--seed", "6",
                     "--out-dir", str(out2), "--workers", "2"]) == 0
        capsys.readouterr()
        assert (out1 / "report.txt").read_bytes() == (out2 / "report.txt").read_bytes()
        assert (out1 / "report.json").read_bytes() == \
            (out2 / "report.json").read_bytes()
        assert (out1 / "study.csv").read_bytes() == (out2 / "study.csv").read_bytes()
        for name in ("model.lmdl", "train.lstr", "test.lstr", "timing.json",
                     "study_scatter.png", "coverage_history.png", "timing.png"):
            assert (out1 / name).exists(), name
