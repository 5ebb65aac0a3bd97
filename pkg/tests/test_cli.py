import csv
import datetime as dt
import json

import pytest

from routedmlp import data
from routedmlp.cli import load_config, main


@pytest.fixture
def synth_dir(tmp_path):
    """A directory with a small synthetic dataset split into train/test."""
    config = tmp_path / "config.ini"
    config.write_text(
        "[train]\nepochs = 3\n"
        "[synth]\nparticipants = 9\nclusters = 3\ndays = 30\n"
        "[grid]\nlearning_rates = 0.001,0.01\ndropout_rates = 0.0\n"
        "[tsne]\nperplexity = 8\niterations = 60\n"
    )
    assert run("synth", "--config", config, "--out-dir", tmp_path, "--seed", "1") == 0
    full = data.ingest_csv(tmp_path / "synth.csv").dataset
    split = dt.date(2021, 6, 28) + dt.timedelta(days=24)
    train, test = data.temporal_split(full, split)
    data.write_csv(train, tmp_path / "train.csv")
    data.write_csv(test, tmp_path / "test.csv")
    return tmp_path, config


def run(*argv):
    return main([str(a) for a in argv])


def read_manifest(out_dir, command):
    return json.loads((out_dir / f"manifest-{command}.json").read_text())


class TestConfig:
    def test_defaults(self):
        config = load_config(None)
        assert config["train"].getint("epochs") == 30
        assert config["grid"].get("learning_rates") == "0.001,0.005,0.01"

    def test_override_file(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[train]\nepochs = 7\n")
        config = load_config(str(path))
        assert config["train"].getint("epochs") == 7
        assert config["train"].getfloat("learning_rate") == 0.001  # default kept

    def test_missing_file(self):
        with pytest.raises(FileNotFoundError):
            load_config("/does/not/exist.ini")


class TestSynthAndIngest:
    def test_synth_outputs_and_manifest(self, synth_dir):
        out, _ = synth_dir
        assert (out / "synth.csv").exists()
        assert (out / "synth_truth.csv").exists()
        manifest = read_manifest(out, "synth")
        assert manifest["seed"] == 1
        assert manifest["command"] == "synth"
        assert any(p.endswith("synth.csv") for p in manifest["artifacts"])
        assert "wall_seconds" in manifest

    def test_ingest_counts_rejections(self, synth_dir, tmp_path):
        out, _ = synth_dir
        raw = (out / "synth.csv").read_text().splitlines()
        raw.append("P999,2021-06-28,X,0," + ",".join(["0.0"] * 20))
        bad = tmp_path / "raw.csv"
        bad.write_text("\n".join(raw) + "\n")
        ingest_out = tmp_path / "ingest"
        assert run("ingest", "--input", bad, "--out-dir", ingest_out) == 0
        manifest = read_manifest(ingest_out, "ingest")
        assert manifest["rows_rejected"] == 1
        assert (ingest_out / "dataset.csv").exists()

    def test_ingest_confirmed_days_expand(self, tmp_path):
        ds = data.Dataset.from_records(
            [
                data.Record(
                    "P000",
                    dt.date(2021, 6, 28) + dt.timedelta(days=i),
                    tuple([0.0] * 20),
                    0,
                    "F",
                )
                for i in range(10)
            ]
        )
        data.write_csv(ds, tmp_path / "raw.csv")
        (tmp_path / "confirmed.csv").write_text(
            "participant_id,date\nP000,2021-07-02\n"
        )
        assert (
            run(
                "ingest", "--input", tmp_path / "raw.csv",
                "--confirmed", tmp_path / "confirmed.csv",
                "--out-dir", tmp_path,
            )
            == 0
        )
        labeled = data.ingest_csv(tmp_path / "dataset.csv").dataset
        assert labeled.y.sum() == 7  # one confirmed day marks a 7-day window


class TestPipeline:
    def test_tune_train_evaluate(self, synth_dir):
        out, config = synth_dir
        common = ["--config", config, "--out-dir", out, "--seed", "2"]

        assert run("tune", "--train", out / "train.csv", "--folds", "2", *common) == 0
        grid = json.loads((out / "grid.json").read_text())
        assert len(grid["configs"]) == 2
        assert grid["chosen"] in grid["configs"]

        assert run("train", "--train", out / "train.csv", "--strategy", "feature2", *common) == 0
        model = json.loads((out / "model.json").read_text())
        assert model["spec"]["kind"] == "feature-clustered"

        assert (
            run(
                "evaluate", "--test", out / "test.csv", "--model", out / "model.json",
                "--strategy", "feature2", *common,
            )
            == 0
        )
        report = json.loads((out / "report.json").read_text())
        assert set(report["aggregate"]) == {"female", "male", "overall"}
        csv_lines = (out / "report.csv").read_text().splitlines()
        assert csv_lines[0].startswith("strategy,precision_female")
        assert len(csv_lines) == 2

    def test_evaluate_requires_train_or_model(self, synth_dir, capsys):
        out, config = synth_dir
        with pytest.raises(SystemExit) as exc:
            run("evaluate", "--test", out / "test.csv", "--out-dir", out)
        assert exc.value.code == 2

    def test_evaluate_resampling_protocol(self, synth_dir):
        out, config = synth_dir
        assert (
            run(
                "evaluate", "--train", out / "train.csv", "--test", out / "test.csv",
                "--runs", "2", "--config", config, "--out-dir", out, "--seed", "3",
            )
            == 0
        )
        report = json.loads((out / "report.json").read_text())
        assert len(report["runs"]) == 2

    def test_byte_identical_reruns(self, synth_dir, tmp_path):
        out, config = synth_dir
        contents = []
        for name in ("a", "b"):
            rerun = tmp_path / name
            assert (
                run(
                    "evaluate", "--train", out / "train.csv",
                    "--test", out / "test.csv", "--runs", "2",
                    "--config", config, "--out-dir", rerun, "--seed", "4",
                )
                == 0
            )
            contents.append(
                (
                    (rerun / "report.json").read_bytes(),
                    (rerun / "report.csv").read_bytes(),
                )
            )
        assert contents[0] == contents[1]

    def test_report_merges_tables(self, synth_dir):
        out, config = synth_dir
        common = ["--config", config, "--out-dir", out, "--seed", "2"]
        run(
            "evaluate", "--test", out / "test.csv", "--train", out / "train.csv",
            "--runs", "2", *common,
        )
        assert run("report", "--reports", out / "report.json", out / "report.json", *common) == 0
        lines = (out / "tables.csv").read_text().splitlines()
        assert len(lines) == 3
        md = (out / "tables.md").read_text()
        assert md.count("\n") >= 4


class TestClusterAndTsne:
    def test_cluster_features(self, synth_dir):
        out, config = synth_dir
        assert (
            run(
                "cluster", "--train", out / "train.csv", "--k", "3",
                "--config", config, "--out-dir", out, "--seed", "5",
            )
            == 0
        )
        routing = json.loads((out / "routing.json").read_text())
        assert routing["provenance"] == "features"
        assert routing["k"] == 3
        assert len(routing["assignment"]) == 9

    def test_cluster_loss_emits_histogram(self, synth_dir):
        out, config = synth_dir
        assert (
            run(
                "cluster", "--train", out / "train.csv",
                "--provenance", "loss", "--k", "2", "--bins", "5",
                "--config", config, "--out-dir", out, "--seed", "6",
            )
            == 0
        )
        routing = json.loads((out / "routing.json").read_text())
        assert routing["provenance"] == "loss"
        assert "snapshot" in routing and "elbow" in routing
        rows = list(csv.reader((out / "histogram.csv").open()))
        assert rows[0] == ["bin_low", "bin_high", "count", "cluster"]
        total = sum(int(r[2]) for r in rows[1:])
        assert total == 9

    def test_tsne_from_loss_routing(self, synth_dir):
        out, config = synth_dir
        run(
            "cluster", "--train", out / "train.csv",
            "--provenance", "loss", "--k", "2",
            "--config", config, "--out-dir", out, "--seed", "6",
        )
        assert (
            run(
                "tsne", "--routing", out / "routing.json",
                "--train", out / "train.csv", "--test", out / "test.csv",
                "--config", config, "--out-dir", out, "--seed", "7",
            )
            == 0
        )
        rows = list(csv.reader((out / "embedding.csv").open()))
        assert rows[0] == ["participant_id", "date", "split", "x", "y", "loss"]
        splits = {r[2] for r in rows[1:]}
        assert splits == {"train", "test"}
        svg = (out / "embedding.svg").read_text()
        assert svg.count("<circle") == len(rows) - 1

    def test_tsne_rejects_featureless_routing(self, synth_dir, capsys):
        out, config = synth_dir
        run(
            "cluster", "--train", out / "train.csv", "--k", "3",
            "--config", config, "--out-dir", out, "--seed", "5",
        )
        code = run(
            "tsne", "--routing", out / "routing.json", "--train", out / "train.csv",
            "--config", config, "--out-dir", out,
        )
        assert code == 1
        assert "snapshot" in capsys.readouterr().err


class TestErrors:
    def test_runtime_error_exits_one(self, tmp_path, capsys):
        code = run("train", "--train", tmp_path / "missing.csv", "--out-dir", tmp_path)
        assert code == 1
        assert "error" in capsys.readouterr().err

    def test_usage_error_exits_two(self):
        with pytest.raises(SystemExit) as exc:
            run("no-such-command")
        assert exc.value.code == 2
