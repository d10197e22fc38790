import hashlib
import json

import numpy as np
import pytest

from penscript.cli import main
from penscript.dataio import Sample, equations_alphabet, write_recording
from synth import make_equation_sample

ALPHABET = equations_alphabet()


def write_dataset(tmp_path, samples, stem="ds"):
    data_text, labels_text = write_recording(samples, ALPHABET)
    data = tmp_path / f"{stem}.csv"
    labels = tmp_path / f"{stem}.jsonl"
    data.write_text(data_text, encoding="utf-8")
    labels.write_text(labels_text, encoding="utf-8")
    return str(data), str(labels)


def char_samples(rng, n=8, t_len=12, channels=3):
    out = []
    for i in range(n):
        values = rng.normal(0, 1, (t_len, channels))
        if channels == 13:
            values[:, 12] = np.abs(values[:, 12])  # force is non-negative
        label = (int(rng.integers(4)),)
        out.append(Sample(values, label, writer_id=i % 3, rate_hz=100.0))
    return out


def run(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestIngest:
    def test_summary(self, tmp_path, capsys, rng):
        data, labels = write_dataset(tmp_path, char_samples(rng, n=3))
        code, out, _ = run(
            capsys, ["ingest", "--data", data, "--labels", labels, "--out", str(tmp_path / "o")]
        )
        assert code == 0
        report = json.loads(out)
        assert report["samples"] == 3
        assert report["writers"] == 3
        assert sum(report["class_histogram"].values()) == 3
        assert (tmp_path / "o" / "data.csv").exists()
        assert (tmp_path / "o" / "labels.jsonl").exists()

    def test_round_trips_through_written_copy(self, tmp_path, capsys, rng):
        data, labels = write_dataset(tmp_path, char_samples(rng, n=3))
        run(capsys, ["ingest", "--data", data, "--labels", labels, "--out", str(tmp_path / "o")])
        first = (tmp_path / "o" / "data.csv").read_text()
        code, _, _ = run(
            capsys,
            [
                "ingest",
                "--data", str(tmp_path / "o" / "data.csv"),
                "--labels", str(tmp_path / "o" / "labels.jsonl"),
                "--out", str(tmp_path / "o2"),
            ],
        )
        assert code == 0
        assert (tmp_path / "o2" / "data.csv").read_text() == first

    def test_missing_file_fails_cleanly(self, tmp_path, capsys):
        code, out, err = run(
            capsys,
            ["ingest", "--data", str(tmp_path / "nope.csv"), "--labels", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "o")],
        )
        assert code == 1
        assert out == ""
        assert "error:" in err


class TestSplit:
    def test_writes_plan(self, tmp_path, capsys, rng):
        samples = char_samples(rng, n=12)
        data, labels = write_dataset(tmp_path, samples)
        code, out, _ = run(
            capsys,
            ["--seed", "5", "split", "--data", data, "--labels", labels, "--mode", "WD", "--k", "3", "--out", str(tmp_path / "o")],
        )
        assert code == 0
        report = json.loads(out)
        assert report["mode"] == "WD"
        assert report["k"] == 3
        plan = json.loads((tmp_path / "o" / "folds.json").read_text())
        assert plan["mode"] == "WD"
        assert len(plan["folds"]) == 3

    def test_wi_needs_enough_writers(self, tmp_path, capsys, rng):
        samples = [
            Sample(rng.normal(0, 1, (6, 2)), (0,), writer_id=0, rate_hz=50.0)
            for _ in range(4)
        ]
        data, labels = write_dataset(tmp_path, samples)
        code, _, err = run(
            capsys,
            ["split", "--data", data, "--labels", labels, "--mode", "WI", "--k", "3", "--out", str(tmp_path / "o")],
        )
        assert code == 1
        assert "error:" in err


class TestAugment:
    def test_same_seed_same_hash(self, tmp_path, capsys, rng):
        data, labels = write_dataset(tmp_path, char_samples(rng, n=4, channels=13))
        argv = [
            "--seed", "11", "augment", "--data", data, "--labels", labels,
            "--methods", "scale,jitter", "--out", str(tmp_path / "o"),
        ]
        code, out1, _ = run(capsys, argv)
        assert code == 0
        code, out2, _ = run(capsys, argv)
        assert json.loads(out1)["sha256"] == json.loads(out2)["sha256"]
        written = (tmp_path / "o" / "data.csv").read_text(encoding="utf-8")
        assert hashlib.sha256(written.encode()).hexdigest() == json.loads(out1)["sha256"]

    def test_seed_changes_output(self, tmp_path, capsys, rng):
        data, labels = write_dataset(tmp_path, char_samples(rng, n=4, channels=13))
        base = ["augment", "--data", data, "--labels", labels, "--methods", "scale,jitter", "--out", str(tmp_path / "o")]
        _, out1, _ = run(capsys, ["--seed", "1"] + base)
        _, out2, _ = run(capsys, ["--seed", "2"] + base)
        assert json.loads(out1)["sha256"] != json.loads(out2)["sha256"]

    def test_unknown_method_fails(self, tmp_path, capsys, rng):
        data, labels = write_dataset(tmp_path, char_samples(rng, n=2))
        code, _, err = run(
            capsys,
            ["augment", "--data", data, "--labels", labels, "--methods", "blur", "--out", str(tmp_path / "o")],
        )
        assert code == 1
        assert "error:" in err


class TestSegment:
    def test_manifest_and_pieces(self, tmp_path, capsys):
        eq1, _ = make_equation_sample("1+2", (1, 2, 1))
        eq2, _ = make_equation_sample("47", (1, 2))
        data, labels = write_dataset(tmp_path, [eq1, eq2])
        code, out, _ = run(
            capsys,
            ["segment", "--data", data, "--labels", labels, "--min-len", "2", "--out", str(tmp_path / "o")],
        )
        assert code == 0
        report = json.loads(out)
        assert report["equations"] == 2
        assert report["characters"] == 5
        manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
        assert manifest[0]["label"] == "1+2"
        assert manifest[0]["assignment"] == [1, 2, 1]
        assert manifest[0]["ambiguous"] is False
        assert manifest[1]["label"] == "47"
        assert manifest[1]["assignment"] == [1, 2]
        assert manifest[1]["ambiguous"] is True
        assert (tmp_path / "o" / "sample0000.csv").exists()
        assert (tmp_path / "o" / "sample0001.jsonl").exists()


TRAIN_FLAGS = [
    "--filters", "4", "--kernel", "2", "--pool", "2",
    "--recurrent", "LSTM", "--units", "3", "--dropout", "0.0",
    "--target-len", "12", "--batch-size", "4", "--lr", "0.01",
]


class TestTrain:
    def test_tiny_run_writes_history_and_checkpoint(self, tmp_path, capsys, rng):
        data, labels = write_dataset(tmp_path, char_samples(rng))
        code, out, _ = run(
            capsys,
            ["--seed", "3", "train", "--data", data, "--labels", labels, "--loss", "cce", "--epochs", "1", "--out", str(tmp_path / "o")] + TRAIN_FLAGS,
        )
        assert code == 0
        report = json.loads(out)
        assert report["epochs"] == 1
        lines = (tmp_path / "o" / "history.jsonl").read_text().splitlines()
        assert len(lines) == 1
        record = json.loads(lines[0])
        assert record["epoch"] == 0
        assert (tmp_path / "o" / "model.ckpt").exists()

    def test_same_seed_byte_identical(self, tmp_path, capsys, rng):
        data, labels = write_dataset(tmp_path, char_samples(rng))
        argv = ["--seed", "3", "train", "--data", data, "--labels", labels, "--loss", "cce", "--epochs", "2"] + TRAIN_FLAGS
        run(capsys, argv + ["--out", str(tmp_path / "a")])
        run(capsys, argv + ["--out", str(tmp_path / "b")])
        assert (tmp_path / "a" / "history.jsonl").read_bytes() == (tmp_path / "b" / "history.jsonl").read_bytes()
        assert (tmp_path / "a" / "model.ckpt").read_bytes() == (tmp_path / "b" / "model.ckpt").read_bytes()

    def test_resume_advances_epoch_count(self, tmp_path, capsys, rng):
        data, labels = write_dataset(tmp_path, char_samples(rng))
        base = ["--seed", "3", "train", "--data", data, "--labels", labels, "--loss", "cce", "--epochs", "1"] + TRAIN_FLAGS
        run(capsys, base + ["--out", str(tmp_path / "a")])
        code, _, _ = run(
            capsys,
            base + ["--resume", str(tmp_path / "a" / "model.ckpt"), "--out", str(tmp_path / "b")],
        )
        assert code == 0
        header = json.loads(
            (tmp_path / "b" / "model.ckpt").read_bytes().split(b"\n", 1)[0]
        )
        assert header["epochs_completed"] == 2

    def test_fold_plan_drives_validation(self, tmp_path, capsys, rng):
        samples = char_samples(rng, n=9)
        data, labels = write_dataset(tmp_path, samples)
        run(
            capsys,
            ["--seed", "1", "split", "--data", data, "--labels", labels, "--mode", "WD", "--k", "3", "--out", str(tmp_path / "s")],
        )
        code, out, _ = run(
            capsys,
            ["--seed", "1", "train", "--data", data, "--labels", labels, "--loss", "cce", "--epochs", "1", "--folds", str(tmp_path / "s" / "folds.json"), "--fold", "1", "--out", str(tmp_path / "o")] + TRAIN_FLAGS,
        )
        assert code == 0
        assert "crr" in json.loads(out)["final"]

    def test_ctc_training(self, tmp_path, capsys, rng):
        samples = []
        for i in range(6):
            values = rng.normal(0, 1, (16, 3))
            label = tuple(int(v) for v in rng.integers(0, 4, 2))
            samples.append(Sample(values, label, writer_id=i, rate_hz=100.0))
        data, labels = write_dataset(tmp_path, samples)
        code, out, _ = run(
            capsys,
            ["--seed", "2", "train", "--data", data, "--labels", labels, "--loss", "ctc", "--epochs", "1", "--target-len", "16", "--filters", "4", "--kernel", "2", "--pool", "2", "--recurrent", "LSTM", "--units", "3", "--dropout", "0.0", "--batch-size", "6", "--out", str(tmp_path / "o")],
        )
        assert code == 0
        assert json.loads(out)["epochs"] == 1

    def test_missing_epochs_fails(self, tmp_path, capsys, rng):
        data, labels = write_dataset(tmp_path, char_samples(rng))
        code, _, err = run(
            capsys,
            ["train", "--data", data, "--labels", labels, "--loss", "cce", "--out", str(tmp_path / "o")],
        )
        assert code == 1
        assert "epochs" in err


class TestEvaluate:
    def test_identical_files_score_zero(self, tmp_path, capsys):
        refs = tmp_path / "refs.txt"
        hyps = tmp_path / "hyps.txt"
        refs.write_text("12+3\n4-1\n", encoding="utf-8")
        hyps.write_text("12+3\n4-1\n", encoding="utf-8")
        code, out, _ = run(capsys, ["evaluate", "--refs", str(refs), "--hyps", str(hyps)])
        assert code == 0
        report = json.loads(out)
        assert report["cer"] == 0.0
        assert report["wer"] == 0.0
        assert all(sum(v) == 0 for k, v in report["histograms"].items() if k != "match")

    def test_known_error_rates(self, tmp_path, capsys):
        refs = tmp_path / "refs.txt"
        hyps = tmp_path / "hyps.txt"
        refs.write_text("12\n34\n", encoding="utf-8")
        hyps.write_text("12\n35\n", encoding="utf-8")
        code, out, _ = run(capsys, ["evaluate", "--refs", str(refs), "--hyps", str(hyps), "--bins", "2"])
        assert code == 0
        report = json.loads(out)
        assert report["cer"] == 0.25
        assert report["wer"] == 0.5
        assert report["histograms"]["mismatch"] == [0, 1]

    def test_crr_only_for_single_chars(self, tmp_path, capsys):
        refs = tmp_path / "refs.txt"
        hyps = tmp_path / "hyps.txt"
        refs.write_text("1\n2\n3\n4\n", encoding="utf-8")
        hyps.write_text("1\n2\n3\n5\n", encoding="utf-8")
        _, out, _ = run(capsys, ["evaluate", "--refs", str(refs), "--hyps", str(hyps)])
        assert json.loads(out)["crr"] == 0.75

    def test_line_count_mismatch_fails(self, tmp_path, capsys):
        refs = tmp_path / "refs.txt"
        hyps = tmp_path / "hyps.txt"
        refs.write_text("1\n2\n", encoding="utf-8")
        hyps.write_text("1\n", encoding="utf-8")
        code, _, err = run(capsys, ["evaluate", "--refs", str(refs), "--hyps", str(hyps)])
        assert code == 1
        assert "error:" in err


class TestDecode:
    def test_decode_with_trained_checkpoint(self, tmp_path, capsys, rng):
        data, labels = write_dataset(tmp_path, char_samples(rng))
        run(
            capsys,
            ["--seed", "3", "train", "--data", data, "--labels", labels, "--loss", "cce", "--epochs", "1", "--out", str(tmp_path / "o")] + TRAIN_FLAGS,
        )
        code, out, _ = run(
            capsys,
            ["decode", "--data", data, "--labels", labels, "--checkpoint", str(tmp_path / "o" / "model.ckpt")],
        )
        assert code == 0
        report = json.loads(out)
        assert len(report["decoded"]) == 8
        for entry in report["decoded"]:
            assert len(entry["hypothesis"]) == 1
        assert 0.0 <= report["cer"]

    def test_beam_decode_seq2seq(self, tmp_path, capsys, rng):
        samples = []
        for i in range(4):
            values = rng.normal(0, 1, (16, 3))
            label = tuple(int(v) for v in rng.integers(0, 4, 2))
            samples.append(Sample(values, label, writer_id=i, rate_hz=100.0))
        data, labels = write_dataset(tmp_path, samples)
        run(
            capsys,
            ["--seed", "2", "train", "--data", data, "--labels", labels, "--loss", "ctc", "--epochs", "1", "--target-len", "16", "--filters", "4", "--kernel", "2", "--pool", "2", "--recurrent", "LSTM", "--units", "3", "--dropout", "0.0", "--batch-size", "4", "--out", str(tmp_path / "o")],
        )
        code, out, _ = run(
            capsys,
            ["decode", "--data", data, "--labels", labels, "--checkpoint", str(tmp_path / "o" / "model.ckpt"), "--beam", "4"],
        )
        assert code == 0
        assert "cer" in json.loads(out)


class TestGradcheck:
    def test_passes_at_default_tolerance(self, capsys):
        code, out, _ = run(capsys, ["--seed", "0", "gradcheck"])
        assert code == 0
        report = json.loads(out)
        assert report["worst"] < 1e-4
        assert len(report["max_rel_error"]) >= 10

    def test_fails_at_impossible_tolerance(self, capsys):
        code, _, _ = run(capsys, ["--seed", "0", "gradcheck", "--tolerance", "1e-30"])
        assert code == 1
