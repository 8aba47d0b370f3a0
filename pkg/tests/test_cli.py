import csv
import subprocess
import sys

import pytest

from portscope import UNKNOWN
from portscope.cli import main
from portscope.trace_io import read_trace


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def kv(out):
    pairs = {}
    for line in out.splitlines():
        for tok in line.split():
            if "=" in tok:
                k, v = tok.split("=", 1)
                pairs[k] = v
    return pairs


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    code = main(["synth", "--classes", "3", "--traces", "6", "--duration", "0.5", "--rate", "8000",
                 "--out", str(d / "data"), "--with-unknown"])
    assert code == 0
    code = main(["featurize", "--in", str(d / "data"), "--out", str(d / "feat.csv"), "--jobs", "1"])
    assert code == 0
    return d


def test_synth_output(tmp_path, capsys):
    code, out, err = run(capsys, "synth", "--classes", "2", "--traces", "2", "--duration", "0.3", "--rate", "8000",
                         "--out", tmp_path / "d")
    assert code == 0
    assert kv(out) == {"classes": "2", "traces": "4", "unknown": "0", "out": str(tmp_path / "d")}
    assert err.startswith("config: ")
    assert "seed=42" in err


def test_featurize_csv(workdir):
    rows = list(csv.reader((workdir / "feat.csv").open()))
    assert rows[0][:2] == ["trace_id", "label"]
    assert len(rows[0]) == 2 + 101
    assert len(rows) == 1 + 18
    urows = list(csv.reader((workdir / "feat_unknown.csv").open()))
    assert len(urows) == 1 + 6
    assert (workdir / "feat.csv.meta.json").exists()


def test_train_eval_predict_chain(workdir, capsys):
    model = workdir / "m.model"
    code, out, _ = run(capsys, "train", "--features", workdir / "feat.csv", "--model", model, "--k-best", "10",
                       "--knn-k", "3", "--test-fraction", "0.3", "--test-out", workdir / "test.csv")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "n_train=12 n_test=6"
    assert lines[1].startswith("accuracy=") and " macro_f1=" in lines[1]
    vals = kv(out)
    assert 0 <= float(vals["accuracy"]) <= 1

    report = workdir / "report"
    code, out, _ = run(capsys, "eval", "--model", model, "--features", workdir / "test.csv",
                       "--unknown", workdir / "feat_unknown.csv", "--report", report)
    assert code == 0
    assert {p.name for p in report.iterdir()} == {"report.txt", "confusion.csv", "importance.csv"}
    header = (report / "confusion.csv").read_text().splitlines()[0].split(",")
    assert header[-1] == UNKNOWN and header[1:-1] == sorted(header[1:-1])
    assert "unknown_rejection_rate" in kv(out)
    assert "open_set=true" in (report / "report.txt").read_text()

    code, out, _ = run(capsys, "eval", "--model", model, "--features", workdir / "test.csv", "--report", report)
    assert code == 0 and "open_set=false" in (report / "report.txt").read_text()
    assert "unknown_rejection_rate" not in out

    trace = next((workdir / "data" / "class_01").iterdir())
    code, out, _ = run(capsys, "predict", "--model", model, "--trace", trace)
    assert code == 0
    assert out.startswith("label=") and " confidence=" in out
    code, out, _ = run(capsys, "predict", "--model", model, "--trace", trace, "--threshold", "1")
    assert code == 0
    conf = float(kv(out)["confidence"])
    assert (kv(out)["label"] == UNKNOWN) == (conf < 1)


def test_rerun_is_byte_identical(workdir, tmp_path, capsys):
    for name in ("a", "b"):
        assert main(["train", "--features", str(workdir / "feat.csv"), "--model", str(tmp_path / f"{name}.model"),
                     "--classifier", "forest", "--trees", "5", "--k-best", "8"]) == 0
    assert (tmp_path / "a.model").read_bytes() == (tmp_path / "b.model").read_bytes()


def test_predict_short_trace_fails(workdir, tmp_path, capsys):
    main(["train", "--features", str(workdir / "feat.csv"), "--model", str(tmp_path / "m.model"), "--k-best", "5"])
    short = tmp_path / "s.txt"
    short.write_text("1\n2\n3\n")
    code, _, err = run(capsys, "predict", "--model", tmp_path / "m.model", "--trace", short)
    assert code == 1 and "required" in err


@pytest.mark.parametrize("argv", [
    ["synth", "--classes", "0", "--out", "x"],
    ["synth", "--classes", "50", "--with-unknown", "--out", "x"],
    ["train", "--features", "f.csv", "--model", "m", "--scaler", "robust"],
    ["train", "--features", "f.csv", "--model", "m", "--test-fraction", "0"],
    ["predict", "--model", "m", "--trace", "t", "--threshold", "2"],
    [],
])
def test_usage_errors_exit_2(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


def test_invalid_scaler_lists_choices(capsys):
    with pytest.raises(SystemExit):
        main(["train", "--features", "f", "--model", "m", "--scaler", "robust"])
    err = capsys.readouterr().err
    assert "normalizer" in err and "quantile" in err


def test_runtime_errors_exit_1(tmp_path, capsys):
    code, out, err = run(capsys, "featurize", "--in", tmp_path / "missing", "--out", tmp_path / "f.csv")
    assert code == 1 and "portscope featurize:" in err and out == ""
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    code, _, err = run(capsys, "synth", "--classes", "1", "--traces", "1", "--duration", "0.01",
                       "--out", blocker / "sub")
    assert code == 1
    code, _, _ = run(capsys, "eval", "--model", tmp_path / "nope", "--features", tmp_path / "nope.csv",
                     "--report", tmp_path / "r")
    assert code == 1


def test_capture_file(tmp_path, capsys):
    dump = tmp_path / "dump.bin"
    dump.write_bytes(b"100\r\n200\ngarbage\n4096\n300\n40")
    out_path = tmp_path / "cap.txt"
    code, out, _ = run(capsys, "capture", "--input", dump, "--out", out_path, "--rate", "1000", "--label", "idle")
    assert code == 0
    assert kv(out)["samples"] == "3" and int(kv(out)["discarded"]) >= 2
    tr = read_trace(out_path)
    assert tr.samples.tolist() == [100, 200, 300]
    assert tr.label == "idle" and tr.sample_rate_hz == 1000 and tr.port == "USB"


def test_capture_garbage_fails(tmp_path, capsys):
    dump = tmp_path / "junk"
    dump.write_bytes(b"abc\nxyz\n")
    code, out, err = run(capsys, "capture", "--input", dump, "--out", tmp_path / "o.txt")
    assert code == 1 and "samples=0" in out and "no valid samples" in err
    assert not (tmp_path / "o.txt").exists()


def test_capture_stdin_module_entry(tmp_path):
    out_path = tmp_path / "stdin.txt"
    proc = subprocess.run(
        [sys.executable, "-m", "portscope", "capture", "--input", "-", "--out", str(out_path)],
        input=b"1\n2\n3\n", capture_output=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert read_trace(out_path).samples.tolist() == [1, 2, 3]
