import io
import json
import subprocess
import sys

import pytest

from skillgraph.cli import dispatch
from skillgraph.model import load_checkpoint, save_checkpoint

from _fixtures import report_fixture, semantic_corpus, write_edges_file, write_entities_file


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = dispatch([str(a) for a in argv], out, err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def files(tmp_path):
    cat, observed, _ = semantic_corpus()
    ent = tmp_path / "e.jsonl"
    edges = tmp_path / "w.tsv"
    write_entities_file(ent, cat)
    write_edges_file(edges, [(cat.occupations[e.occ].id, cat.skills[e.skill].id, e.demand)
                             for e in observed])
    return tmp_path, ent, edges


def _train(files, out_name="m.ckpt", *extra):
    tmp, ent, edges = files
    ckpt = tmp / out_name
    code, out, err = run(["train", "--entities", ent, "--edges", edges, "--seed", 7,
                          "--epochs", 5, "--out", ckpt, *extra])
    assert code == 0, err
    return ckpt, json.loads(out)


def test_train_writes_checkpoint_and_eval(files):
    ckpt, summary = _train(files)
    model = load_checkpoint(ckpt)
    assert model.n_occupations == 12 and model.n_skills == 8
    assert summary["epochs"] == 5
    assert summary["eval"]["n"] == len(model.meta["heldout"]) >= 1
    assert set(summary["eval"]) == {"rmse", "mae", "n", "baseline_rmse"}


def test_train_byte_identical(files):
    tmp = files[0]
    a, _ = _train(files, "a.ckpt", "--trace", tmp / "a.tsv")
    b, _ = _train(files, "b.ckpt", "--trace", tmp / "b.tsv")
    assert a.read_bytes() == b.read_bytes()
    assert (tmp / "a.tsv").read_bytes() == (tmp / "b.tsv").read_bytes()


def test_train_flags_reach_model(files):
    ckpt, _ = _train(files, "m.ckpt", "--latent-dim", 3, "--embed-dim", 4, "--filters", 2,
                     "--windows", "1,3", "--no-encoder", "--holdout", 0,
                     "--batch-mode", "full-batch")
    model = load_checkpoint(ckpt)
    assert model.k == 3 and model.encoder.embed_dim == 4
    assert model.encoder.windows == (1, 3) and model.encoder.n_filters == 2
    assert not model.encoder_enabled
    assert model.meta["heldout"] == []


def test_config_file_precedence(files):
    tmp = files[0]
    cfg = tmp / "cfg.json"
    cfg.write_text(json.dumps({"k": 5, "epochs": 2, "lr": 0.01}))
    ckpt, summary = _train(files, "m.ckpt", "--config", cfg, "--latent-dim", 4)
    hp = load_checkpoint(ckpt).meta["hyperparams"]
    assert (hp["k"], hp["lr"]) == (4, 0.01)
    assert summary["epochs"] == 5  # --epochs from _train wins over the file


def test_config_unknown_key(files):
    tmp, ent, edges = files
    cfg = tmp / "cfg.json"
    cfg.write_text(json.dumps({"momentum": 0.9}))
    code, _, err = run(["train", "--entities", ent, "--edges", edges, "--out", tmp / "m",
                        "--config", cfg])
    assert code == 1 and err.startswith("error:") and "momentum" in err


def test_complete(files):
    ckpt, _ = _train(files)
    code, out, _ = run(["complete", "--model", ckpt])
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "occupation_id\tskill_id\tdemand"
    assert len(lines) == 1 + 12 * 8
    values = [float(line.split("\t")[2]) for line in lines[1:]]
    assert all(0.0 <= v <= 1.0 for v in values)
    stored = {(o, s): d for o, s, d in load_checkpoint(ckpt).meta["observed"]}
    for line in lines[1:]:
        o, s, v = line.split("\t")
        if (o, s) in stored:
            assert float(v) == stored[(o, s)]


def test_predict(files):
    ckpt, _ = _train(files)
    code, out, _ = run(["predict", "--model", ckpt, "--occupation", "o1", "--skill", "s2"])
    assert code == 0
    float(out)


def test_predict_unknown_skill(files):
    ckpt, _ = _train(files)
    code, out, err = run(["predict", "--model", ckpt, "--occupation", "o1", "--skill", "s9"])
    assert code == 1 and out == ""
    assert err.startswith("error:") and "s9" in err
    assert len(err.strip().splitlines()) == 1


def test_evaluate_roundtrip(files):
    tmp = files[0]
    ckpt, summary = _train(files)
    model = load_checkpoint(ckpt)
    held = tmp / "held.tsv"
    write_edges_file(held, model.meta["heldout"])
    code, out, _ = run(["evaluate", "--model", ckpt, "--edges", held])
    assert code == 0
    assert json.loads(out) == summary["eval"]
    code, out, _ = run(["evaluate", "--model", ckpt, "--edges", held, "--format", "tsv"])
    assert out.startswith("rmse\t")


def test_report_fixture(tmp_path):
    _, model, observed = report_fixture()
    model.meta = {"observed": [["o0", "s1", 0.6]]}
    ckpt = tmp_path / "m.ckpt"
    save_checkpoint(model, ckpt)
    code, out, err = run(["report", "--model", ckpt, "--skill", "s1", "--threshold", 0.5])
    assert code == 0, err
    footer = {}
    for line in out.splitlines():
        if line.startswith("# "):
            key, *values = line[2:].split("\t")
            footer[key] = values
    assert float(footer["fraction_current"][0]) == 0.25
    assert float(footer["fraction_additional"][0]) == 0.5
    assert footer["bins"] == ["none=1", "basic=1", "advanced=2"]
    rows = [line.split("\t") for line in out.splitlines()[1:5]]
    assert [r[4] for r in rows] == ["basic", "advanced", "none", "advanced"]
    assert [r[3] for r in rows] == ["observed", "predicted", "predicted", "predicted"]


def test_report_external_edges(tmp_path):
    _, model, _ = report_fixture()
    ckpt = tmp_path / "m.ckpt"
    save_checkpoint(model, ckpt)
    edges = tmp_path / "obs.tsv"
    write_edges_file(edges, [("o0", "s1", 0.6), ("o1", "s1", 0.3)])
    out_path = tmp_path / "report.tsv"
    code, _, _ = run(["report", "--model", ckpt, "--skill", "s1", "--threshold", 0.5,
                      "--edges", edges, "--out", out_path])
    assert code == 0
    text = out_path.read_text()
    assert "# fraction_current\t0.5\n" in text
    assert "# fraction_additional\t0.25\n" in text


def test_report_bad_thresholds(tmp_path):
    _, model, _ = report_fixture()
    ckpt = tmp_path / "m.ckpt"
    save_checkpoint(model, ckpt)
    code, _, err = run(["report", "--model", ckpt, "--skill", "s1",
                        "--t-basic", 0.7, "--t-advanced", 0.4])
    assert code == 1 and err.startswith("error:")


@pytest.mark.parametrize("argv", [
    ["frobnicate"],
    [],
    ["predict", "--model", "x.ckpt"],
    ["train", "--entities", "missing.jsonl", "--edges", "missing.tsv", "--out", "m"],
    ["predict", "--model", "missing.ckpt", "--occupation", "o", "--skill", "s"],
])
def test_validation_errors(argv):
    code, _, err = run(argv)
    assert code == 1
    assert err.startswith("error:") and len(err.strip().splitlines()) == 1


def test_bad_edge_file_names_line(files):
    tmp, ent, _ = files
    bad = tmp / "bad.tsv"
    write_edges_file(bad, [("o0", "s0", 0.5), ("o0", "s1", 0.0)])
    code, _, err = run(["train", "--entities", ent, "--edges", bad, "--out", tmp / "m"])
    assert code == 1
    assert f"{bad}:3:" in err


def test_divergence_exit_code(files):
    tmp, ent, edges = files
    code, _, err = run(["train", "--entities", ent, "--edges", edges, "--out", tmp / "m",
                        "--epochs", 50, "--lr", 1e6, "--batch-mode", "full-batch", "--no-encoder"])
    assert code == 2
    assert err.startswith("error: divergence") and "epoch" in err


def test_module_entry_point(files):
    ckpt, _ = _train(files)
    proc = subprocess.run(
        [sys.executable, "-m", "skillgraph", "predict", "--model", str(ckpt),
         "--occupation", "o0", "--skill", "nope"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 1
    assert proc.stderr.startswith("error:") and "nope" in proc.stderr
