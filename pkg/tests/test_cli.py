import json

import numpy as np
import pytest

from ssaembed import cli, nn
from ssaembed.data import parse_fasta, read_embeddings


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run("synth-data", "--out", d / "scop", "--classes", 2, "--folds", 1, "--superfamilies", 2,
               "--sequences", 3, "--min-length", 20, "--max-length", 26) == 0
    assert run("train", "--fasta", d / "scop/seqs.fasta", "--labels", d / "scop/labels.tsv",
               "--coords", d / "scop/coords.tsv", "--out", d / "model", "--epochs", 1, "--epoch-size", 16,
               "--pair-batch", 8, "--contact-batch", 2, "--hidden", 6, "--dim", 4, "--fusion-dim", 6) == 0
    return d


def test_no_arguments_is_usage_error(capsys):
    assert run() == 2
    assert "usage" in capsys.readouterr().err.lower()


def test_unknown_subcommand_and_bad_flags():
    assert run("frobnicate") == 2
    assert run("compare") == 2
    assert run("synth-data", "--out", "x", "--workers", 0) == 2


def test_missing_input_is_data_error(tmp_path):
    assert run("compare", "--a", tmp_path / "missing.fasta", "--scorer", "nw", "--out", tmp_path / "o.tsv") == 3
    (tmp_path / "bad.fasta").write_text("ACDE\n")
    assert run("compare", "--a", tmp_path / "bad.fasta", "--scorer", "nw", "--out", tmp_path / "o.tsv") == 3


def test_config_file_defaults_and_unknown_keys(tmp_path):
    (tmp_path / "cfg.json").write_text(json.dumps({"bogus": 1}))
    assert run("synth-data", "--out", tmp_path / "s", "--config", tmp_path / "cfg.json") == 2
    (tmp_path / "cfg.json").write_text(json.dumps({"kind": "tm", "per_category": 1}))
    assert run("synth-data", "--out", tmp_path / "s", "--config", tmp_path / "cfg.json") == 0
    assert (tmp_path / "s/tm.tsv").exists()


def test_divergence_exit_code(workspace, tmp_path, monkeypatch):
    def boom(*a, **k):
        raise nn.DivergenceError("non-finite loss")
    monkeypatch.setattr(cli, "train", boom)
    assert run("train", "--fasta", workspace / "scop/seqs.fasta", "--labels", workspace / "scop/labels.tsv",
               "--coords", workspace / "scop/coords.tsv", "--out", tmp_path / "m") == 4


def test_lambda_below_one_needs_coordinates(workspace, tmp_path):
    assert run("train", "--fasta", workspace / "scop/seqs.fasta", "--labels", workspace / "scop/labels.tsv",
               "--out", tmp_path / "m", "--epochs", 1, "--epoch-size", 4) == 2


def test_train_outputs(workspace):
    m = workspace / "model"
    for name in ("model.ckpt", "epoch000.ckpt", "steps.tsv", "epochs.tsv", "manifest.json"):
        assert (m / name).exists(), name
    manifest = json.loads((m / "manifest.json").read_text())
    assert manifest["subcommand"] == "train" and manifest["seed"] == 0
    assert all(len(v) == 64 for v in manifest["outputs"].values())


def test_compare_one_row_per_pair(workspace, tmp_path):
    fa = workspace / "scop/seqs.fasta"
    n = len(parse_fasta(fa.read_text()))
    out = tmp_path / "cmp.tsv"
    assert run("compare", "--a", fa, "--b", fa, "--scorer", "ssa", "--ckpt", workspace / "model/model.ckpt",
               "--out", out) == 0
    lines = out.read_text().strip().split("\n")
    assert lines[0].split("\t")[:4] == ["idA", "idB", "score", "predicted_level"]
    assert len(lines) == 1 + n * n
    row = lines[1].split("\t")
    assert float(row[2]) <= 0 and row[3] in "01234"
    assert (tmp_path / "cmp.tsv.manifest.json").exists()
    assert run("compare", "--a", fa, "--scorer", "me", "--ckpt", workspace / "model/model.ckpt",
               "--out", out) == 0
    assert out.read_text().split("\n")[1].split("\t")[3] == "NA"


def test_compare_nw_needs_no_checkpoint(tmp_path):
    (tmp_path / "a.fasta").write_text(">x\nA\n>y\nAAAA\n")
    assert run("compare", "--a", tmp_path / "a.fasta", "--scorer", "nw", "--out", tmp_path / "o.tsv") == 0
    rows = [r.split("\t") for r in (tmp_path / "o.tsv").read_text().strip().split("\n")[1:]]
    scores = {(r[0], r[1]): float(r[2]) for r in rows}
    assert scores == {("x", "y"): -9.0}


def test_embed_and_eval_commands(workspace, tmp_path):
    ck = workspace / "model/model.ckpt"
    fa = workspace / "scop/seqs.fasta"
    assert run("embed", "--fasta", fa, "--ckpt", ck, "--out", tmp_path / "e.txt") == 0
    emb = read_embeddings(str(tmp_path / "e.txt"))
    names = [n for n, _ in parse_fasta(fa.read_text())]
    assert list(emb) == names and all(Z.shape[1] == 4 for Z in emb.values())
    assert run("eval-scop", "--fasta", fa, "--labels", workspace / "scop/labels.tsv", "--ckpt", ck,
               "--out", tmp_path / "scop.tsv") == 0
    assert "accuracy" in (tmp_path / "scop.tsv").read_text()
    assert run("eval-contacts", "--fasta", fa, "--coords", workspace / "scop/coords.tsv", "--ckpt", ck,
               "--out", tmp_path / "con.tsv") == 0
    seps = {ln.split("\t")[0] for ln in (tmp_path / "con.tsv").read_text().strip().split("\n")[1:]}
    assert seps == {"2", "12"}
    assert run("probe-ss", "--fasta", fa, "--ss", workspace / "scop/ss.tsv", "--features", "kmer", "--k", 3,
               "--hidden", 8, "--epochs", 1, "--out", tmp_path / "probe.tsv") == 0


def test_tm_commands(tmp_path):
    assert run("synth-data", "--kind", "tm", "--per-category", 3, "--out", tmp_path / "tm") == 0
    common = ["--fasta", tmp_path / "tm/seqs.fasta", "--tm", tmp_path / "tm/tm.tsv", "--hidden", 4,
              "--epochs", 1]
    assert run("train-tm", *common, "--out", tmp_path / "tagger.ckpt") == 0
    assert run("eval-tm", *common, "--folds", 3, "--out", tmp_path / "cv.tsv") == 0
    header = (tmp_path / "cv.tsv").read_text().split("\n")[0].split("\t")
    assert header[-1] == "overall"
    assert run("eval-tm", *common, "--tagger", tmp_path / "tagger.ckpt", "--out", tmp_path / "ev.tsv") == 0


def test_grad_check_command(tmp_path):
    assert run("grad-check", "--op", "ssa", "--op", "ordinal-loss", "--seeds", 2, "--out", tmp_path / "g.tsv") == 0
    rows = (tmp_path / "g.tsv").read_text().strip().split("\n")
    assert len(rows) == 1 + 4
    assert run("grad-check", "--op", "ssa", "--seeds", 1, "--tol", 0, "--out", tmp_path / "g.tsv") == 1
    assert run("grad-check", "--op", "nope", "--out", tmp_path / "g.tsv") == 2


def test_embeddings_match_model(workspace, tmp_path):
    from ssaembed.model import EmbeddingModel
    model, _ = EmbeddingModel.load(str(workspace / "model/model.ckpt"))
    fa = workspace / "scop/seqs.fasta"
    assert run("embed", "--fasta", fa, "--ckpt", workspace / "model/model.ckpt", "--out", tmp_path / "e.txt") == 0
    emb = read_embeddings(str(tmp_path / "e.txt"))
    from ssaembed.data import encode_sequence
    name, seq = parse_fasta(fa.read_text())[0]
    # batched vs single-sequence BLAS calls may differ in the last ulp
    assert np.allclose(emb[name], model.embed([encode_sequence(seq)])[0], rtol=0, atol=1e-12)
