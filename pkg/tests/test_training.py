import numpy as np
import pytest

from ssaembed import nn
from ssaembed.encoder import EncoderConfig
from ssaembed.lm import LanguageModel
from ssaembed.model import EmbeddingModel
from ssaembed.training import (
    ConfigError, TrainConfig, all_pairs, multitask_step, split_by_id, train, validate,
)

TINY = EncoderConfig(arch="bilstm-1", hidden=6, dim=4, fusion_dim=6)


def tiny_model(seed=0, use_lm=False):
    if use_lm:
        lm = LanguageModel(hidden=3, layers=1, seed=seed)
        cfg = EncoderConfig(arch="linear", dim=4, fusion_dim=6, use_lm=True, lm_dim=lm.state_dim)
        return EmbeddingModel(cfg, lm=lm, contact_hidden=4, seed=seed)
    return EmbeddingModel(TINY, contact_hidden=4, seed=seed)


def tiny_batches(records, rng):
    pairs = [(a.tokens, b.tokens, t) for a, b, t in all_pairs(records[:6])][:5]
    cons = [(r.tokens, r.contacts) for r in records[:3]]
    return pairs, cons


def snapshot(model):
    return {k: v.copy() for k, v in model.params.items()}


@pytest.mark.parametrize("lam", [0.0, 0.5, 1.0])
def test_combined_loss_is_convex_combination(small_corpus, rng, lam):
    pairs, cons = tiny_batches(small_corpus, rng)
    out = multitask_step(tiny_model(), nn.Adam(), pairs, cons, lam)
    sim = out["similarity_loss"] or 0.0
    con = out["contact_loss"] or 0.0
    assert out["loss"] == pytest.approx(lam * sim + (1 - lam) * con)
    assert (out["similarity_loss"] is None) == (lam == 0)
    assert (out["contact_loss"] is None) == (lam == 1)


def test_branch_values_do_not_depend_on_lambda(small_corpus, rng):
    pairs, cons = tiny_batches(small_corpus, rng)
    a = multitask_step(tiny_model(), nn.Adam(), pairs, cons, 0.3)
    b = multitask_step(tiny_model(), nn.Adam(), pairs, cons, 0.8)
    assert a["similarity_loss"] == pytest.approx(b["similarity_loss"])
    assert a["contact_loss"] == pytest.approx(b["contact_loss"])


def test_lambda_one_leaves_contact_head_and_lm_untouched(small_corpus, rng):
    model = tiny_model(use_lm=True)
    before = snapshot(model)
    pairs, cons = tiny_batches(small_corpus, rng)
    opt = nn.Adam(lr=0.05)
    for _ in range(3):
        multitask_step(model, opt, pairs, cons, 1.0)
    for k, v in model.params.items():
        same = v.tobytes() == before[k].tobytes()
        if k.startswith(("con.", "lm.")):
            assert same, k
    assert any(model.params[k].tobytes() != before[k].tobytes() for k in model.params if k.startswith("enc."))


def test_lm_frozen_with_contacts(small_corpus, rng):
    model = tiny_model(use_lm=True)
    before = snapshot(model)
    pairs, cons = tiny_batches(small_corpus, rng)
    multitask_step(model, nn.Adam(lr=0.05), pairs, cons, 0.1)
    assert all(model.params[k].tobytes() == before[k].tobytes() for k in model.params if k.startswith("lm."))
    assert any(model.params[k].tobytes() != before[k].tobytes() for k in model.params if k.startswith("con."))


def test_config_errors(small_corpus):
    with pytest.raises(ConfigError):
        TrainConfig(lam=1.5)
    with pytest.raises(ConfigError):
        multitask_step(tiny_model(), nn.Adam(), [], [], 0.5)
    no_contacts = [r.__class__(r.id, r.tokens, hierarchy=r.hierarchy) for r in small_corpus]
    with pytest.raises(ConfigError):
        train(tiny_model(), no_contacts, TrainConfig(lam=0.5, epochs=1, epoch_size=4))


def test_validate_rejects_empty():
    with pytest.raises(ValueError):
        validate(tiny_model(), [])


def test_training_is_deterministic_and_logs(small_corpus, tmp_path):
    cfg = TrainConfig(epochs=2, epoch_size=16, pair_batch=8, contact_batch=2, lr=0.01)
    train_recs, held = split_by_id(small_corpus, 0.25, seed=0)
    heldout = all_pairs(held)
    m1, m2 = tiny_model(), tiny_model()
    log1 = train(m1, train_recs, cfg, heldout=heldout, out_dir=str(tmp_path))
    log2 = train(m2, train_recs, cfg, heldout=heldout)
    assert log1.step_tsv() == log2.step_tsv()
    assert log1.epoch_tsv() == log2.epoch_tsv()
    assert len(log1.steps) == 4 and len(log1.epochs) == 2
    assert "accuracy" in log1.epochs[-1]
    assert (tmp_path / "epoch000.ckpt").exists() and (tmp_path / "epoch001.ckpt").exists()
    # reloading the last epoch checkpoint reproduces the logged metrics
    back, _ = EmbeddingModel.load(str(tmp_path / "epoch001.ckpt"))
    assert validate(back, heldout).as_dict() == pytest.approx(
        {k: v for k, v in log1.epochs[-1].items() if k in validate(back, heldout).as_dict()})


def test_model_save_load_round_trip(tmp_path, rng):
    model = tiny_model(use_lm=True)
    model.save(str(tmp_path / "m.ckpt"), {"note": "x"})
    back, meta = EmbeddingModel.load(str(tmp_path / "m.ckpt"))
    assert meta["note"] == "x"
    tok = rng.integers(0, 21, 8)
    assert np.array_equal(model.embed([tok])[0], back.embed([tok])[0])
