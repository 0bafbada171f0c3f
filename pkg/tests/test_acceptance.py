"""Acceptance criteria, one test each. Every test prints a PASS/FAIL/WARN line."""
import itertools
import math
import time
import warnings
from dataclasses import replace

import numpy as np
import pytest
from scipy.special import logsumexp

from ssaembed import cli
from ssaembed.contact import contact_metrics, pairwise_features
from ssaembed.data import (
    PairSampler, PairSamplerConfig, SyntheticCorpusConfig, generate_synthetic_corpus, level_probabilities,
    perturb_sequence,
)
from ssaembed.encoder import EncoderConfig
from ssaembed.evaluation import (
    ProbeConfig, average_precision, blosum62, evaluate_pairs, nw_align_score, protein_split, ss_probe,
)
from ssaembed.gradcheck import REGISTRY, TOLERANCE, run_suite
from ssaembed.lm import LanguageModel, LMConfig, pretrain_lm
from ssaembed.model import EmbeddingModel
from ssaembed.similarity import (
    SCORERS, init_ordinal_head, me_score, ordinal_probabilities, ssa_score, ua_score,
)
from ssaembed.tmcrf import crf_log_partition, viterbi
from ssaembed.training import DESK_CONFIG, all_pairs, multitask_step, score_pairs, split_by_id, train, validate
from ssaembed import nn

CORPUS = SyntheticCorpusConfig(classes=2, folds=2, superfamilies=5, families=1, sequences=4, seed=1)
ENCODER = EncoderConfig(arch="bilstm-1", hidden=32, dim=16, fusion_dim=32)


@pytest.fixture
def report(capsys):
    def emit(number, status, detail):
        with capsys.disabled():
            print(f"\nCRITERION {number}: {status} {detail}")
    return emit


def verdict(report, number, ok, detail, soft=False):
    report(number, "PASS" if ok else ("WARN" if soft else "FAIL"), detail)
    if not soft:
        assert ok, detail


# -- shared trained models ---------------------------------------------------------


@pytest.fixture(scope="session")
def corpus():
    recs = generate_synthetic_corpus(CORPUS)
    train_recs, held = split_by_id(recs, 0.25, seed=0)
    return recs, train_recs, held


def _trained(corpus, lam):
    _, train_recs, held = corpus
    model = EmbeddingModel(ENCODER, seed=0)
    untrained = validate(EmbeddingModel(ENCODER, seed=0), all_pairs(held))
    t0 = time.perf_counter()
    tlog = train(model, train_recs, replace(DESK_CONFIG, lam=lam))
    return model, tlog, untrained, time.perf_counter() - t0


@pytest.fixture(scope="session")
def multitask_model(corpus):
    return _trained(corpus, 0.1)


@pytest.fixture(scope="session")
def similarity_only_model(corpus):
    return _trained(corpus, 1.0)


# -- 1 ------------------------------------------------------------------------------------


def test_criterion_1_ssa_fixture(report):
    t0 = time.perf_counter()
    r1 = ssa_score(np.array([[0.0], [2.0]]), np.array([[0.0]]))
    r2 = ssa_score(np.array([[0.0], [1.0]]), np.array([[0.0], [1.0]]))
    # direct evaluation of the alignment definitions for the 2x2 case
    d = np.array([[0.0, 1.0], [1.0, 0.0]])
    e = np.exp(-d)
    alpha = e / e.sum(1, keepdims=True)
    beta = e / e.sum(0, keepdims=True)
    a = alpha + beta - alpha * beta
    s_direct = -(a * d).sum() / a.sum()
    elapsed = time.perf_counter() - t0
    ok = (abs(r1.score + 1.0) <= 1e-4 and abs(r2.score - s_direct) <= 1e-12
          and abs(r2.score + 0.3341) <= 1e-4
          and np.allclose(r2.a, [[0.9277, 0.4655], [0.4655, 0.9277]], atol=1e-4) and elapsed < 1.0)
    verdict(report, 1, ok, f"s1={r1.score:.6f} s2={r2.score:.6f} a={np.round(r2.a, 5).tolist()} "
                           f"time={elapsed:.3f}s")


# -- 2 --------------------------------------------------------------------------------------


def test_criterion_2_gradient_suite(report):
    t0 = time.perf_counter()
    rows = run_suite(seeds=range(20))
    elapsed = time.perf_counter() - t0
    worst = {}
    for op, _, err, _ in rows:
        worst[op] = max(worst.get(op, 0.0), err)
    failed = [(op, s, err) for op, s, err, ok in rows if not ok]
    ok = not failed and len(rows) == 20 * len(REGISTRY) and elapsed < 300
    detail = " ".join(f"{op}={e:.1e}" for op, e in worst.items())
    verdict(report, 2, ok, f"{len(rows)} checks, tol={TOLERANCE:g}, failed={failed[:3]} time={elapsed:.0f}s "
                           f"worst: {detail}")


# -- 3 ----------------------------------------------------------------------------------------


def _ap_oracle(scores, labels):
    """Exhaustive cut points: precision at every prefix weighted by recall gain."""
    order = sorted(range(len(scores)), key=lambda k: (-scores[k], k))
    npos = sum(labels)
    area, tp = 0.0, 0
    for cut in range(1, len(order) + 1):
        gain = labels[order[cut - 1]]
        tp += gain
        area += gain / npos * tp / cut
    return area


def _nw_oracle(a, b, S, go=-11.0, ge=-1.0):
    """Enumerate every alignment as a column string and score it."""
    best = -math.inf
    for cols in itertools.product("MXY", repeat=len(a) + len(b)):
        i = j = 0
        total, prev = 0.0, None
        for c in cols:
            if i == len(a) and j == len(b):
                break
            if c == "M" and i < len(a) and j < len(b):
                total += S[a[i], b[j]]
                i, j = i + 1, j + 1
            elif c == "X" and i < len(a):
                total += ge if prev == "X" else go
                i += 1
            elif c == "Y" and j < len(b):
                total += ge if prev == "Y" else go
                j += 1
            else:
                break
            prev = c
        if i == len(a) and j == len(b):
            best = max(best, total)
    return best


def test_criterion_3_oracle_equivalences(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    crf_err, vit_bad = 0.0, 0
    for _ in range(200):
        n, S = int(rng.integers(1, 7)), int(rng.integers(1, 5))
        E = np.round(rng.normal(size=(n, S)), 1)
        T = rng.normal(size=(S, S))
        T[rng.random((S, S)) < 0.25] = -np.inf
        st, en = rng.normal(size=S), rng.normal(size=S)
        best, arg, scores = -np.inf, None, []
        for p in itertools.product(range(S), repeat=n):
            v = st[p[0]] + E[np.arange(n), p].sum() + sum(T[p[t], p[t + 1]] for t in range(n - 1)) + en[p[-1]]
            scores.append(v)
            if v > best:
                best, arg = v, p
        if arg is None:
            continue
        crf_err = max(crf_err, abs(crf_log_partition(E, T, st, en) - logsumexp(scores)))
        vit_bad += tuple(viterbi(E, T, st, en)) != arg
    ap_err = 0.0
    for _ in range(300):
        k = int(rng.integers(1, 21))
        s = rng.integers(0, 6, k).astype(float)
        y = rng.integers(0, 2, k)
        if y.sum():
            ap_err = max(ap_err, abs(average_precision(s, y) - _ap_oracle(s.tolist(), y.tolist())))
    aupr_err = 0.0
    for _ in range(100):
        n = int(rng.integers(3, 7))  # at most 15 scored pairs
        pred = rng.random((n, n))
        obs = (rng.random((n, n)) < 0.4).astype(int)
        obs = np.maximum(obs, obs.T)
        i, j = np.triu_indices(n, 1)
        if obs[i, j].sum() == 0:
            continue
        sym = (pred + pred.T) / 2
        got = contact_metrics(pred, obs, separation=1)["aupr"]
        aupr_err = max(aupr_err, abs(got - _ap_oracle(sym[i, j].tolist(), obs[i, j].tolist())))
    S = blosum62()
    nw_bad = 0
    for _ in range(60):
        a = rng.integers(0, 21, int(rng.integers(1, 4)))
        b = rng.integers(0, 21, int(rng.integers(1, 4)))
        nw_bad += abs(nw_align_score(a, b) - _nw_oracle(a, b, S)) > 1e-9
    for la, lb in ((5, 1), (1, 5), (4, 2)):
        a, b = rng.integers(0, 21, la), rng.integers(0, 21, lb)
        nw_bad += abs(nw_align_score(a, b) - _nw_oracle(a, b, S)) > 1e-9
    elapsed = time.perf_counter() - t0
    ok = crf_err <= 1e-8 and vit_bad == 0 and ap_err <= 1e-12 and aupr_err <= 1e-12 and nw_bad == 0 and elapsed < 120
    verdict(report, 3, ok, f"logZ_err={crf_err:.1e} viterbi_mismatch={vit_bad} ap_err={ap_err:.1e} "
                           f"aupr_err={aupr_err:.1e} nw_mismatch={nw_bad} time={elapsed:.1f}s")


# -- 4 ------------------------------------------------------------------------------------------


def test_criterion_4_invariants(report, corpus):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    sym_err, stoch_err, max_s, a_ok, pf_ok = 0.0, 0.0, -np.inf, True, True
    for _ in range(300):
        Z1 = rng.normal(size=(int(rng.integers(1, 9)), 5))
        Z2 = rng.normal(size=(int(rng.integers(1, 9)), 5))
        r, rt = ssa_score(Z1, Z2), ssa_score(Z2, Z1)
        sym_err = max(sym_err, abs(r.score - rt.score), abs(ua_score(Z1, Z2) - ua_score(Z2, Z1)),
                      abs(me_score(Z1, Z2) - me_score(Z2, Z1)))
        max_s = max(max_s, r.score, ua_score(Z1, Z2), me_score(Z1, Z2))
        stoch_err = max(stoch_err, np.abs(r.alpha.sum(1) - 1).max(), np.abs(r.beta.sum(0) - 1).max())
        if min(r.a.shape) >= 2:
            a_ok &= bool(np.all(r.a > 0) and np.all(r.a < 1))
        else:
            # a single row or column makes one softmax identically 1, so a = 1 up to round-off
            a_ok &= bool(np.all(np.abs(r.a - 1.0) <= 1e-12))
        v = pairwise_features(Z1)
        pf_ok &= bool(np.array_equal(v, v.transpose(1, 0, 2)))
    head = init_ordinal_head(theta=0.8)
    head["ord.b"] = rng.normal(size=4)
    p_ge, _ = ordinal_probabilities(np.linspace(-8, 0, 500), head)
    monotone = bool(np.all(np.diff(p_ge, axis=0) > 0))

    # lambda partition: lam = 1 leaves the contact head bitwise unchanged; the LM never moves
    _, train_recs, _ = corpus
    lm = LanguageModel(hidden=4, layers=1, seed=0)
    cfg = EncoderConfig(arch="bilstm-1", hidden=6, dim=4, fusion_dim=6, use_lm=True, lm_dim=lm.state_dim)
    model = EmbeddingModel(cfg, lm=lm, contact_hidden=4, seed=0)
    before = {k: v.copy() for k, v in model.params.items()}
    pairs = [(a.tokens, b.tokens, t) for a, b, t in all_pairs(train_recs[:5])]
    cons = [(r.tokens, r.contacts) for r in train_recs[:2]]
    opt = nn.Adam(lr=0.05)
    for _ in range(3):
        multitask_step(model, opt, pairs, cons, 1.0)
    head_same = all(model.params[k].tobytes() == before[k].tobytes() for k in model.params if k.startswith("con."))
    for _ in range(3):
        multitask_step(model, opt, pairs, cons, 0.1)
    lm_same = all(model.params[k].tobytes() == before[k].tobytes() for k in model.params if k.startswith("lm."))
    elapsed = time.perf_counter() - t0
    ok = (sym_err <= 1e-9 and max_s <= 0 and stoch_err <= 1e-9 and a_ok and pf_ok and monotone
          and head_same and lm_same and elapsed < 60)
    verdict(report, 4, ok, f"sym_err={sym_err:.1e} max_score={max_s:.3g} stoch_err={stoch_err:.1e} "
                           f"a_in_(0,1)_for_n,m>=2={a_ok} features_sym={pf_ok} p_ge_monotone={monotone} "
                           f"contact_head_frozen_at_lam1={head_same} lm_frozen={lm_same} time={elapsed:.1f}s")


# -- 5 --------------------------------------------------------------------------------------------


def test_criterion_5_overfit(report, corpus, multitask_model):
    _, train_recs, held = corpus
    model, _, untrained, elapsed = multitask_model
    train_acc = validate(model, all_pairs(train_recs)).accuracy
    held_acc = validate(model, all_pairs(held)).accuracy
    families = len({r.hierarchy for r in corpus[0]})
    ok = families == 20 and train_acc >= 0.95 and held_acc > untrained.accuracy and elapsed < 1800
    verdict(report, 5, ok, f"families={families} train_acc={train_acc:.4f} heldout_acc={held_acc:.4f} "
                           f"untrained_heldout_acc={untrained.accuracy:.4f} train_time={elapsed:.0f}s")


# -- 6 --------------------------------------------------------------------------------------------


def _probe_accuracy(model, recs):
    feats = model.embed([r.tokens for r in recs])
    split = protein_split(len(recs), 0.25, seed=0)
    out = ss_probe(feats, [r.ss for r in recs], split, ProbeConfig(hidden=64, layers=2, epochs=30,
                                                                  batch_size=128, lr=0.003))
    return out["test"]["accuracy"]


def test_criterion_6_ablation_direction(report, corpus, multitask_model, similarity_only_model):
    recs, _, held = corpus
    model = multitask_model[0]
    pairs = all_pairs(held)
    levels = np.array([t for *_, t in pairs])
    emb = {}
    ssa = score_pairs(model, pairs, emb)
    me = np.array([SCORERS["me"][0](emb[a.id], emb[b.id])[0] for a, b, _ in pairs])
    zero = np.zeros(len(pairs), int)
    ap_ssa = evaluate_pairs(ssa, levels, predicted=zero).ap_fold
    ap_me = evaluate_pairs(me, levels, predicted=zero).ap_fold
    with warnings.catch_warnings():
        # the three-state synthetic corpus leaves five SS8 classes unused
        warnings.simplefilter("ignore", RuntimeWarning)
        acc_multi = _probe_accuracy(model, recs)
        acc_sim = _probe_accuracy(similarity_only_model[0], recs)
    ok = ap_ssa >= ap_me and acc_multi >= acc_sim
    verdict(report, 6, ok, f"fold_AP ssa={ap_ssa:.4f} me={ap_me:.4f}; ss_probe_acc "
                           f"lam=0.1:{acc_multi:.4f} lam=1:{acc_sim:.4f}", soft=True)


# -- 7 ------------------------------------------------------------------------------------------------


def test_criterion_7_sampler_statistics(report, corpus):
    recs = corpus[0]
    sampler = PairSampler(recs, PairSamplerConfig(smoothing=0.5, seed=7))
    draws = sampler.sample_indices(100_000)
    freq = np.bincount(draws[:, 2], minlength=5) / len(draws)
    expected = level_probabilities(sampler.counts, 0.5)
    dev = float(np.abs(freq - expected).max())
    n, p = 10_000, 0.05
    tok = np.random.default_rng(1).integers(0, 20, n)
    frac = float((perturb_sequence(tok, p, np.random.default_rng(2)) != tok).mean())
    q = p * 19 / 20
    sigma = math.sqrt(q * (1 - q) / n)
    ok = dev <= 0.02 and abs(frac - q) <= 3 * sigma
    verdict(report, 7, ok, f"level_freq={np.round(freq, 4).tolist()} expected={np.round(expected, 4).tolist()} "
                           f"max_dev={dev:.4f} changed_frac={frac:.4f} (target {q:.4f} +- {3 * sigma:.4f})")


# -- 8 ------------------------------------------------------------------------------------------------


def test_criterion_8_lm_baseline(report, corpus):
    seqs = [r.tokens for r in corpus[0]]
    cfg = LMConfig(epochs=1, batch_size=8)
    untrained = LanguageModel(cfg.hidden, cfg.layers, seed=cfg.seed).loss(seqs)
    lm, _ = pretrain_lm(seqs, cfg)
    after = lm.loss(seqs)
    uniform = 2 * math.log(20)
    ok = abs(untrained - uniform) <= 0.5 and after < untrained
    verdict(report, 8, ok, f"uniform={uniform:.4f} untrained={untrained:.4f} after_one_epoch={after:.4f}")


# -- 9 ------------------------------------------------------------------------------------------------


def _cli_session(root, seed):
    d = root
    steps = [
        ["synth-data", "--out", d / "scop", "--classes", 2, "--folds", 1, "--superfamilies", 2, "--sequences", 3,
         "--min-length", 20, "--max-length", 28],
        ["synth-data", "--kind", "tm", "--per-category", 3, "--out", d / "tm"],
        ["pretrain-lm", "--corpus", d / "scop/seqs.fasta", "--hidden", 8, "--layers", 1, "--out", d / "lm.ckpt"],
        ["train", "--fasta", d / "scop/seqs.fasta", "--labels", d / "scop/labels.tsv", "--coords",
         d / "scop/coords.tsv", "--lm", d / "lm.ckpt", "--epochs", 2, "--epoch-size", 16, "--pair-batch", 8,
         "--contact-batch", 2, "--hidden", 6, "--dim", 4, "--fusion-dim", 6, "--out", d / "model"],
        ["embed", "--fasta", d / "scop/seqs.fasta", "--ckpt", d / "model/model.ckpt", "--out", d / "emb.txt"],
        ["compare", "--a", d / "scop/seqs.fasta", "--ckpt", d / "model/model.ckpt", "--out", d / "cmp.tsv"],
        ["compare", "--a", d / "scop/seqs.fasta", "--scorer", "nw", "--out", d / "nw.tsv"],
        ["eval-scop", "--fasta", d / "scop/seqs.fasta", "--labels", d / "scop/labels.tsv", "--ckpt",
         d / "model/model.ckpt", "--out", d / "scop.tsv"],
        ["eval-contacts", "--fasta", d / "scop/seqs.fasta", "--coords", d / "scop/coords.tsv", "--ckpt",
         d / "model/model.ckpt", "--out", d / "contacts.tsv"],
        ["probe-ss", "--fasta", d / "scop/seqs.fasta", "--ss", d / "scop/ss.tsv", "--ckpt", d / "model/model.ckpt",
         "--hidden", 8, "--epochs", 2, "--out", d / "probe.tsv"],
        ["eval-tm", "--fasta", d / "tm/seqs.fasta", "--tm", d / "tm/tm.tsv", "--hidden", 4, "--epochs", 1,
         "--folds", 3, "--out", d / "tm.tsv"],
        ["grad-check", "--op", "ssa", "--seeds", 2, "--out", d / "grad.tsv"],
    ]
    codes = [cli.main([str(x) for x in s] + ["--workers", "1", "--seed", str(seed)]) for s in steps]
    files = {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*"))
             if p.is_file() and "manifest" not in p.name}
    return codes, files


def test_criterion_9_determinism(report, tmp_path):
    codes1, run1 = _cli_session(tmp_path / "one", seed=5)
    codes2, run2 = _cli_session(tmp_path / "two", seed=5)
    differing = sorted(k for k in run1 if run1[k] != run2.get(k))
    ok = set(codes1) == {0} and set(codes2) == {0} and run1.keys() == run2.keys() and not differing
    verdict(report, 9, ok, f"{len(run1)} output files compared (manifests excluded), exit codes={codes1}, "
                           f"differing={differing}")
