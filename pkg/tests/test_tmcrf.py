import itertools
import math

import numpy as np
import pytest
from scipy.special import logsumexp

from ssaembed.data import Region, generate_tm_corpus
from ssaembed.tmcrf import (
    CATEGORIES, CRFConfig, Grammar, GrammarError, TMTagger, build_default_grammar, crf_log_likelihood_and_grads,
    crf_log_partition, regions_to_states, states_to_regions, stratified_folds, tm_category_score,
    tm_report_tsv, viterbi,
)


def random_problem(rng, n, S, forbid=0.3):
    E = rng.normal(size=(n, S))
    T = rng.normal(size=(S, S))
    T[rng.random((S, S)) < forbid] = -np.inf
    start, end = rng.normal(size=S), rng.normal(size=S)
    start[rng.random(S) < forbid / 2] = -np.inf
    return E, T, start, end


def all_paths(n, S):
    return itertools.product(range(S), repeat=n)


def score(E, T, s, e, p):
    return s[p[0]] + sum(E[t, p[t]] for t in range(len(p))) + sum(T[p[t], p[t + 1]] for t in range(len(p) - 1)) + e[p[-1]]


def test_log_partition_matches_enumeration(rng):
    for _ in range(100):
        n, S = int(rng.integers(1, 7)), int(rng.integers(1, 5))
        E, T, s, e = random_problem(rng, n, S)
        scores = [score(E, T, s, e, p) for p in all_paths(n, S)]
        brute = logsumexp(scores)
        got = crf_log_partition(E, T, s, e)
        if np.isfinite(brute):
            assert abs(got - brute) <= 1e-8
        else:
            assert got == -np.inf


def test_viterbi_matches_enumeration(rng):
    for _ in range(150):
        n, S = int(rng.integers(1, 7)), int(rng.integers(1, 5))
        E, T, s, e = random_problem(rng, n, S)
        # coarse values create exact ties, exercising the tie rule
        E = np.round(E)
        best, arg = -np.inf, None
        for p in all_paths(n, S):  # lexicographic order; keep the first maximum
            v = score(E, T, s, e, p)
            if v > best:
                best, arg = v, p
        if arg is None:
            with pytest.raises(GrammarError):
                viterbi(E, T, s, e)
            continue
        path = viterbi(E, T, s, e)
        assert tuple(path) == arg
        assert abs(score(E, T, s, e, path) - best) <= 1e-8


def test_uniform_and_single_state_likelihoods():
    n, k = 5, 3
    z = np.zeros((n, k))
    ll = crf_log_likelihood_and_grads(z, np.zeros((k, k)), np.zeros(k), np.zeros(k), np.array([0, 2, 1, 1, 0]))[0]
    assert ll == pytest.approx(-n * math.log(k))
    ll = crf_log_likelihood_and_grads(np.ones((4, 1)), np.zeros((1, 1)), np.zeros(1), np.zeros(1), np.zeros(4, int))[0]
    assert ll == pytest.approx(0.0)
    assert viterbi(np.ones((4, 1)), np.zeros((1, 1)), np.zeros(1), np.zeros(1)).tolist() == [0] * 4


def test_invalid_path_rejected():
    T = np.array([[0.0, -np.inf], [0.0, 0.0]])
    with pytest.raises(GrammarError):
        crf_log_likelihood_and_grads(np.zeros((2, 2)), T, np.zeros(2), np.zeros(2), np.array([0, 1]))


def test_default_grammar_never_emits_forbidden_moves(rng):
    g = build_default_grammar()
    tagger = TMTagger(3, g, hidden=2, seed=0)
    T, s, e = tagger.potentials()
    for _ in range(1000):
        n = int(rng.integers(1, 30))
        path = viterbi(rng.normal(scale=3, size=(n, len(g))), T, s, e)
        assert g.path_valid(path)


def test_grammar_rejects_dead_states():
    with pytest.raises(GrammarError):
        Grammar([("a", "inside"), ("b", "outside")], [("a", "a")], ["a"], ["a"])


def test_grammar_round_trip(tmp_path):
    g = build_default_grammar()
    g.save(tmp_path / "g.json")
    back = Grammar.load(tmp_path / "g.json")
    assert back.names == g.names and np.array_equal(back.allowed, g.allowed)
    assert Grammar.default().to_dict() == g.to_dict()


def test_states_to_regions_examples():
    g = build_default_grammar()
    glob = g.index("glob")
    assert states_to_regions([glob] * 7, g) == [Region("globular", 0, 7)]
    sp = [g.index(f"sp{min(i + 1, 5)}") for i in range(6)]
    out = states_to_regions(sp + [g.index("out")] * 3, g)
    assert [r.label for r in out] == ["SP", "outside"]
    regs = [Region("inside", 0, 3), Region("TM", 3, 10), Region("outside", 10, 14),
            Region("TM", 14, 21), Region("inside", 21, 25), Region("TM", 25, 31), Region("outside", 31, 33)]
    back = states_to_regions(regions_to_states(regs, g), g)
    assert back == regs
    assert sum(r.label == "TM" for r in back) == 3


def test_category_score_examples():
    true = [Region("inside", 0, 5), Region("TM", 5, 25), Region("outside", 25, 40)]
    assert tm_category_score(true, true)["correct"]
    shifted = [Region("inside", 0, 21), Region("TM", 21, 30), Region("outside", 30, 40)]
    assert not tm_category_score(shifted, true)["correct"]  # overlap of 4
    five = [Region("inside", 0, 20), Region("TM", 20, 30), Region("outside", 30, 40)]
    assert tm_category_score(five, true)["correct"]
    extra = true[:2] + [Region("outside", 25, 30), Region("TM", 30, 38), Region("inside", 38, 40)]
    assert not tm_category_score(extra, true)["correct"]
    glob = [Region("globular", 0, 40)]
    assert tm_category_score(glob, glob)["correct"]
    assert not tm_category_score(true, glob)["correct"]
    sp_glob = [Region("SP", 0, 10), Region("globular", 10, 40)]
    assert tm_category_score(sp_glob, sp_glob)["correct"]
    assert not tm_category_score(glob, sp_glob)["correct"]


def test_folds_are_stratified_and_reproducible():
    cats = ["TM"] * 20 + ["Globular"] * 10 + ["SP+TM"] * 3
    a = stratified_folds(cats, folds=10, seed=4)
    assert np.array_equal(a, stratified_folds(cats, folds=10, seed=4))
    tm_counts = np.bincount(a[:20], minlength=10)
    assert tm_counts.max() - tm_counts.min() <= 1


def test_oracle_emissions_score_every_protein_correct():
    recs = generate_tm_corpus(per_category=5, seed=2)
    g = build_default_grammar()
    T, s, e = TMTagger(1, g, hidden=1).potentials()
    hits = {c: [] for c in CATEGORIES}
    for r in recs:
        path = regions_to_states(r.regions, g)
        E = np.full((len(path), len(g)), -1e6)
        E[np.arange(len(path)), path] = 0.0
        pred = states_to_regions(viterbi(E, T, s, e), g)
        hits[r.meta["category"]].append(tm_category_score(pred, r.regions)["correct"])
    assert all(all(v) for v in hits.values())


def test_tagger_learns_and_round_trips(tmp_path, rng):
    g = build_default_grammar()
    recs = generate_tm_corpus(per_category=2, seed=0)
    paths = [regions_to_states(r.regions, g) for r in recs]
    feats = [np.eye(len(g))[p] + 0.1 * rng.normal(size=(len(p), len(g))) for p in paths]
    tagger = TMTagger(len(g), g, hidden=4, seed=0)
    before = tagger.loss_and_grads(feats, paths)[0]
    losses = tagger.fit(feats, paths, CRFConfig(hidden=4, epochs=5, batch_size=4, lr=0.05))
    assert tagger.loss_and_grads(feats, paths)[0] < before and len(losses) == 5
    tagger.save(str(tmp_path / "t.ckpt"))
    back, _ = TMTagger.load(str(tmp_path / "t.ckpt"))
    assert [p.tolist() for p in back.decode(feats)] == [p.tolist() for p in tagger.decode(feats)]


def test_report_layout():
    tsv = tm_report_tsv({"TM": 1.0, "SP+TM": None, "Globular": 0.5, "Globular+SP": 0.25, "overall": 0.6})
    header, row = tsv.strip().split("\n")
    assert header.split("\t") == list(CATEGORIES) + ["overall"]
    assert row.split("\t")[1] == "NA"
