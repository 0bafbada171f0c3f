"""Transmembrane / signal-peptide tagger: biLSTM emissions into a linear-chain CRF.

The state grammar chains five states for every signal-peptide and TM-helix
segment, which enforces a minimum segment length of five. Forbidden moves
carry a score of ``-inf`` that no learned transition score can lift.
"""
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy.special import logsumexp

from . import nn
from .data.alphabet import one_hot
from .data.records import Region, labels_to_regions, tm_category

CHAIN = 5
REGION_ORDER = ("SP", "TM", "inside", "outside", "globular")
CATEGORIES = ("TM", "SP+TM", "Globular", "Globular+SP")


class GrammarError(ValueError):
    """A label path or decoding problem is incompatible with the grammar."""


class Grammar:
    """Finite state machine over CRF states.

    Parameters
    ----------
    states : list of ``(name, region)`` pairs
    transitions : iterable of allowed ``(from_name, to_name)`` moves
    start, end : names of the allowed first and last states
    """

    def __init__(self, states, transitions, start, end):
        self.names = [s for s, _ in states]
        self.regions = [r for _, r in states]
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate state names")
        idx = {s: i for i, s in enumerate(self.names)}
        S = len(states)
        self.allowed = np.zeros((S, S), bool)
        for a, b in transitions:
            self.allowed[idx[a], idx[b]] = True
        self.start = np.zeros(S, bool)
        self.start[[idx[s] for s in start]] = True
        self.end = np.zeros(S, bool)
        self.end[[idx[s] for s in end]] = True
        self._check()

    def __len__(self):
        return len(self.names)

    def index(self, name):
        return self.names.index(name)

    def _reach(self, seeds, adj):
        seen = seeds.copy()
        frontier = seeds.copy()
        while frontier.any():
            frontier = adj[frontier].any(0) & ~seen
            seen |= frontier
        return seen

    def _check(self):
        if not self._reach(self.start, self.allowed).all():
            raise GrammarError("some states are unreachable from every start state")
        if not self._reach(self.end, self.allowed.T).all():
            raise GrammarError("some states cannot reach an end state")

    @property
    def trans_mask(self):
        return np.where(self.allowed, 0.0, -np.inf)

    @property
    def start_mask(self):
        return np.where(self.start, 0.0, -np.inf)

    @property
    def end_mask(self):
        return np.where(self.end, 0.0, -np.inf)

    def path_valid(self, path):
        path = np.asarray(path)
        return bool(len(path) > 0 and self.start[path[0]] and self.end[path[-1]]
                    and self.allowed[path[:-1], path[1:]].all())

    # -- serialisation --------------------------------------------------------

    def to_dict(self):
        S = len(self)
        return {
            "states": [{"name": n, "region": r} for n, r in zip(self.names, self.regions)],
            "transitions": [[self.names[a], self.names[b]] for a in range(S) for b in range(S)
                            if self.allowed[a, b]],
            "start": [self.names[s] for s in range(S) if self.start[s]],
            "end": [self.names[s] for s in range(S) if self.end[s]],
        }

    @classmethod
    def from_dict(cls, d):
        return cls([(s["name"], s["region"]) for s in d["states"]], [tuple(t) for t in d["transitions"]],
                   d["start"], d["end"])

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    @classmethod
    def default(cls):
        text = resources.files("ssaembed").joinpath("resources/tm_grammar.json").read_text("utf-8")
        return cls.from_dict(json.loads(text))


def build_default_grammar(chain=CHAIN):
    """SP chain, in->out and out->in helix chains, inside / outside loops, globular."""
    sp = [f"sp{k}" for k in range(1, chain + 1)]
    io = [f"tm_io{k}" for k in range(1, chain + 1)]
    oi = [f"tm_oi{k}" for k in range(1, chain + 1)]
    states = [(s, "SP") for s in sp] + [(s, "TM") for s in io] + [(s, "TM") for s in oi]
    states += [("in", "inside"), ("out", "outside"), ("glob", "globular")]
    trans = []
    for c in (sp, io, oi):
        trans += list(zip(c[:-1], c[1:])) + [(c[-1], c[-1])]
    trans += [(sp[-1], "out"), (sp[-1], "glob"), (sp[-1], oi[0])]
    trans += [(io[-1], "out"), (oi[-1], "in")]
    trans += [("in", "in"), ("in", io[0]), ("out", "out"), ("out", oi[0]), ("glob", "glob")]
    start = [sp[0], io[0], oi[0], "in", "out", "glob"]
    end = [sp[-1], io[-1], oi[-1], "in", "out", "glob"]
    return Grammar(states, trans, start, end)


# -- label paths <-> regions ---------------------------------------------------

def regions_to_states(regions, grammar):
    """State path for an annotated protein under the default naming scheme."""
    path = []
    for k, r in enumerate(regions):
        n = len(r)
        if r.label == "TM":
            before = regions[k - 1].label if k > 0 else None
            after = regions[k + 1].label if k + 1 < len(regions) else None
            into_out = before == "inside" or (before is None and after == "outside")
            chain = "tm_io" if into_out else "tm_oi"
            path += [grammar.index(f"{chain}{min(i + 1, CHAIN)}") for i in range(n)]
        elif r.label == "SP":
            path += [grammar.index(f"sp{min(i + 1, CHAIN)}") for i in range(n)]
        else:
            path += [grammar.index({"inside": "in", "outside": "out", "globular": "glob"}[r.label])] * n
    path = np.array(path, dtype=np.int64)
    if not grammar.path_valid(path):
        raise GrammarError("annotation cannot be expressed in the grammar")
    return path


def states_to_regions(path, grammar):
    """Collapse a state path into maximal same-region runs."""
    return labels_to_regions([grammar.regions[s] for s in path])


# -- CRF core --------------------------------------------------------------------

def path_score(emissions, trans, start, end, path):
    path = np.asarray(path)
    n = len(path)
    return float(start[path[0]] + emissions[np.arange(n), path].sum()
                 + trans[path[:-1], path[1:]].sum() + end[path[-1]])


def forward_backward(emissions, trans, start, end):
    """Log-space forward/backward tables and logZ."""
    n, S = emissions.shape
    la = np.empty((n, S))
    lb = np.empty((n, S))
    la[0] = start + emissions[0]
    for t in range(1, n):
        la[t] = emissions[t] + logsumexp(la[t - 1][:, None] + trans, axis=0)
    lb[-1] = end
    for t in range(n - 2, -1, -1):
        lb[t] = logsumexp(trans + (emissions[t + 1] + lb[t + 1])[None, :], axis=1)
    logZ = float(logsumexp(la[-1] + end))
    return la, lb, logZ


def crf_log_partition(emissions, trans, start, end):
    return forward_backward(emissions, trans, start, end)[2]


def crf_log_likelihood_and_grads(emissions, trans, start, end, path):
    """log p(path) and its gradients w.r.t. emissions, transitions, start and end scores."""
    n, S = emissions.shape
    path = np.asarray(path)
    sc = path_score(emissions, trans, start, end, path)
    if not np.isfinite(sc):
        raise GrammarError("label path violates the grammar")
    la, lb, logZ = forward_backward(emissions, trans, start, end)
    if not np.isfinite(logZ):
        raise GrammarError("no path satisfies the grammar for this length")
    node = np.exp(la + lb - logZ)
    gE = -node
    gE[np.arange(n), path] += 1.0
    gT = np.zeros((S, S))
    np.add.at(gT, (path[:-1], path[1:]), 1.0)
    if n > 1:
        xi = np.exp(la[:-1, :, None] + trans[None] + (emissions[1:] + lb[1:])[:, None, :] - logZ)
        gT -= xi.sum(0)
    gs = -node[0]
    gs[path[0]] += 1.0
    ge = -np.exp(la[-1] + end - logZ)
    ge[path[-1]] += 1.0
    gT[~np.isfinite(trans)] = 0.0
    return sc - logZ, gE, gT, gs, ge


def viterbi(emissions, trans, start, end):
    """Best path; among equal-scoring optima the lexicographically smallest one."""
    n, S = emissions.shape
    V = np.empty((n, S))
    V[-1] = emissions[-1] + end
    for t in range(n - 2, -1, -1):
        V[t] = emissions[t] + (trans + V[t + 1][None, :]).max(1)
    first = start + V[0]
    if not np.isfinite(first.max()):
        raise GrammarError("no path satisfies the grammar for this length")
    path = np.empty(n, dtype=np.int64)
    path[0] = int(np.argmax(first))
    for t in range(1, n):
        path[t] = int(np.argmax(trans[path[t - 1]] + V[t]))
    return path


# -- emission network + CRF model ---------------------------------------------

@dataclass
class CRFConfig:
    hidden: int = 64
    epochs: int = 20
    batch_size: int = 8
    lr: float = 0.005
    seed: int = 0


class TMTagger:
    """Single-layer biLSTM emission network plus a grammar-masked CRF."""

    def __init__(self, n_features, grammar=None, hidden=64, seed=0, params=None):
        self.grammar = grammar if grammar is not None else Grammar.default()
        self.n_features = n_features
        self.hidden = hidden
        S = len(self.grammar)
        if params is None:
            rng = np.random.default_rng(seed)
            params = {}
            params.update(nn.init_lstm(rng, n_features, hidden, "crf.fwd."))
            params.update(nn.init_lstm(rng, n_features, hidden, "crf.rev."))
            params.update(nn.init_linear(rng, 2 * hidden, S, "crf.out."))
            params["crf.trans"] = np.zeros((S, S))
            params["crf.start"] = np.zeros(S)
            params["crf.end"] = np.zeros(S)
        self.params = params

    def potentials(self):
        g = self.grammar
        p = self.params
        return p["crf.trans"] + g.trans_mask, p["crf.start"] + g.start_mask, p["crf.end"] + g.end_mask

    def emissions(self, features_list):
        X, lengths = nn.pad_batch([np.asarray(f, float) for f in features_list])
        p = self.params
        H, cache = nn.bilstm_forward(X, lengths, p["crf.fwd.W"], p["crf.fwd.b"], p["crf.rev.W"], p["crf.rev.b"])
        E = nn.linear_forward(H, p["crf.out.W"], p["crf.out.b"])
        return E, lengths, (H, cache)

    def loss_and_grads(self, features_list, paths):
        """Mean negative log-likelihood over the batch and parameter gradients."""
        E, lengths, (H, cache) = self.emissions(features_list)
        trans, start, end = self.potentials()
        gE = np.zeros_like(E)
        gT = np.zeros_like(trans)
        gs = np.zeros_like(start)
        ge = np.zeros_like(end)
        total = 0.0
        B = len(paths)
        for k, path in enumerate(paths):
            n = lengths[k]
            ll, e, t, s, en = crf_log_likelihood_and_grads(E[k, :n], trans, start, end, path)
            total -= ll
            gE[k, :n] = -e / B
            gT -= t / B
            gs -= s / B
            ge -= en / B
        p = self.params
        gH, gW, gb = nn.linear_backward(gE, H, p["crf.out.W"])
        _, gWf, gbf, gWr, gbr = nn.bilstm_backward(gH, cache)
        grads = {"crf.out.W": gW, "crf.out.b": gb, "crf.fwd.W": gWf, "crf.fwd.b": gbf,
                 "crf.rev.W": gWr, "crf.rev.b": gbr, "crf.trans": gT, "crf.start": gs, "crf.end": ge}
        return total / B, grads

    def decode(self, features_list):
        E, lengths, _ = self.emissions(features_list)
        trans, start, end = self.potentials()
        return [viterbi(E[k, :lengths[k]], trans, start, end) for k in range(len(lengths))]

    def predict_regions(self, features_list):
        return [states_to_regions(p, self.grammar) for p in self.decode(features_list)]

    def fit(self, features_list, paths, config=CRFConfig()):
        rng = np.random.default_rng(config.seed)
        opt = nn.Adam(lr=config.lr)
        losses = []
        for _ in range(config.epochs):
            order = rng.permutation(len(paths))
            epoch = []
            for s in range(0, len(order), config.batch_size):
                idx = order[s:s + config.batch_size]
                loss, grads = self.loss_and_grads([features_list[i] for i in idx], [paths[i] for i in idx])
                opt.step(self.params, grads)
                epoch.append(loss)
            losses.append(float(np.mean(epoch)))
        return losses

    def save(self, path, extra_meta=None):
        meta = {"kind": "tm-tagger", "n_features": self.n_features, "hidden": self.hidden,
                "grammar": self.grammar.to_dict()}
        meta.update(extra_meta or {})
        nn.save_checkpoint(path, self.params, meta)

    @classmethod
    def load(cls, path):
        params, meta = nn.load_checkpoint(path)
        if meta.get("kind") != "tm-tagger":
            raise ValueError(f"{path} is not a tm-tagger checkpoint")
        return cls(meta["n_features"], Grammar.from_dict(meta["grammar"]), meta["hidden"], params=params), meta


def crf_log_likelihood(tagger, features, path):
    """log p(path | features) for one protein and the gradients of that log-likelihood."""
    loss, grads = tagger.loss_and_grads([features], [path])
    return -loss, {k: -v for k, v in grads.items()}


def onehot_features(tokens):
    return one_hot(np.asarray(tokens))


# -- region scoring ---------------------------------------------------------------

def _overlap(a, b):
    return max(0, min(a.end, b.end) - max(a.start, b.start))


def tm_category_score(predicted, true, category=None, min_overlap=5):
    """Whether a predicted region list counts as correct for the true annotation.

    Returns ``{"category": ..., "correct": bool}``.
    """
    category = category or tm_category(true)
    pred_sp = [r for r in predicted if r.label == "SP"]
    leading_sp = bool(predicted) and predicted[0].label == "SP" and len(pred_sp) == 1
    pred_tm = [r for r in predicted if r.label == "TM"]
    true_tm = [r for r in true if r.label == "TM"]

    def helices_match():
        if len(pred_tm) != len(true_tm):
            return False
        used = [False] * len(pred_tm)
        for t in true_tm:
            for k, p in enumerate(pred_tm):
                if not used[k] and _overlap(t, p) >= min_overlap:
                    used[k] = True
                    break
            else:
                return False
        return True

    if category == "TM":
        ok = not pred_sp and helices_match()
    elif category == "SP+TM":
        ok = leading_sp and helices_match()
    elif category == "Globular":
        ok = not pred_sp and not pred_tm
    elif category == "Globular+SP":
        ok = leading_sp and not pred_tm
    else:
        raise ValueError(f"unknown category {category!r}")
    return {"category": category, "correct": bool(ok)}


def stratified_folds(categories, folds=10, seed=0):
    """Fold index per item, dealing each category round-robin after a seeded shuffle."""
    rng = np.random.default_rng(seed)
    categories = list(categories)
    out = np.empty(len(categories), dtype=np.int64)
    offset = 0
    for cat in sorted(set(categories)):
        idx = np.flatnonzero([c == cat for c in categories])
        idx = idx[rng.permutation(len(idx))]
        out[idx] = (np.arange(len(idx)) + offset) % folds
        offset += len(idx)
    return out


def _run_fold(args):
    features, paths, train_idx, test_idx, grammar_dict, config = args
    grammar = Grammar.from_dict(grammar_dict)
    tagger = TMTagger(features[0].shape[1], grammar, config.hidden, seed=config.seed)
    tagger.fit([features[i] for i in train_idx], [paths[i] for i in train_idx], config)
    return tagger.predict_regions([features[i] for i in test_idx])


def crossvalidate_tm(records, features, folds=10, config=CRFConfig(), grammar=None, seed=0, workers=1):
    """Stratified k-fold accuracy per category and overall.

    `features` is a list of per-protein (n, F) arrays aligned with `records`.
    Categories with no proteins are reported as ``None``.
    """
    grammar = grammar if grammar is not None else Grammar.default()
    cats = [r.meta.get("category") or tm_category(r.regions) for r in records]
    paths = [regions_to_states(r.regions, grammar) for r in records]
    fold_of = stratified_folds(cats, folds, seed)
    jobs = []
    for f in range(folds):
        test_idx = np.flatnonzero(fold_of == f)
        train_idx = np.flatnonzero(fold_of != f)
        if len(test_idx) and len(train_idx):
            jobs.append((f, test_idx, (features, paths, train_idx, test_idx, grammar.to_dict(), config)))
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_run_fold, [j[2] for j in jobs]))
    else:
        results = [_run_fold(j[2]) for j in jobs]
    correct = np.zeros(len(records), bool)
    for (_, test_idx, _), preds in zip(jobs, results):
        for i, pred in zip(test_idx, preds):
            correct[i] = tm_category_score(pred, records[i].regions, cats[i])["correct"]
    out = {}
    for cat in CATEGORIES:
        sel = [c == cat for c in cats]
        out[cat] = float(correct[sel].mean()) if any(sel) else None
    out["overall"] = float(correct.mean()) if len(records) else None
    return out, fold_of


def tm_report_tsv(result):
    keys = list(CATEGORIES) + ["overall"]
    row = ["NA" if result[k] is None else f"{result[k]:.6f}" for k in keys]
    return "\t".join(keys) + "\n" + "\t".join(row) + "\n"


__all__ = [
    "Grammar", "GrammarError", "build_default_grammar", "regions_to_states", "states_to_regions",
    "path_score", "forward_backward", "crf_log_partition", "crf_log_likelihood_and_grads",
    "viterbi", "CRFConfig", "TMTagger", "crf_log_likelihood", "onehot_features",
    "tm_category_score", "stratified_folds", "crossvalidate_tm", "tm_report_tsv", "Region",
]
