"""Registry of finite-difference gradient checks for every differentiable op.

Each entry builds a small random problem from a seed and returns
``(fn, params)`` for :func:`ssaembed.nn.grad_check`. Outputs that are not
already scalar are reduced with a fixed random linear readout. Problem scales
are chosen so gradients stay well above finite-difference round-off.
"""
import numpy as np

from . import nn
from .contact import contact_backward, contact_forward, contact_loss_from_logits, init_contact_head
from .encoder import Encoder, EncoderConfig, fuse_inputs, fuse_inputs_backward
from .lm import LanguageModel
from .similarity import SCORERS, init_ordinal_head, similarity_loss
from .tmcrf import TMTagger, build_default_grammar, crf_log_likelihood_and_grads, regions_to_states
from .data.records import Region

TOLERANCE = 1e-4
MAX_ENTRIES = 40


def _fusion(rng):
    n, F, L, H = 6, 5, 4, 3
    p = {"x": rng.normal(size=(n, F)), "h_lm": rng.normal(size=(n, L)),
         "Wx": rng.normal(size=(H, F)), "b": rng.normal(size=H), "Wlm": rng.normal(size=(H, L))}
    R = rng.normal(size=(n, H))

    def fn(p):
        h, pre = fuse_inputs(p["x"], p["h_lm"], p["Wx"], p["b"], p["Wlm"])
        gWx, gb, gWlm, gh = fuse_inputs_backward(R, pre, p["x"], p["h_lm"], p["Wx"], p["Wlm"])
        return float((R * h).sum()), {"Wx": gWx, "b": gb, "Wlm": gWlm, "h_lm": gh}
    return fn, p


def _lstm_cell(rng):
    B, n_in, H = 3, 4, 5
    p = {"x": rng.normal(size=(B, n_in)), "h": rng.normal(size=(B, H)), "c": rng.normal(size=(B, H)),
         "W": rng.normal(size=(4 * H, n_in + H)), "b": rng.normal(size=4 * H)}
    Rh, Rc = rng.normal(size=(B, H)), rng.normal(size=(B, H))

    def fn(p):
        h, c, cache = nn.lstm_cell_forward(p["x"], p["h"], p["c"], p["W"], p["b"])
        gx, gh, gc, gW, gb = nn.lstm_cell_backward(Rh, Rc, cache)
        return float((Rh * h).sum() + (Rc * c).sum()), {"x": gx, "h": gh, "c": gc, "W": gW, "b": gb}
    return fn, p


def _bilstm(rng):
    lengths = np.array([5, 3, 4])
    n_in, H = 3, 4
    X, _ = nn.pad_batch([rng.normal(size=(n, n_in)) for n in lengths])
    p = {"X": X, "Wf": rng.normal(size=(4 * H, n_in + H)), "bf": rng.normal(size=4 * H),
         "Wr": rng.normal(size=(4 * H, n_in + H)), "br": rng.normal(size=4 * H)}
    R = rng.normal(size=(len(lengths), X.shape[1], 2 * H)) * nn.length_mask(lengths, X.shape[1])[..., None]

    def fn(p):
        out, cache = nn.bilstm_forward(p["X"], lengths, p["Wf"], p["bf"], p["Wr"], p["br"])
        gX, gWf, gbf, gWr, gbr = nn.bilstm_backward(R, cache)
        gX = gX * nn.length_mask(lengths, X.shape[1])[..., None]
        return float((R * out).sum()), {"X": gX, "Wf": gWf, "bf": gbf, "Wr": gWr, "br": gbr}
    return fn, p


def _stacked_encoder(rng):
    cfg = EncoderConfig(arch="bilstm-3", hidden=4, dim=3, use_lm=True, lm_dim=5, fusion_dim=4)
    enc = Encoder(cfg, seed=int(rng.integers(2 ** 31)))
    tokens = [rng.integers(0, 21, n) for n in (5, 3)]
    lm_states = [rng.normal(size=(len(t), 5)) for t in tokens]
    R = rng.normal(size=(2, 5, 3)) * nn.length_mask([5, 3], 5)[..., None]

    def fn(p):
        enc.params = p
        Z, _, cache = enc.forward(tokens, lm_states)
        return float((R * Z).sum()), enc.backward(R, cache)
    return fn, dict(enc.params)


def _scorer(name):
    fwd, bwd = SCORERS[name]

    def make(rng):
        # odd lengths: with an even count the L1 sign terms of UA can cancel to an
        # exact zero, which finite differences only resolve to round-off
        p = {"Z1": rng.normal(size=(int(rng.choice([1, 3, 5])), 3)),
             "Z2": rng.normal(size=(int(rng.choice([1, 3, 5])), 3))}

        def fn(p):
            s, cache = fwd(p["Z1"], p["Z2"])
            g1, g2 = bwd(1.0, cache)
            return float(s), {"Z1": g1, "Z2": g2}
        return fn, p
    return make


def _ordinal(rng):
    head = init_ordinal_head()
    head["ord.u"] = rng.normal(size=4)
    head["ord.b"] = rng.normal(size=4)
    p = dict(head, s=-rng.exponential(2.0, size=12))
    levels = rng.integers(0, 5, 12)

    def fn(p):
        loss, gs, gh = similarity_loss(p["s"], levels, {"ord.u": p["ord.u"], "ord.b": p["ord.b"]})
        return loss, dict(gh, s=gs)
    return fn, p


def _contact(rng):
    n, D = 9, 3
    p = init_contact_head(rng, D, 4)
    p["Z"] = rng.normal(size=(n, D))
    obs = (rng.random((n, n)) < 0.3).astype(float)
    obs = np.maximum(obs, obs.T)
    mask = np.abs(np.subtract.outer(np.arange(n), np.arange(n))) >= 2

    def fn(p):
        logits, cache = contact_forward(p, p["Z"])
        loss, glog = contact_loss_from_logits(logits, obs, mask)
        gZ, grads = contact_backward(p, glog, cache)
        return loss, dict(grads, Z=gZ)
    return fn, p


def _crf_core(rng):
    n, S = int(rng.integers(2, 8)), 4
    trans_mask = np.where(rng.random((S, S)) < 0.25, -np.inf, 0.0)
    np.fill_diagonal(trans_mask, 0.0)
    path = np.full(n, int(rng.integers(S)))
    p = {"E": rng.normal(size=(n, S)), "T": rng.normal(size=(S, S)),
         "start": rng.normal(size=S), "end": rng.normal(size=S)}

    def fn(p):
        ll, gE, gT, gs, ge = crf_log_likelihood_and_grads(p["E"], p["T"] + trans_mask, p["start"], p["end"], path)
        return ll, {"E": gE, "T": gT, "start": gs, "end": ge}
    return fn, p


def _crf_tagger(rng):
    grammar = build_default_grammar()
    regions = [Region("inside", 0, 3), Region("TM", 3, 9), Region("outside", 9, 12)]
    path = regions_to_states(regions, grammar)
    tagger = TMTagger(4, grammar, hidden=3, seed=int(rng.integers(2 ** 31)))
    # mild potentials keep every feasible state's marginal well away from zero
    for k in ("crf.trans", "crf.start", "crf.end"):
        tagger.params[k] = 0.3 * rng.normal(size=tagger.params[k].shape)
    feats = rng.normal(size=(12, 4))

    def fn(p):
        tagger.params = p
        return tagger.loss_and_grads([feats], [path])
    return fn, dict(tagger.params)


def _lm(rng):
    lm = LanguageModel(hidden=4, layers=2, seed=int(rng.integers(2 ** 31)))
    # move off the near-uniform initialisation without saturating the gates
    for k in lm.params:
        lm.params[k] = lm.params[k] + 0.5 * rng.normal(size=lm.params[k].shape)
    batch = [rng.integers(0, 21, n) for n in (6, 4)]

    def fn(p):
        lm.params = p
        return lm.loss_and_grads(batch)
    return fn, dict(lm.params)


REGISTRY = {
    "fusion": _fusion,
    "lstm-cell": _lstm_cell,
    "bilstm": _bilstm,
    "encoder-stack": _stacked_encoder,
    "ssa": _scorer("ssa"),
    "ua": _scorer("ua"),
    "me": _scorer("me"),
    "ordinal-loss": _ordinal,
    "contact-head": _contact,
    "crf-core": _crf_core,
    "crf-tagger": _crf_tagger,
    "language-model": _lm,
}


def check_op(name, seed, h=1e-5, max_entries=MAX_ENTRIES):
    rng = np.random.default_rng(seed)
    fn, params = REGISTRY[name](rng)
    return nn.grad_check(fn, params, h=h, max_entries=max_entries, rng=rng)


def run_suite(names=None, seeds=range(20), base_seed=0, tol=TOLERANCE):
    """Rows of ``(op, seed, max_rel_error, passed)`` for every op and seed."""
    rows = []
    for name in names or REGISTRY:
        for s in seeds:
            err, _ = check_op(name, base_seed + s)
            rows.append((name, base_seed + s, err, bool(err <= tol)))
    return rows
