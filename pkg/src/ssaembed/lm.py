"""Bidirectional LSTM language model.

A single stack of LSTM layers is shared by both reading directions. The
forward pass predicts residue ``i`` from ``x_0..x_{i-1}``, the reverse pass
from ``x_{n-1}..x_{i+1}``; the training loss is the mean over scored
positions of ``-(log p_fwd(x_i) + log p_rev(x_i))``. Positions whose target
is the unknown token are not scored.
"""
import logging
from dataclasses import asdict, dataclass

import numpy as np

from . import nn
from .data.alphabet import CANONICAL, DEFAULT_ALPHABET, UNKNOWN, one_hot

log = logging.getLogger(__name__)

N_OUT = len(CANONICAL)
N_IN = len(DEFAULT_ALPHABET)


@dataclass
class LMConfig:
    hidden: int = 128
    layers: int = 2
    epochs: int = 1
    batch_size: int = 32
    lr: float = 0.001
    seed: int = 0


class LanguageModel:
    def __init__(self, hidden=128, layers=2, seed=0, params=None):
        self.hidden, self.layers = hidden, layers
        if params is None:
            rng = np.random.default_rng(seed)
            params = {}
            for l in range(layers):
                params.update(nn.init_lstm(rng, N_IN if l == 0 else hidden, hidden, f"lm.l{l}."))
            params["lm.h0"] = np.zeros((layers, hidden))
            params["lm.c0"] = np.zeros((layers, hidden))
            params.update(nn.init_linear(rng, hidden, N_OUT, "lm.out."))
        self.params = params

    @property
    def state_dim(self):
        return 2 * self.layers * self.hidden

    # -- passes ---------------------------------------------------------------

    def _run(self, X):
        """Run the stack over (B, T, 21) inputs; returns per-layer predictive states and caches."""
        p = self.params
        B = X.shape[0]
        inp, caches, predictive = X, [], []
        for l in range(self.layers):
            hs, cache = nn.lstm_forward(inp, p[f"lm.l{l}.W"], p[f"lm.l{l}.b"], p["lm.h0"][l], p["lm.c0"][l])
            start = np.broadcast_to(p["lm.h0"][l], (B, 1, self.hidden))
            predictive.append(np.concatenate([start, hs[:, :-1]], axis=1))
            caches.append(cache)
            inp = hs
        return predictive, caches

    def _backward(self, g_top, caches, grads):
        """Accumulate parameter gradients given the gradient on top-layer predictive states."""
        g_h0 = np.zeros((self.layers, self.hidden))
        g_c0 = np.zeros((self.layers, self.hidden))
        top = self.layers - 1
        g_h0[top] += g_top[:, 0].sum(0)
        ghs = np.zeros_like(g_top)
        ghs[:, :-1] = g_top[:, 1:]
        for l in range(top, -1, -1):
            gX, gW, gb, gh0, gc0 = nn.lstm_backward(ghs, caches[l])
            grads[f"lm.l{l}.W"] += gW
            grads[f"lm.l{l}.b"] += gb
            g_h0[l] += gh0
            g_c0[l] += gc0
            ghs = gX
        grads["lm.h0"] += g_h0
        grads["lm.c0"] += g_c0

    def _directions(self, tokens_list):
        toks, lengths = nn.pad_batch([np.asarray(t) for t in tokens_list], fill=UNKNOWN)
        fwd = toks
        rev = nn.reverse_padded(toks, lengths)
        mask = nn.length_mask(lengths, toks.shape[1])
        return (fwd, rev), lengths, mask

    def loss_and_grads(self, tokens_list, need_grads=True):
        p = self.params
        (fwd, rev), lengths, valid = self._directions(tokens_list)
        scored = valid & (fwd < N_OUT)
        n_scored = int(scored.sum())
        if n_scored == 0:
            raise ValueError("batch has no scoreable positions")
        grads = {k: np.zeros_like(v) for k, v in p.items()} if need_grads else None
        total = 0.0
        for toks in (fwd, rev):
            m = valid & (toks < N_OUT)
            predictive, caches = self._run(one_hot(toks, N_IN))
            top = predictive[-1]
            logits = nn.linear_forward(top, p["lm.out.W"], p["lm.out.b"])
            logp = nn.log_softmax(logits)
            tgt = np.where(m, toks, 0)
            picked = np.take_along_axis(logp, tgt[..., None], axis=-1)[..., 0]
            total -= (picked * m).sum()
            if need_grads:
                glog = np.exp(logp)
                np.put_along_axis(glog, tgt[..., None], np.take_along_axis(glog, tgt[..., None], -1) - 1.0, -1)
                glog *= m[..., None] / n_scored
                g_top, gW, gb = nn.linear_backward(glog, top, p["lm.out.W"])
                grads["lm.out.W"] += gW
                grads["lm.out.b"] += gb
                self._backward(g_top, caches, grads)
        return total / n_scored, grads

    def loss(self, tokens_list):
        return self.loss_and_grads(tokens_list, need_grads=False)[0]

    def position_log_probs(self, tokens):
        """(n, 20) arrays of forward and reverse log-probabilities, in sequence order."""
        (fwd, rev), lengths, _ = self._directions([tokens])
        out = []
        for toks in (fwd, rev):
            predictive, _ = self._run(one_hot(toks, N_IN))
            logits = nn.linear_forward(predictive[-1], self.params["lm.out.W"], self.params["lm.out.b"])
            out.append(nn.log_softmax(logits)[0])
        return out[0], nn.reverse_padded(out[1][None], lengths)[0]

    def position_logprob(self, tokens, i):
        tokens = np.asarray(tokens)
        if not 0 <= i < len(tokens):
            raise IndexError(i)
        if tokens[i] >= N_OUT:
            raise ValueError("unknown-token targets are not scored")
        lf, lr = self.position_log_probs(tokens)
        return float(lf[i, tokens[i]] + lr[i, tokens[i]])

    def hidden_states(self, tokens_list):
        """Frozen features: per position, all layers' forward then reverse predictive states."""
        single = not isinstance(tokens_list, (list, tuple))
        if single:
            tokens_list = [tokens_list]
        (fwd, rev), lengths, _ = self._directions(tokens_list)
        pf, _ = self._run(one_hot(fwd, N_IN))
        pr, _ = self._run(one_hot(rev, N_IN))
        pr = [nn.reverse_padded(s, lengths) for s in pr]
        states = np.concatenate(pf + pr, axis=-1)
        out = [states[k, :n].copy() for k, n in enumerate(lengths)]
        return out[0] if single else out

    # -- persistence ----------------------------------------------------------

    def save(self, path, extra_meta=None):
        meta = {"kind": "language-model", "hidden": self.hidden, "layers": self.layers}
        meta.update(extra_meta or {})
        nn.save_checkpoint(path, self.params, meta)

    @classmethod
    def load(cls, path):
        params, meta = nn.load_checkpoint(path)
        if meta.get("kind") != "language-model":
            raise ValueError(f"{path} is not a language-model checkpoint")
        return cls(meta["hidden"], meta["layers"], params=params)


def lm_loss(model, batch):
    return model.loss(batch)


def lm_position_logprob(model, tokens, i):
    return model.position_logprob(tokens, i)


def lm_hidden_states(model, tokens):
    return model.hidden_states(tokens)


def pretrain_lm(corpus, config=LMConfig(), checkpoint=None):
    """Train a language model on a list of token arrays with Adam.

    Returns ``(model, losses)`` where ``losses`` holds one minibatch loss per step.
    """
    corpus = [np.asarray(t) for t in corpus if len(t)]
    if not corpus:
        raise ValueError("empty corpus")
    rng = np.random.default_rng(config.seed)
    model = LanguageModel(config.hidden, config.layers, seed=config.seed)
    opt = nn.Adam(lr=config.lr)
    losses = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(corpus))
        for start in range(0, len(order), config.batch_size):
            batch = [corpus[k] for k in order[start:start + config.batch_size]]
            loss, grads = model.loss_and_grads(batch)
            if not np.isfinite(loss):
                raise nn.DivergenceError(f"non-finite language-model loss at step {len(losses)}")
            opt.step(model.params, grads)
            losses.append(loss)
        log.info("lm epoch %d: last loss %.4f", epoch, losses[-1])
    if checkpoint is not None:
        model.save(checkpoint, {"config": asdict(config), "final_loss": losses[-1]})
    return model, losses
