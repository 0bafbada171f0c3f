"""Secondary-structure probe: a small MLP on frozen per-position features."""
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .. import nn
from ..data.alphabet import UNKNOWN, one_hot

NUM_SS = 8


@dataclass
class ProbeConfig:
    hidden: int = 256
    layers: int = 2
    epochs: int = 10
    batch_size: int = 256
    lr: float = 0.001
    seed: int = 0


def kmer_features(tokens, k=1):
    """One-hot encoding of the width-k window centred on each position.

    Positions past either end are filled with the unknown token, so the
    output has shape (n, k * 21).
    """
    if k < 1 or k % 2 == 0:
        raise ValueError("k must be a positive odd integer")
    tokens = np.asarray(tokens, dtype=np.int64)
    h = k // 2
    padded = np.concatenate([np.full(h, UNKNOWN), tokens, np.full(h, UNKNOWN)])
    windows = np.lib.stride_tricks.sliding_window_view(padded, k)
    return one_hot(windows).reshape(len(tokens), -1)


def _init_mlp(rng, n_in, cfg, n_out):
    params, sizes = {}, [n_in] + [cfg.hidden] * cfg.layers + [n_out]
    for l in range(len(sizes) - 1):
        params.update(nn.init_linear(rng, sizes[l], sizes[l + 1], f"mlp{l}."))
    return params


def mlp_forward(params, X):
    L = len(params) // 2
    acts = [X]
    for l in range(L):
        y = nn.linear_forward(acts[-1], params[f"mlp{l}.W"], params[f"mlp{l}.b"])
        acts.append(nn.relu(y) if l < L - 1 else y)
    return acts[-1], acts


def mlp_backward(params, glogits, acts):
    L = len(params) // 2
    grads, g = {}, glogits
    for l in range(L - 1, -1, -1):
        gx, grads[f"mlp{l}.W"], grads[f"mlp{l}.b"] = nn.linear_backward(g, acts[l], params[f"mlp{l}.W"])
        g = gx * (acts[l] > 0) if l > 0 else gx
    return grads


def cross_entropy(logits, y):
    """Mean cross entropy and its logit gradient."""
    logp = nn.log_softmax(logits)
    n = len(y)
    g = np.exp(logp)
    g[np.arange(n), y] -= 1.0
    return float(-logp[np.arange(n), y].mean()), g / n


def train_probe(X, y, config=ProbeConfig(), n_classes=NUM_SS):
    rng = np.random.default_rng(config.seed)
    params = _init_mlp(rng, X.shape[1], config, n_classes)
    opt = nn.Adam(lr=config.lr)
    for _ in range(config.epochs):
        order = rng.permutation(len(X))
        for s in range(0, len(X), config.batch_size):
            idx = order[s:s + config.batch_size]
            logits, acts = mlp_forward(params, X[idx])
            _, g = cross_entropy(logits, y[idx])
            opt.step(params, mlp_backward(params, g, acts))
    return params


def probe_metrics(params, X, y):
    logits, _ = mlp_forward(params, X)
    loss, _ = cross_entropy(logits, y)
    return {"accuracy": float((logits.argmax(1) == y).mean()), "perplexity": math.exp(loss),
            "cross_entropy": loss, "n_positions": int(len(y))}


def ss_probe(features, labels, split, config=ProbeConfig()):
    """Train on one split of proteins and report held-out accuracy and perplexity.

    Parameters
    ----------
    features : list of (n_i, F) arrays, one per protein
    labels : list of length-n_i integer arrays with classes in 0..7
    split : ``(train_indices, test_indices)`` over proteins

    Returns
    -------
    dict with ``test`` and ``train`` metric dicts.
    """
    train_idx, test_idx = split
    if len(train_idx) == 0 or len(test_idx) == 0:
        raise ValueError("both splits need at least one protein")
    Xtr = np.concatenate([features[i] for i in train_idx])
    ytr = np.concatenate([labels[i] for i in train_idx]).astype(np.int64)
    Xte = np.concatenate([features[i] for i in test_idx])
    yte = np.concatenate([labels[i] for i in test_idx]).astype(np.int64)
    missing = sorted(set(range(NUM_SS)) - set(np.unique(ytr).tolist()))
    if missing:
        warnings.warn(f"classes {missing} are absent from the training split", RuntimeWarning)
    params = train_probe(Xtr, ytr, config)
    return {"train": probe_metrics(params, Xtr, ytr), "test": probe_metrics(params, Xte, yte)}


def protein_split(n, test_fraction=0.2, seed=0):
    order = np.random.default_rng(seed).permutation(n)
    k = max(1, int(round(test_fraction * n)))
    return np.sort(order[k:]), np.sort(order[:k])
