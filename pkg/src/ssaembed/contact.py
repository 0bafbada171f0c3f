"""Residue-residue contact prediction from per-position embeddings.

Pair features ``v_ij = [|z_i - z_j| ; z_i * z_j]`` pass through a per-pair
hidden layer with ReLU and a single zero-padded 7x7 convolution to one
logit map. Training scores the raw (not necessarily symmetric) map over a
separation mask; evaluation symmetrises it as ``(p + p.T) / 2``.
"""
import math
import warnings

import numpy as np

from . import nn
from .evaluation.metrics import average_precision

KERNEL = 7
PAD = KERNEL // 2


def init_contact_head(rng, dim, hidden=16):
    p = nn.init_linear(rng, 2 * dim, hidden, "con.")
    fan = KERNEL * KERNEL * hidden
    p["con.filter"] = nn.glorot(rng, (KERNEL, KERNEL, hidden), fan, 1)
    p["con.bias"] = np.zeros(1)
    return p


def _windows(x):
    """(n+6, n+6, C) -> (n, n, 7*7*C) patches ordered (a, b, channel)."""
    w = np.lib.stride_tricks.sliding_window_view(x, (KERNEL, KERNEL), axis=(0, 1))
    n = w.shape[0]
    return np.ascontiguousarray(w.transpose(0, 1, 3, 4, 2)).reshape(n, n, -1)


def pairwise_features(Z):
    Z = np.asarray(Z, float)
    diff = np.abs(Z[:, None, :] - Z[None, :, :])
    prod = Z[:, None, :] * Z[None, :, :]
    return np.concatenate([diff, prod], axis=-1)


def contact_forward(params, Z):
    """Returns ``(logits, cache)``; logits has shape (n, n)."""
    n = len(Z)
    v = pairwise_features(Z)
    pre = nn.linear_forward(v, params["con.W"], params["con.b"])
    h = nn.relu(pre)
    hp = np.pad(h, ((PAD, PAD), (PAD, PAD), (0, 0)))
    windows = _windows(hp)
    F = params["con.filter"]
    logits = windows @ F.reshape(-1) + params["con.bias"][0]
    return logits, (np.asarray(Z, float), v, pre, windows)


def contact_backward(params, glogits, cache):
    """Returns ``(gZ, grads)``."""
    Z, v, pre, windows = cache
    n = len(Z)
    F = params["con.filter"]
    H = F.shape[-1]
    gF = (glogits.reshape(1, -1) @ windows.reshape(n * n, -1)).reshape(F.shape)
    # h[i+a-PAD, j+b-PAD] feeds logits[i, j] through F[a, b]: correlate the
    # padded upstream gradient with the flipped filter
    gwin = _windows(np.pad(glogits, PAD)[..., None]).reshape(n, n, KERNEL, KERNEL)[:, :, ::-1, ::-1]
    gh = gwin.reshape(n, n, -1) @ F.reshape(-1, H)
    gpre = gh * (pre > 0)
    gv, gW, gb = nn.linear_backward(gpre, v, params["con.W"])
    D = Z.shape[1]
    g_abs, g_prod = gv[..., :D], gv[..., D:]
    sg = np.sign(Z[:, None, :] - Z[None, :, :])
    gZ = ((g_abs + g_abs.transpose(1, 0, 2)) * sg).sum(1)
    gZ += np.einsum("ijk,jk->ik", g_prod + g_prod.transpose(1, 0, 2), Z)
    grads = {"con.W": gW, "con.b": gb, "con.filter": gF, "con.bias": np.array([glogits.sum()])}
    return gZ, grads


def contact_probabilities(params, Z):
    return nn.sigmoid(contact_forward(params, Z)[0])


def separation_mask(n, min_separation=2):
    idx = np.arange(n)
    return np.abs(idx[:, None] - idx[None, :]) >= min_separation


def contact_loss(pred, observed, mask=None):
    """Mean binary cross entropy of probabilities `pred` over the masked pairs."""
    pred = np.asarray(pred, float)
    observed = np.asarray(observed)
    if pred.shape != observed.shape:
        raise ValueError("prediction and observation shapes differ")
    if not np.isin(observed, (0, 1)).all():
        raise ValueError("observed contacts must be 0 or 1")
    mask = separation_mask(len(pred)) if mask is None else np.asarray(mask, bool)
    if not mask.any():
        warnings.warn("contact loss over an empty mask is defined as 0", RuntimeWarning)
        return 0.0
    p = np.clip(pred[mask], 1e-300, 1.0)
    q = np.clip(1.0 - pred[mask], 1e-300, 1.0)
    y = observed[mask]
    return float(-(y * np.log(p) + (1 - y) * np.log(q)).mean())


def contact_loss_from_logits(logits, observed, mask):
    """Summed (not averaged) cross entropy over masked pairs and its logit gradient."""
    y = np.asarray(observed, float)
    m = np.asarray(mask, float)
    loss = ((nn.softplus(logits) - y * logits) * m).sum()
    return float(loss), (nn.sigmoid(logits) - y) * m


def symmetrize(pred):
    return (pred + pred.T) / 2.0


def _scored_pairs(n, separation):
    i, j = np.triu_indices(n, k=max(separation, 1))
    return i, j


def contact_metrics(pred, observed, separation=2, threshold=0.5):
    """Threshold, ranking and top-k metrics over pairs i < j with ``j - i >= separation``.

    A pair is called a contact iff its symmetrised probability is strictly
    above `threshold`. Undefined metrics are ``None``.
    """
    pred = symmetrize(np.asarray(pred, float))
    observed = np.asarray(observed)
    n = len(pred)
    i, j = _scored_pairs(n, separation)
    p = pred[i, j]
    y = observed[i, j].astype(bool)
    called = p > threshold
    tp = int((called & y).sum())
    n_called, n_pos = int(called.sum()), int(y.sum())
    precision = tp / n_called if n_called else None
    recall = tp / n_pos if n_pos else None
    if precision is None or recall is None:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    # rank by (-p, i, j); triu_indices is already (i, j)-ordered so a stable sort suffices
    order = np.argsort(-p, kind="stable")
    out = {"precision": precision, "recall": recall, "f1": f1,
           "aupr": average_precision(p, y, order=order)}
    for name, k in (("pr_at_L", n), ("pr_at_L2", math.ceil(n / 2)), ("pr_at_L5", math.ceil(n / 5))):
        k = min(k, len(p))
        out[name] = float(y[order[:k]].mean()) if k > 0 else None
    out["n_pairs"] = len(p)
    out["n_positive"] = n_pos
    return out


def pooled_contact_metrics(preds, observed, separation=2, threshold=0.5):
    """Micro-averaged P/R/F1 and AUPR over several proteins; Pr@k averaged per protein."""
    ps, ys, topk = [], [], {"pr_at_L": [], "pr_at_L2": [], "pr_at_L5": []}
    for pred, obs in zip(preds, observed):
        sym = symmetrize(np.asarray(pred, float))
        i, j = _scored_pairs(len(sym), separation)
        ps.append(sym[i, j])
        ys.append(np.asarray(obs)[i, j].astype(bool))
        single = contact_metrics(pred, obs, separation, threshold)
        for k in topk:
            if single[k] is not None:
                topk[k].append(single[k])
    p, y = np.concatenate(ps), np.concatenate(ys)
    called = p > threshold
    tp, n_called, n_pos = int((called & y).sum()), int(called.sum()), int(y.sum())
    precision = tp / n_called if n_called else None
    recall = tp / n_pos if n_pos else None
    f1 = None
    if precision is not None and recall is not None:
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    out = {"precision": precision, "recall": recall, "f1": f1,
           "aupr": average_precision(p, y, order=np.argsort(-p, kind="stable"))}
    out.update({k: float(np.mean(v)) if v else None for k, v in topk.items()})
    return out
