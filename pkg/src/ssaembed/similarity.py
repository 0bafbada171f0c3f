"""Sequence-to-sequence similarity from per-position embeddings.

Three scorers share one interface (``*_forward`` -> score + cache,
``*_backward`` -> gradients for both embedding matrices):

ssa
    soft symmetric alignment: attention weights from row- and column-wise
    softmaxes over negative L1 distances, combined as
    ``a = alpha + beta - alpha * beta``; score is the negated
    ``a``-weighted mean distance.
ua
    uniform alignment: negated mean of all pairwise L1 distances.
me
    mean embedding: negated L1 distance between the sequences' mean vectors.

Scores feed an ordinal regression head with one sigmoid per level
threshold, ``p(y >= t) = sigmoid(theta_t * s + b_t)``, ``theta_t >= 0``.
"""
from dataclasses import dataclass

import numpy as np

from . import nn

NUM_LEVELS = 5


@dataclass
class AlignmentResult:
    alpha: np.ndarray
    beta: np.ndarray
    a: np.ndarray
    length: float
    score: float


def _check(Z1, Z2):
    Z1, Z2 = np.atleast_2d(np.asarray(Z1, float)), np.atleast_2d(np.asarray(Z2, float))
    if len(Z1) == 0 or len(Z2) == 0:
        raise ValueError("cannot score an empty sequence")
    if Z1.shape[1] != Z2.shape[1]:
        raise ValueError(f"embedding dims differ: {Z1.shape[1]} vs {Z2.shape[1]}")
    return Z1, Z2


def l1_distance_matrix(Z1, Z2):
    Z1, Z2 = _check(Z1, Z2)
    return np.abs(Z1[:, None, :] - Z2[None, :, :]).sum(-1)


def ssa_forward(Z1, Z2):
    Z1, Z2 = _check(Z1, Z2)
    diff = Z1[:, None, :] - Z2[None, :, :]
    d = np.abs(diff).sum(-1)
    alpha = nn.softmax(-d, axis=1)
    beta = nn.softmax(-d, axis=0)
    a = alpha + beta - alpha * beta
    A = a.sum()
    s = -(a * d).sum() / A
    return AlignmentResult(alpha, beta, a, float(A), float(s)), (diff, d)


def ssa_backward(gs, result, cache):
    diff, d = cache
    alpha, beta, a, A, s = result.alpha, result.beta, result.a, result.length, result.score
    ga = -gs * (d + s) / A
    g_logits = nn.softmax_backward(alpha, ga * (1.0 - beta), axis=1) \
        + nn.softmax_backward(beta, ga * (1.0 - alpha), axis=0)
    gd = -gs * a / A - g_logits
    return _distance_backward(gd, diff)


def _distance_backward(gd, diff):
    sg = np.sign(diff)
    gZ1 = np.einsum("ij,ijk->ik", gd, sg)
    gZ2 = -np.einsum("ij,ijk->jk", gd, sg)
    return gZ1, gZ2


def ua_forward(Z1, Z2):
    Z1, Z2 = _check(Z1, Z2)
    diff = Z1[:, None, :] - Z2[None, :, :]
    return float(-np.abs(diff).sum(-1).mean()), diff


def ua_backward(gs, cache):
    diff = cache
    n, m = diff.shape[:2]
    return _distance_backward(np.full((n, m), -gs / (n * m)), diff)


def me_forward(Z1, Z2):
    Z1, Z2 = _check(Z1, Z2)
    delta = Z1.mean(0) - Z2.mean(0)
    return float(-np.abs(delta).sum()), (delta, len(Z1), len(Z2))


def me_backward(gs, cache):
    delta, n, m = cache
    g = -gs * np.sign(delta)
    return np.tile(g / n, (n, 1)), np.tile(-g / m, (m, 1))


def ssa_score(Z1, Z2):
    return ssa_forward(Z1, Z2)[0]


def ua_score(Z1, Z2):
    return ua_forward(Z1, Z2)[0]


def me_score(Z1, Z2):
    return me_forward(Z1, Z2)[0]


SCORERS = {
    "ssa": (lambda Z1, Z2: _ssa_pair(Z1, Z2), lambda gs, cache: ssa_backward(gs, *cache)),
    "ua": (ua_forward, ua_backward),
    "me": (me_forward, me_backward),
}


def _ssa_pair(Z1, Z2):
    res, cache = ssa_forward(Z1, Z2)
    return res.score, (res, cache)


def score(Z1, Z2, scorer="ssa"):
    return SCORERS[scorer][0](Z1, Z2)[0]


# -- ordinal regression -------------------------------------------------------

def init_ordinal_head(theta=1.0, bias=0.0):
    """Head parameters: theta_t = softplus(u_t) keeps the slopes non-negative."""
    u = np.log(np.expm1(theta)) if theta > 0 else -30.0
    return {"ord.u": np.full(NUM_LEVELS - 1, u, dtype=float),
            "ord.b": np.broadcast_to(np.asarray(bias, float), (NUM_LEVELS - 1,)).copy()}


def head_theta(head):
    return nn.softplus(head["ord.u"])


def ordinal_logits(s, head):
    s = np.asarray(s, float)
    return s[..., None] * head_theta(head) + head["ord.b"]


def ordinal_probabilities(s, head):
    """Returns ``(p_ge, p_eq)``: ``p(y >= t)`` for t=1..4 and ``p(y = t)`` for t=0..4.

    ``p(y = t) = p(y >= t) * (1 - p(y >= t+1))`` with ``p(y >= 0) = 1`` and
    ``p(y >= 5) = 0``; the masses are not renormalised and need not sum to 1.
    """
    p_ge = nn.sigmoid(ordinal_logits(s, head))
    ones = np.ones(p_ge.shape[:-1] + (1,))
    zeros = np.zeros_like(ones)
    upper = np.concatenate([ones, p_ge], axis=-1)
    lower = np.concatenate([p_ge, zeros], axis=-1)
    return p_ge, upper * (1.0 - lower)


def predict_level(s, head):
    """Level with the largest ``p(y = t)``; ties go to the smaller level."""
    return np.argmax(ordinal_probabilities(s, head)[1], axis=-1)


def similarity_loss(scores, levels, head):
    """Mean over pairs of the summed per-threshold binary cross entropies.

    Returns ``(loss, g_scores, g_head)``.
    """
    scores = np.asarray(scores, float)
    levels = np.asarray(levels)
    if levels.min() < 0 or levels.max() >= NUM_LEVELS:
        raise ValueError("levels must lie in 0..4")
    z = ordinal_logits(scores, head)
    target = (levels[:, None] >= np.arange(1, NUM_LEVELS)[None, :]).astype(float)
    # -[y log sigmoid(z) + (1-y) log(1-sigmoid(z))] = softplus(z) - y z
    N = len(scores)
    loss = (nn.softplus(z) - target * z).sum() / N
    gz = (nn.sigmoid(z) - target) / N
    theta = head_theta(head)
    g_scores = gz @ theta
    g_theta = (gz * scores[:, None]).sum(0)
    g_head = {"ord.u": g_theta * nn.sigmoid(head["ord.u"]), "ord.b": gz.sum(0)}
    return float(loss), g_scores, g_head
