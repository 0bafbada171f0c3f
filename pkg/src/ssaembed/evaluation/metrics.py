"""Ranking, correlation and threshold-fitting metrics.

Metrics that are undefined for the given input (no positives, constant
input, ...) return ``None`` rather than NaN.
"""
import numpy as np
from scipy.stats import rankdata

NUM_LEVELS = 5


def pearson(xs, ys):
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    if len(xs) != len(ys) or len(xs) < 2:
        raise ValueError("pearson needs two equal-length inputs with at least 2 values")
    dx, dy = xs - xs.mean(), ys - ys.mean()
    denom = np.sqrt((dx * dx).sum() * (dy * dy).sum())
    if denom == 0:
        return None
    return float(np.clip((dx * dy).sum() / denom, -1.0, 1.0))


def spearman(xs, ys):
    """Pearson correlation of average ranks (ties share their mean rank)."""
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    if len(xs) != len(ys) or len(xs) < 2:
        raise ValueError("spearman needs two equal-length inputs with at least 2 values")
    return pearson(rankdata(xs), rankdata(ys))


def ranking(scores):
    """Indices sorted by descending score; ties keep input order."""
    return np.argsort(-np.asarray(scores, float), kind="stable")


def average_precision(scores, labels, order=None):
    """Sum over ranks of (recall increment) x (precision at that rank).

    Ties in `scores` are broken by input order unless an explicit `order` is given.
    """
    labels = np.asarray(labels).astype(bool)
    npos = int(labels.sum())
    if npos == 0:
        return None
    order = ranking(scores) if order is None else order
    hits = labels[order]
    tp = np.cumsum(hits)
    precision = tp / np.arange(1, len(hits) + 1)
    return float(precision[hits].sum() / npos)


def level_predictions(scores, thresholds):
    """Predicted level = number of cut points at or below the score."""
    scores = np.asarray(scores, float)
    return (scores[:, None] >= np.asarray(thresholds, float)[None, :]).sum(1)


def _candidates(scores):
    u = np.unique(scores)
    mids = (u[:-1] + u[1:]) / 2.0
    return np.concatenate([[-np.inf], mids, [np.inf]])


def fit_thresholds(scores, levels, num_levels=NUM_LEVELS):
    """Monotone cut points maximizing accuracy when binning scores into levels.

    Candidate cut points are -inf, midpoints between consecutive distinct
    scores, and +inf, so any monotone assignment of levels to the sorted
    distinct scores is reachable. Dynamic programming over the sorted score
    groups finds the optimum; among optimal solutions the lexicographically
    smallest cut tuple is returned.
    """
    scores = np.asarray(scores, float)
    levels = np.asarray(levels, int)
    u, inv = np.unique(scores, return_inverse=True)
    G, K = len(u), num_levels
    counts = np.zeros((G, K), dtype=np.int64)
    np.add.at(counts, (inv, levels), 1)
    # best[l, g]: max correct for groups g..G-1 using levels l..K-1
    best = np.full((K + 1, G + 1), -1, dtype=np.int64)
    best[K, G] = 0
    for l in range(K - 1, -1, -1):
        best[l, G] = 0
        for g in range(G - 1, -1, -1):
            # group g takes level l, or level l is left empty from g onwards
            stay = counts[g, l] + best[l, g + 1]
            best[l, g] = max(stay, best[l + 1, g]) if l < K - 1 else stay
    cand = _candidates(scores)  # cand[k] sits between group k-1 and group k
    cuts = []
    g = 0
    for l in range(K - 1):
        # level l covers groups g..k-1; choose the smallest k keeping optimality
        target = best[l, g]
        acc = 0
        for k in range(g, G + 1):
            if acc + best[l + 1, k] == target:
                break
            acc += counts[k, l]
        cuts.append(cand[k])
        g = k
    return np.array(cuts)


def threshold_accuracy(scores, levels, thresholds):
    return float((level_predictions(scores, thresholds) == np.asarray(levels)).mean())
