"""Global affine-gap alignment (Gotoh) under BLOSUM62.

A gap of length k costs ``open + (k - 1) * extend`` with the defaults
``open = -11`` and ``extend = -1``; the opening penalty already pays for the
first gapped position. Insertions may follow deletions directly.
"""
import hashlib
from functools import lru_cache
from importlib import resources

import numpy as np

from ..data.alphabet import CANONICAL, DEFAULT_ALPHABET

BLOSUM62_SHA256 = "85510d3846ee6d5f4778e425cf8daf6e0dbb889b306f2d13434e1254780efb40"
GAP_OPEN = -11.0
GAP_EXTEND = -1.0


def parse_matrix(text):
    """Parse an NCBI-style substitution matrix into ``(letters, scores)``."""
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    letters = rows[0]
    scores = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    if [r[0] for r in rows[1:]] != letters or scores.shape != (len(letters), len(letters)):
        raise ValueError("malformed substitution matrix")
    return letters, scores


@lru_cache(maxsize=None)
def blosum62():
    """21x21 matrix indexed by token; the unknown token uses the X row/column."""
    raw = resources.files("ssaembed").joinpath("resources/blosum62.txt").read_bytes()
    if hashlib.sha256(raw).hexdigest() != BLOSUM62_SHA256:
        raise RuntimeError("BLOSUM62 data file failed its checksum")
    letters, scores = parse_matrix(raw.decode("ascii"))
    idx = [letters.index(c) for c in CANONICAL + "X"]
    out = scores[np.ix_(idx, idx)]
    out.setflags(write=False)
    return out


def _tokens(seq):
    if isinstance(seq, str):
        return DEFAULT_ALPHABET.encode(seq)
    return np.asarray(seq, dtype=np.int64)


def nw_align_score(seq_a, seq_b, gap_open=GAP_OPEN, gap_extend=GAP_EXTEND, matrix=None):
    """Optimal global alignment score of two residue strings or token arrays.

    Either sequence may be empty as long as the other is not; aligning
    against nothing is a single gap.
    """
    a, b = _tokens(seq_a), _tokens(seq_b)
    n, m = len(a), len(b)
    if n == 0 and m == 0:
        raise ValueError("cannot align two empty sequences")
    S = blosum62() if matrix is None else matrix
    gap = lambda k: 0.0 if k == 0 else gap_open + (k - 1) * gap_extend  # noqa: E731
    if n == 0 or m == 0:
        return gap(n + m)
    sub = S[a][:, b]
    ninf = -np.inf
    # M: a_i aligned to b_j; X: a_i against a gap; Y: b_j against a gap
    M = np.full(m + 1, ninf)
    X = np.full(m + 1, ninf)
    Y = np.array([ninf] + [gap(j) for j in range(1, m + 1)])
    M[0] = 0.0
    for i in range(1, n + 1):
        Mp, Xp, Yp = M, X, Y
        M = np.full(m + 1, ninf)
        X = np.full(m + 1, ninf)
        Y = np.full(m + 1, ninf)
        X[0] = gap(i)
        best_prev = np.maximum(np.maximum(Mp, Xp), Yp)
        M[1:] = best_prev[:-1] + sub[i - 1]
        X[1:] = np.maximum(np.maximum(Mp[1:], Yp[1:]) + gap_open, Xp[1:] + gap_extend)
        # Y depends on its left neighbour in the same row
        for j in range(1, m + 1):
            Y[j] = max(max(M[j - 1], X[j - 1]) + gap_open, Y[j - 1] + gap_extend)
    return float(max(M[m], X[m], Y[m]))


def nw_score_pairs(pairs, **kw):
    return np.array([nw_align_score(a, b, **kw) for a, b in pairs])
