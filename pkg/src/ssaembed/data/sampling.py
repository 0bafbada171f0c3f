from collections import Counter
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .alphabet import CANONICAL

NUM_LEVELS = 5


def hierarchy_level(a, b):
    """Number of leading hierarchy levels (class, fold, superfamily, family) shared by two labels."""
    level = 0
    for x, y in zip(a, b):
        if x != y:
            break
        level += 1
    return level


def perturb_sequence(tokens, p, rng):
    """Resample each position with probability `p` from the uniform distribution over the 20 canonical residues.

    The replacement may coincide with the original residue, so the expected
    fraction of changed positions is ``p * 19/20`` for canonical input.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"perturbation probability must be in [0, 1], got {p}")
    tokens = np.asarray(tokens)
    hit = rng.random(len(tokens)) < p
    draws = rng.integers(0, len(CANONICAL), size=len(tokens))
    return np.where(hit, draws, tokens)


def level_probabilities(counts, smoothing):
    counts = np.asarray(counts, dtype=float)
    weights = np.where(counts > 0, counts ** smoothing, 0.0)
    total = weights.sum()
    if total == 0:
        raise ValueError("no pairs available at any level")
    return weights / total


@dataclass
class PairSamplerConfig:
    smoothing: float = 0.5
    batch_size: int = 64
    epoch_size: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if self.smoothing < 0:
            raise ValueError("smoothing exponent must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


class PairSampler:
    """Two-stage sampler over unordered record pairs.

    A level ``t`` is drawn with probability proportional to ``N_t ** smoothing``
    (``N_t`` = number of unordered pairs sharing exactly ``t`` hierarchy levels),
    then a pair is drawn uniformly within that level. Draws are with
    replacement.
    """

    def __init__(self, records, config=PairSamplerConfig(), rng=None):
        self.records = list(records)
        self.config = config
        self.rng = rng if rng is not None else np.random.default_rng(config.seed)
        pairs = [[] for _ in range(NUM_LEVELS)]
        for i, j in combinations(range(len(self.records)), 2):
            t = hierarchy_level(self.records[i].hierarchy, self.records[j].hierarchy)
            pairs[t].append((i, j))
        self.pairs = [np.array(p, dtype=np.int64).reshape(-1, 2) for p in pairs]
        self.counts = np.array([len(p) for p in pairs])
        self.probabilities = level_probabilities(self.counts, config.smoothing)

    def sample_indices(self, size):
        levels = self.rng.choice(NUM_LEVELS, size=size, p=self.probabilities)
        out = np.empty((size, 3), dtype=np.int64)
        for k, t in enumerate(levels):
            i, j = self.pairs[t][self.rng.integers(len(self.pairs[t]))]
            out[k] = (i, j, t)
        return out

    def sample_batch(self, size=None):
        size = self.config.batch_size if size is None else size
        return [(self.records[i], self.records[j], int(t)) for i, j, t in self.sample_indices(size)]


def sample_pair_batch(records, config=PairSamplerConfig(), rng=None):
    return PairSampler(records, config, rng).sample_batch()


def level_histogram(pairs):
    c = Counter(t for *_, t in pairs)
    return np.array([c.get(t, 0) for t in range(NUM_LEVELS)])
