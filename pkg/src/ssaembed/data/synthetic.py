"""Synthetic corpora for desk-scale experiments.

The hierarchical corpus mimics a SCOP-style classification: one random
ancestor per class, mutated down the tree (fold, superfamily, family, leaf)
by uniform per-position substitution. Each fold also gets an idealized
C-alpha trace built from helix / strand / coil segments, jittered per
superfamily and family, so contact maps and secondary structure labels share
structure within a family and differ across folds.
"""
from dataclasses import dataclass

import numpy as np

from .alphabet import CANONICAL, DEFAULT_ALPHABET
from .geometry import contacts_from_coordinates
from .records import SS8, ProteinRecord, Region

HELIX, STRAND, COIL = SS8.index("H"), SS8.index("E"), SS8.index("C")


@dataclass
class SyntheticCorpusConfig:
    classes: int = 2
    folds: int = 2
    superfamilies: int = 2
    families: int = 2
    sequences: int = 2
    fold_rate: float = 0.6
    superfamily_rate: float = 0.4
    family_rate: float = 0.25
    leaf_rate: float = 0.1
    length_range: tuple = (40, 60)
    superfamily_jitter: float = 0.8
    family_jitter: float = 0.4
    seed: int = 0

    def __post_init__(self):
        for name in ("classes", "folds", "superfamilies", "families", "sequences"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("fold_rate", "superfamily_rate", "family_rate", "leaf_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        lo, hi = self.length_range
        if not 1 <= lo <= hi:
            raise ValueError("length_range must satisfy 1 <= lo <= hi")
        self.length_range = (int(lo), int(hi))


def mutate(tokens, rate, rng):
    hit = rng.random(len(tokens)) < rate
    return np.where(hit, rng.integers(0, len(CANONICAL), len(tokens)), tokens)


def _rotation_to(axis):
    """Orthonormal frame whose third column is `axis`."""
    axis = axis / np.linalg.norm(axis)
    helper = np.array([1.0, 0, 0]) if abs(axis[0]) < 0.9 else np.array([0, 1.0, 0])
    u = np.cross(axis, helper)
    u /= np.linalg.norm(u)
    v = np.cross(axis, u)
    return np.stack([u, v, axis], axis=1)


def _segment_layout(length, rng):
    ss = []
    kind = COIL
    while len(ss) < length:
        if kind == COIL:
            run = rng.integers(2, 5)
            kind_next = HELIX if rng.random() < 0.5 else STRAND
        elif kind == HELIX:
            run = rng.integers(8, 15)
            kind_next = COIL
        else:
            run = rng.integers(4, 8)
            kind_next = COIL
        ss.extend([kind] * run)
        kind = kind_next
    return np.array(ss[:length])


def fold_structure(length, rng):
    """Idealized C-alpha trace and secondary structure labels for one fold."""
    ss = _segment_layout(length, rng)
    coords = np.zeros((length, 3))
    pos = np.zeros(3)
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    i = 0
    while i < length:
        j = i
        while j < length and ss[j] == ss[i]:
            j += 1
        run = j - i
        if ss[i] == COIL:
            for k in range(run):
                step = rng.normal(size=3)
                pos = pos + 3.8 * step / np.linalg.norm(step)
                coords[i + k] = pos
            # next element folds back on the previous one
            turn = -direction + 0.5 * rng.normal(size=3)
            direction = turn / np.linalg.norm(turn)
        else:
            frame = _rotation_to(direction)
            t = np.arange(1, run + 1)
            if ss[i] == HELIX:
                ang = np.deg2rad(100.0) * t
                local = np.stack([2.3 * np.cos(ang), 2.3 * np.sin(ang), 1.5 * t], axis=1)
            else:
                local = np.stack([np.where(t % 2, 0.9, -0.9), np.zeros(run), 3.3 * t], axis=1)
            coords[i:j] = pos + local @ frame.T
            pos = coords[j - 1]
        i = j
    return coords, ss


def generate_synthetic_corpus(config=SyntheticCorpusConfig(), rng=None):
    """Build a labelled corpus of ``classes*folds*superfamilies*families*sequences`` records."""
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    lo, hi = config.length_range
    records = []
    for c in range(config.classes):
        length = int(rng.integers(lo, hi + 1))
        ancestor = rng.integers(0, len(CANONICAL), length)
        for f in range(config.folds):
            fold_seq = mutate(ancestor, config.fold_rate, rng)
            fold_xyz, ss = fold_structure(length, rng)
            for s in range(config.superfamilies):
                sf_seq = mutate(fold_seq, config.superfamily_rate, rng)
                sf_xyz = fold_xyz + config.superfamily_jitter * rng.normal(size=fold_xyz.shape)
                for m in range(config.families):
                    fam_seq = mutate(sf_seq, config.family_rate, rng)
                    fam_xyz = sf_xyz + config.family_jitter * rng.normal(size=fold_xyz.shape)
                    contacts = contacts_from_coordinates(fam_xyz)
                    for k in range(config.sequences):
                        records.append(ProteinRecord(
                            id=f"syn{c}_{f}_{s}_{m}_{k}",
                            tokens=mutate(fam_seq, config.leaf_rate, rng),
                            hierarchy=(str(c), str(f), str(s), str(m)),
                            coordinates=fam_xyz,
                            contacts=contacts,
                            ss=ss,
                        ))
    return records


# -- transmembrane corpus -----------------------------------------------------

_HYDROPHOBIC = "LLLIIIVVVFFAAMWG"
_INSIDE = "KKRRKRSTNQDEGAPH"
_OUTSIDE = "DDEENNSSTTQGAPYH"
_SP_N = "KRKRMA"
_SP_H = "LLLAAVVIF"
_SP_C = "AAGSSA"
_GLOBULAR = CANONICAL
TM_CATEGORIES = ("TM", "SP+TM", "Globular", "Globular+SP")


def _draw(alphabet, n, rng):
    return "".join(rng.choice(list(alphabet), size=n))


def _signal_peptide(rng):
    return "M" + _draw(_SP_N, rng.integers(2, 5), rng) + _draw(_SP_H, rng.integers(8, 12), rng) \
        + _draw(_SP_C, rng.integers(3, 6), rng)


def _tm_protein(rng, start_side):
    parts = []
    side = start_side
    n_tm = int(rng.integers(1, 5))
    for k in range(n_tm + 1):
        loop = int(rng.integers(6, 25)) if 0 < k < n_tm else int(rng.integers(5, 30))
        parts.append((_draw(_INSIDE if side == "inside" else _OUTSIDE, loop, rng), side))
        if k < n_tm:
            parts.append((_draw(_HYDROPHOBIC, int(rng.integers(18, 24)), rng), "TM"))
            side = "outside" if side == "inside" else "inside"
    return parts


def generate_tm_corpus(per_category=20, seed=0, rng=None):
    """Toy membrane-protein corpus with region annotations in all four categories."""
    rng = rng if rng is not None else np.random.default_rng(seed)
    records = []
    for cat in TM_CATEGORIES:
        for k in range(per_category):
            parts = []
            if cat.endswith("SP") or cat.startswith("SP"):
                parts.append((_signal_peptide(rng), "SP"))
            if "TM" in cat:
                start = "outside" if parts else ("inside" if rng.random() < 0.5 else "outside")
                parts.extend(_tm_protein(rng, start))
            else:
                parts.append((_draw(_GLOBULAR, int(rng.integers(40, 120)), rng), "globular"))
            regions, seq, pos = [], "", 0
            for chunk, label in parts:
                regions.append(Region(label, pos, pos + len(chunk)))
                seq += chunk
                pos += len(chunk)
            name = f"tm_{cat.replace('+', '').lower()}_{k}"
            records.append(ProteinRecord(name, DEFAULT_ALPHABET.encode(seq), regions=regions,
                                         meta={"category": cat}))
    return records
