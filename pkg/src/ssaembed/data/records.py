from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class DataError(ValueError):
    """Raised for malformed input files or records."""


SS8 = "HBEGITSC"

# per-position transmembrane labels
TM_LABELS = {"S": "SP", "M": "TM", "I": "inside", "O": "outside", "G": "globular"}
TM_CODES = {v: k for k, v in TM_LABELS.items()}


@dataclass(frozen=True)
class Region:
    label: str
    start: int
    end: int  # exclusive

    def __len__(self):
        return self.end - self.start


@dataclass
class ProteinRecord:
    id: str
    tokens: np.ndarray
    hierarchy: Optional[tuple] = None
    coordinates: Optional[np.ndarray] = None
    contacts: Optional[np.ndarray] = None
    ss: Optional[np.ndarray] = None
    regions: Optional[list] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.int64)
        n = len(self.tokens)
        if n == 0:
            raise DataError(f"{self.id}: empty sequence")
        if self.hierarchy is not None:
            self.hierarchy = tuple(self.hierarchy)
            if len(self.hierarchy) != 4:
                raise DataError(f"{self.id}: hierarchy label must have 4 levels")
        if self.coordinates is not None:
            self.coordinates = np.asarray(self.coordinates, dtype=float)
            if self.coordinates.shape != (n, 3):
                raise DataError(f"{self.id}: expected {n} coordinates, got {self.coordinates.shape}")
        if self.contacts is not None:
            c = np.asarray(self.contacts)
            if c.shape != (n, n):
                raise DataError(f"{self.id}: contact map shape {c.shape} != ({n}, {n})")
            if not np.isin(c, (0, 1)).all() or not (c == c.T).all():
                raise DataError(f"{self.id}: contact map must be symmetric and binary")
            self.contacts = c.astype(np.int8)
        if self.ss is not None:
            self.ss = np.asarray(self.ss, dtype=np.int64)
            if self.ss.shape != (n,) or self.ss.min() < 0 or self.ss.max() >= len(SS8):
                raise DataError(f"{self.id}: secondary structure labels must be n values in 0..7")
        if self.regions is not None:
            check_regions(self.regions, n, self.id)

    def __len__(self):
        return len(self.tokens)


def check_regions(regions, n, name="record"):
    pos = 0
    for r in regions:
        if r.start != pos or r.end <= r.start:
            raise DataError(f"{name}: regions must be sorted, non-overlapping and cover [0, {n})")
        if r.label not in TM_CODES:
            raise DataError(f"{name}: unknown region label {r.label!r}")
        pos = r.end
    if pos != n:
        raise DataError(f"{name}: regions cover [0, {pos}) but sequence length is {n}")


def labels_to_regions(labels):
    """Collapse a per-position label sequence into maximal runs."""
    regions = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            regions.append(Region(labels[start], start, i))
            start = i
    return regions


def regions_to_labels(regions):
    out = []
    for r in regions:
        out.extend([r.label] * len(r))
    return out


def tm_category(regions):
    labels = {r.label for r in regions}
    sp, tm = "SP" in labels, "TM" in labels
    if tm:
        return "SP+TM" if sp else "TM"
    return "Globular+SP" if sp else "Globular"
