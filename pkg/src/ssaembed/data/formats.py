"""Flat-file readers and writers.

All formats are UTF-8 text with '\\n' line endings; lines starting with '#'
are comments.

* FASTA: ``>id`` header lines followed by wrapped sequence lines.
* labels TSV: ``id<TAB>class.fold.superfamily.family``
* coordinates TSV: ``id<TAB>position<TAB>x<TAB>y<TAB>z`` (0-based positions)
* per-position label TSV: ``id<TAB>position<TAB>label``
* embeddings: ``>id`` line, then one row of D tab-separated reals per position
"""
from collections import defaultdict

import numpy as np

from .alphabet import DEFAULT_ALPHABET
from .geometry import contacts_from_coordinates
from .records import SS8, TM_CODES, TM_LABELS, DataError, ProteinRecord, labels_to_regions


def _text(source):
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, str) and (source == "" or source.startswith(">") or "\n" in source or "\t" in source):
        return source
    with open(source, encoding="utf-8") as fh:
        return fh.read()


def _rows(source, ncols):
    for lineno, line in enumerate(_text(source).split("\n"), 1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.rstrip("\r").split("\t")
        if len(fields) != ncols:
            raise DataError(f"line {lineno}: expected {ncols} tab-separated fields, got {len(fields)}")
        yield lineno, fields


def parse_fasta(source):
    """Parse FASTA text (str, bytes, or a path) into ``[(id, residues)]``."""
    records = []
    name, chunks = None, []
    for lineno, line in enumerate(_text(source).split("\n"), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith(">"):
            if name is not None:
                if not chunks:
                    raise DataError(f"record {name!r} has an empty sequence")
                records.append((name, "".join(chunks)))
            name, chunks = line[1:].split()[0] if line[1:].strip() else "", []
            continue
        if name is None:
            raise DataError(f"line {lineno}: sequence data before the first header")
        chunks.append("".join(line.split()))
    if name is not None:
        if not chunks:
            raise DataError(f"record {name!r} has an empty sequence")
        records.append((name, "".join(chunks)))
    return records


def write_fasta(path, records, width=60):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for name, seq in records:
            fh.write(f">{name}\n")
            for i in range(0, len(seq), width):
                fh.write(seq[i:i + width] + "\n")


def read_labels(source):
    labels = {}
    for lineno, (name, label) in _rows(source, 2):
        parts = tuple(label.split("."))
        if len(parts) != 4:
            raise DataError(f"line {lineno}: hierarchy label {label!r} needs 4 dot-separated levels")
        labels[name] = parts
    return labels


def write_labels(path, labels):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for name, lab in labels.items():
            fh.write(f"{name}\t{'.'.join(map(str, lab))}\n")


def read_coordinates(source):
    rows = defaultdict(dict)
    for lineno, (name, pos, x, y, z) in _rows(source, 5):
        try:
            rows[name][int(pos)] = (float(x), float(y), float(z))
        except ValueError as e:
            raise DataError(f"line {lineno}: {e}") from None
    coords = {}
    for name, by_pos in rows.items():
        n = max(by_pos) + 1
        if sorted(by_pos) != list(range(n)):
            raise DataError(f"{name}: coordinate positions must be 0..n-1 without gaps")
        coords[name] = np.array([by_pos[i] for i in range(n)])
    return coords


def write_coordinates(path, coords):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for name, xyz in coords.items():
            for i, (x, y, z) in enumerate(xyz):
                fh.write(f"{name}\t{i}\t{float(x)!r}\t{float(y)!r}\t{float(z)!r}\n")


def read_position_labels(source):
    rows = defaultdict(dict)
    for lineno, (name, pos, label) in _rows(source, 3):
        rows[name][int(pos)] = label
    out = {}
    for name, by_pos in rows.items():
        n = max(by_pos) + 1
        if sorted(by_pos) != list(range(n)):
            raise DataError(f"{name}: label positions must be 0..n-1 without gaps")
        out[name] = [by_pos[i] for i in range(n)]
    return out


def write_position_labels(path, labels):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for name, labs in labels.items():
            for i, lab in enumerate(labs):
                fh.write(f"{name}\t{i}\t{lab}\n")


def load_records(fasta, labels=None, coords=None, ss=None, tm=None,
                 alphabet=DEFAULT_ALPHABET, contact_threshold=8.0):
    """Join a FASTA file with optional side files into ProteinRecords.

    Side-file entries for ids missing from the FASTA are ignored; a record
    whose side-file entry has the wrong length raises DataError.
    """
    hier = read_labels(labels) if labels else {}
    xyz = read_coordinates(coords) if coords else {}
    ss_labels = read_position_labels(ss) if ss else {}
    tm_labels = read_position_labels(tm) if tm else {}
    records = []
    for name, seq in parse_fasta(fasta):
        kw = {}
        if name in hier:
            kw["hierarchy"] = hier[name]
        if name in xyz:
            kw["coordinates"] = xyz[name]
            kw["contacts"] = contacts_from_coordinates(xyz[name], contact_threshold)
        if name in ss_labels:
            try:
                kw["ss"] = [SS8.index(s) for s in ss_labels[name]]
            except ValueError:
                raise DataError(f"{name}: secondary structure labels must be one of {SS8}") from None
        if name in tm_labels:
            codes = tm_labels[name]
            bad = set(codes) - set(TM_LABELS)
            if bad:
                raise DataError(f"{name}: unknown transmembrane labels {sorted(bad)}")
            kw["regions"] = labels_to_regions([TM_LABELS[c] for c in codes])
        records.append(ProteinRecord(name, alphabet.encode(seq), **kw))
    return records


def region_codes(regions):
    return [TM_CODES[r.label] for r in regions for _ in range(len(r))]


def write_embeddings(path, items):
    """Text embeddings: per record a ``>id`` line, then n rows of D tab-separated reals."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for name, Z in items:
            fh.write(f">{name}\n")
            for row in np.asarray(Z, float):
                fh.write("\t".join(repr(float(v)) for v in row) + "\n")


def read_embeddings(source):
    out, name, rows = {}, None, []
    for lineno, line in enumerate(_text(source).splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        if line.startswith(">"):
            if name is not None:
                out[name] = _stack(name, rows)
            name, rows = line[1:].strip(), []
            continue
        if name is None:
            raise DataError(f"line {lineno}: embedding row before any '>' header")
        try:
            rows.append([float(v) for v in line.split("\t")])
        except ValueError as e:
            raise DataError(f"line {lineno}: {e}") from None
    if name is not None:
        out[name] = _stack(name, rows)
    return out


def _stack(name, rows):
    if not rows or len({len(r) for r in rows}) != 1:
        raise DataError(f"{name}: embedding rows missing or of unequal width")
    return np.array(rows)
