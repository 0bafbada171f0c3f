import numpy as np

CANONICAL = "ARNDCQEGHILKMFPSTWYV"
UNKNOWN = len(CANONICAL)


class Alphabet:
    """Maps residue letters to token indices.

    The 20 canonical amino acids get indices 0..19 in BLOSUM order; every
    other symbol (X, B, Z, U, O, gaps, digits...) maps to a single unknown
    index, 20.
    """

    def __init__(self, residues=CANONICAL):
        self.residues = residues
        self.unknown = len(residues)
        self._table = np.full(256, self.unknown, dtype=np.int64)
        for i, r in enumerate(residues):
            self._table[ord(r)] = i
            self._table[ord(r.lower())] = i

    def __len__(self):
        return self.unknown + 1

    def index(self, residue):
        return int(self._table[ord(residue)]) if ord(residue) < 256 else self.unknown

    def encode(self, residues):
        if not residues:
            return np.zeros(0, dtype=np.int64)
        raw = residues.encode("latin-1", errors="replace")
        return self._table[np.frombuffer(raw, dtype=np.uint8)]

    def decode(self, tokens):
        return "".join(self.residues[t] if t < self.unknown else "X" for t in tokens)


DEFAULT_ALPHABET = Alphabet()


def encode_sequence(residues, alphabet=DEFAULT_ALPHABET):
    return alphabet.encode(residues)


def one_hot(tokens, size=len(DEFAULT_ALPHABET)):
    tokens = np.asarray(tokens)
    out = np.zeros(tokens.shape + (size,))
    np.put_along_axis(out, tokens[..., None], 1.0, axis=-1)
    return out
