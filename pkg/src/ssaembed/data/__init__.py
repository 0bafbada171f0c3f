from .alphabet import CANONICAL, DEFAULT_ALPHABET, UNKNOWN, Alphabet, encode_sequence, one_hot
from .formats import (
    load_records, parse_fasta, read_coordinates, read_embeddings, read_labels, read_position_labels,
    write_coordinates, write_embeddings, write_fasta, write_labels, write_position_labels,
)
from .geometry import contacts_from_coordinates
from .records import (
    SS8, DataError, ProteinRecord, Region, labels_to_regions, regions_to_labels, tm_category,
)
from .sampling import (
    NUM_LEVELS, PairSampler, PairSamplerConfig, hierarchy_level, level_probabilities,
    perturb_sequence, sample_pair_batch,
)
from .synthetic import SyntheticCorpusConfig, generate_synthetic_corpus, generate_tm_corpus
