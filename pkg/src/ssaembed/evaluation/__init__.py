"""Metrics, the alignment baseline and the secondary-structure probe."""
from .metrics import (  # noqa: F401
    average_precision, fit_thresholds, level_predictions, pearson, ranking, spearman,
    threshold_accuracy,
)
from .nw import blosum62, nw_align_score, nw_score_pairs  # noqa: F401
from .probe import ProbeConfig, kmer_features, probe_metrics, protein_split, ss_probe, train_probe  # noqa: F401
from .report import LEVEL_NAMES, EvalReport, evaluate_pairs, evaluate_with_calibration  # noqa: F401
