from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .metrics import average_precision, fit_thresholds, level_predictions, pearson, spearman

LEVEL_NAMES = ("class", "fold", "superfamily", "family")


@dataclass
class EvalReport:
    accuracy: float
    pearson: Optional[float]
    spearman: Optional[float]
    ap_class: Optional[float]
    ap_fold: Optional[float]
    ap_superfamily: Optional[float]
    ap_family: Optional[float]
    n_pairs: int

    def as_dict(self):
        return asdict(self)

    def tsv(self):
        d = self.as_dict()
        header = "\t".join(d)
        row = "\t".join("NA" if v is None else (str(v) if isinstance(v, int) else f"{v:.6f}") for v in d.values())
        return header + "\n" + row + "\n"


def evaluate_pairs(scores, levels, predicted=None, thresholds=None):
    """Accuracy, correlations and per-level average precision for scored pairs.

    Predicted levels come either directly from `predicted` (a model's own
    classifier) or from binning `scores` with fitted `thresholds`.
    """
    scores = np.asarray(scores, float)
    levels = np.asarray(levels, int)
    if len(scores) == 0:
        raise ValueError("no pairs to evaluate")
    if predicted is None:
        if thresholds is None:
            raise ValueError("need predicted levels or thresholds")
        predicted = level_predictions(scores, thresholds)
    predicted = np.asarray(predicted)
    aps = [average_precision(scores, levels >= t) for t in range(1, 5)]
    corr = (pearson(scores, levels), spearman(scores, levels)) if len(scores) > 1 else (None, None)
    return EvalReport(float((predicted == levels).mean()), corr[0], corr[1], *aps, len(scores))


def evaluate_with_calibration(scores, levels, calib_scores=None, calib_levels=None):
    """Fit thresholds on a calibration set (default: the evaluation set itself) and evaluate."""
    if calib_scores is None:
        calib_scores, calib_levels = scores, levels
    t = fit_thresholds(calib_scores, calib_levels)
    return evaluate_pairs(scores, levels, thresholds=t), t
