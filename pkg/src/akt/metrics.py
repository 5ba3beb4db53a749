"""Evaluation metrics and pseudo-label diagnostics.

Accuracy lives with the trainer; this module provides mean average precision
for multilabel scoring and the pseudo-label reliability diagnostics. It is
also the only module that may read a dataset's diagnostic labels: training
code passes datasets in and receives scores out.
"""

from collections import Counter

import numpy as np

from akt.errors import ValidationError


class DiagnosticLabels:
    """Opaque holder for source-side ground-truth class ids.

    Training code never reads these; only the functions below unwrap them.
    """

    def __init__(self, class_ids):
        self._class_ids = np.asarray(class_ids, dtype=np.int64).reshape(-1)

    def __len__(self):
        return self._class_ids.shape[0]


def diagnostic_class_ids(dataset):
    """Unwrap a dataset's diagnostic class ids, or None if it has none."""
    diag = getattr(dataset, "diagnostics", None)
    if diag is None:
        return None
    return diag._class_ids


def average_precision(scores, truth):
    """AP in [0, 1]: mean of precision at each positive's rank.

    Ranking is by descending score with ties broken by ascending index.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    truth = np.asarray(truth, dtype=np.float64).reshape(-1)
    if scores.shape != truth.shape:
        raise ValidationError(f"scores shape {scores.shape} != truth shape {truth.shape}")
    positives = truth > 0.0
    if not positives.any():
        raise ValidationError("average_precision needs at least one positive")
    order = np.lexsort((np.arange(scores.shape[0]), -scores))
    hits = positives[order]
    cum_hits = np.cumsum(hits)
    ranks = np.arange(1, scores.shape[0] + 1)
    return float((cum_hits[hits] / ranks[hits]).mean())


def mean_average_precision(scores, truth):
    """mAP in [0, 100] over classes that have at least one positive."""
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if scores.ndim != 2 or scores.shape != truth.shape:
        raise ValidationError(f"scores shape {scores.shape} != truth shape {truth.shape}")
    aps = [
        average_precision(scores[:, c], truth[:, c])
        for c in range(scores.shape[1])
        if (truth[:, c] > 0.0).any()
    ]
    if not aps:
        raise ValidationError("no class has a positive example")
    return 100.0 * float(np.mean(aps))


def _hard_classes(predicted):
    predicted = np.asarray(predicted, dtype=np.float64)
    if predicted.ndim != 2:
        raise ValidationError(f"predicted labels must be 2-D, got shape {predicted.shape}")
    return np.argmax(predicted, axis=1)


def pseudo_label_reliability(predicted, class_ids, mapping):
    """Reliability score plus per-class top-3 pseudo-label frequencies.

    mapping declares which target class counts as correct for each source
    class; unmapped source classes are excluded from the score. Returns
    (percentage in [0, 100], {source class: [(target class, count), ...]}).
    """
    pred = _hard_classes(predicted)
    class_ids = np.asarray(class_ids, dtype=np.int64).reshape(-1)
    if pred.shape[0] != class_ids.shape[0]:
        raise ValidationError(
            f"{pred.shape[0]} predictions vs {class_ids.shape[0]} diagnostic labels"
        )
    mapped = np.array([c in mapping for c in class_ids], dtype=bool)
    if not mapped.any():
        raise ValidationError("no sample has a mapped source class")
    expected = np.array([mapping.get(int(c), -1) for c in class_ids], dtype=np.int64)
    score = 100.0 * float((pred[mapped] == expected[mapped]).mean())
    top3 = {}
    for src in np.unique(class_ids):
        counts = Counter(pred[class_ids == src].tolist())
        top3[int(src)] = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:3]
    return score, top3


def pseudo_label_purity(predicted, class_ids):
    """Majority-map agreement in [0, 100].

    The fraction of samples whose hard pseudo-label equals the most frequent
    pseudo-label of their true source class; this is the reliability score
    under the empirically best class mapping, so it needs no caller mapping.
    """
    pred = _hard_classes(predicted)
    class_ids = np.asarray(class_ids, dtype=np.int64).reshape(-1)
    if pred.shape[0] != class_ids.shape[0] or pred.shape[0] == 0:
        raise ValidationError(
            f"{pred.shape[0]} predictions vs {class_ids.shape[0]} diagnostic labels"
        )
    agree = 0
    for src in np.unique(class_ids):
        counts = np.bincount(pred[class_ids == src])
        agree += int(counts.max())
    return 100.0 * agree / pred.shape[0]


def dataset_pseudo_label_purity(predicted, dataset):
    """Purity against a dataset's diagnostics, or None if it has none."""
    class_ids = diagnostic_class_ids(dataset)
    if class_ids is None:
        return None
    return pseudo_label_purity(predicted, class_ids)


def diagnostic_onehot(dataset):
    """Diagnostic labels as a one-hot matrix (for supervised toplines only)."""
    class_ids = diagnostic_class_ids(dataset)
    if class_ids is None:
        return None
    count = int(class_ids.max()) + 1
    onehot = np.zeros((class_ids.shape[0], count), dtype=np.float64)
    onehot[np.arange(class_ids.shape[0]), class_ids] = 1.0
    return onehot
