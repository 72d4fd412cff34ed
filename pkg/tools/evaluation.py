# tools/evaluation.py
"""
Oracle and mode evaluation of hypothesis sets against ground truth.

Scores are macro-averages over the classes present in the ground truth, in
percent.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from crf.model import CrfInstance, Labeling, LabelingLike, as_labeling, similarity_matrix
from utils.validation import ValidationError


class MetricKind(str, Enum):
    PER_CLASS_ACCURACY = "per_class_accuracy"
    JACCARD = "jaccard"


@dataclass(frozen=True)
class EvalReport:
    oracle_curve: Tuple[float, ...]
    mode_curve: Tuple[float, ...]
    per_class: Dict[int, float]
    map_accuracy: float
    metric_kind: MetricKind

    @property
    def m_max(self) -> int:
        return len(self.oracle_curve)

    def to_dict(self) -> Dict:
        return {
            "metric": self.metric_kind.value,
            "oracle_curve": list(self.oracle_curve),
            "mode_curve": list(self.mode_curve),
            "per_class": {str(k): v for k, v in sorted(self.per_class.items())},
            "map_accuracy": self.map_accuracy,
        }


def confusion_matrix(gt: np.ndarray, pred: np.ndarray, label_count: int) -> np.ndarray:
    """(L, L) counts indexed [true, predicted]"""
    return np.bincount(gt * label_count + pred, minlength=label_count * label_count).reshape(label_count, label_count)


def per_class_scores(gt: LabelingLike, pred: LabelingLike, label_count: int,
                     kind: MetricKind = MetricKind.PER_CLASS_ACCURACY) -> Dict[int, float]:
    """Percent score for every class present in gt"""
    g, p = as_labeling(gt).as_array(), as_labeling(pred).as_array()
    if g.shape != p.shape:
        raise ValidationError(f"Prediction has {p.size} nodes, ground truth {g.size}")
    conf = confusion_matrix(g, p, label_count)
    hits = np.diag(conf).astype(float)
    true_counts = conf.sum(axis=1)
    if MetricKind(kind) == MetricKind.JACCARD:
        denominators = true_counts + conf.sum(axis=0) - np.diag(conf)
    else:
        denominators = true_counts
    return {int(c): 100.0 * hits[c] / denominators[c] for c in np.flatnonzero(true_counts)}


def score(gt: LabelingLike, pred: LabelingLike, label_count: int,
          kind: MetricKind = MetricKind.PER_CLASS_ACCURACY) -> float:
    values = per_class_scores(gt, pred, label_count, kind)
    return float(np.mean(list(values.values())))


def oracle_select(samples: Sequence[LabelingLike], gt: LabelingLike, label_count: int,
                  kind: MetricKind = MetricKind.PER_CLASS_ACCURACY) -> Tuple[int, float]:
    """Index and score of the best hypothesis; ties go to the lowest index"""
    if not samples:
        raise ValidationError("oracle_select needs at least one hypothesis")
    scores = [score(gt, s, label_count, kind) for s in samples]
    best = int(np.argmax(scores))
    return best, scores[best]


def mode_labeling(samples: Sequence[LabelingLike], label_count: int) -> Labeling:
    """Per-node most frequent label; ties go to the lowest label"""
    if not samples:
        raise ValidationError("mode_labeling needs at least one hypothesis")
    assignments = np.stack([as_labeling(s).as_array() for s in samples])
    counts = np.stack([(assignments == label).sum(axis=0) for label in range(label_count)], axis=1)
    return Labeling(tuple(np.argmax(counts, axis=1)))


def evaluate(samples: Sequence[LabelingLike], instance: CrfInstance,
             kind: MetricKind = MetricKind.PER_CLASS_ACCURACY,
             m_max: Optional[int] = None) -> EvalReport:
    """Oracle and mode curves over prefixes M = 1..m_max"""
    if instance.ground_truth is None:
        raise ValidationError("evaluate needs ground truth")
    samples = [as_labeling(s) for s in samples]
    if not samples:
        raise ValidationError("evaluate needs at least one hypothesis")
    kind = MetricKind(kind)
    m_max = len(samples) if m_max is None else min(int(m_max), len(samples))
    samples = samples[:m_max]

    gt, L = instance.ground_truth, instance.label_count
    scores = np.array([score(gt, s, L, kind) for s in samples])
    oracle_curve = np.maximum.accumulate(scores)

    counts = np.zeros((instance.node_count, L), dtype=np.int64)
    nodes = np.arange(instance.node_count)
    mode_curve: List[float] = []
    for s in samples:
        counts[nodes, s.as_array()] += 1
        mode = Labeling(tuple(np.argmax(counts, axis=1)))
        mode_curve.append(score(gt, mode, L, kind))

    best = int(np.argmax(scores))
    return EvalReport(
        oracle_curve=tuple(float(v) for v in oracle_curve),
        mode_curve=tuple(mode_curve),
        per_class=per_class_scores(gt, samples[best], L, kind),
        map_accuracy=float(scores[0]),
        metric_kind=kind,
    )


def diversity_summary(samples: Sequence[LabelingLike], threshold: Optional[int] = None) -> Dict:
    """Pairwise unary similarity statistics; a pair violates the threshold K when similarity >= K"""
    if len(samples) < 2:
        return {"pairs": 0, "mean_similarity": None, "max_similarity": None, "violations": 0}
    sim = similarity_matrix(samples)
    upper = sim[np.triu_indices(len(samples), k=1)]
    return {
        "pairs": int(upper.size),
        "mean_similarity": float(upper.mean()),
        "max_similarity": int(upper.max()),
        "violations": 0 if threshold is None else int(np.count_nonzero(upper >= threshold)),
    }
