# tools/potentials.py
"""
CRF assembly for segmentation: sigmoid-calibrated unary log-probabilities and
color-modulated Potts pairwise blocks theta_p = (0, -C).
"""
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from crf.model import CrfGraph, CrfInstance, LabelSpace, Labeling, PairwiseLayout, StatVector
from utils.validation import ValidationError, validate_colors, validate_positive

PROBABILITY_FLOOR = 1e-8
_SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class SigmoidParams:
    a: float = -7.0
    b: float = 15.0

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValidationError(f"Sigmoid parameters must be finite, got a={self.a}, b={self.b}")


@dataclass(frozen=True)
class PottsParams:
    decay: float = 10.0
    weight: float = 0.08

    def __post_init__(self):
        validate_positive(self.decay, "Potts decay")
        validate_positive(self.weight, "Potts weight")


SEMANTIC_POTTS = PottsParams(decay=10.0, weight=0.08)
INTERACTIVE_POTTS = PottsParams(decay=1.0, weight=0.15)


def sigmoid_probability(s, params: SigmoidParams = SigmoidParams()):
    """1 / (1 + exp(-(a + b*s))), elementwise for arrays"""
    return expit(params.a + params.b * np.asarray(s, dtype=float))


def log_probabilities(probabilities: np.ndarray, floor: float = PROBABILITY_FLOOR) -> np.ndarray:
    """Clamp at the floor, renormalize each row to sum 1 and take logarithms"""
    p = np.clip(np.asarray(probabilities, dtype=float), floor, None)
    p = p / p.sum(axis=-1, keepdims=True)
    return np.log(p)


def scores_to_unary(scores: np.ndarray, params: SigmoidParams = SigmoidParams(),
                    floor: float = PROBABILITY_FLOOR) -> np.ndarray:
    """Classifier scores (N, L) -> unary parameters theta_u = log p (higher is more probable)"""
    return log_probabilities(sigmoid_probability(scores, params), floor)


def clamped_one_hot(label: int, label_count: int, floor: float = PROBABILITY_FLOOR) -> np.ndarray:
    """log of a one-hot distribution clamped at the floor, as set by user clicks"""
    p = np.zeros(label_count)
    p[label] = 1.0
    return log_probabilities(p, floor)


def potts_strength(distance: float, params: PottsParams) -> float:
    return params.weight * math.exp(-params.decay * distance)


def build_potts(color_i: Sequence[float], color_j: Sequence[float],
                params: PottsParams = SEMANTIC_POTTS) -> np.ndarray:
    """Pairwise block (0, -C) with C = weight * exp(-decay * |ci - cj| / sqrt(3))"""
    colors = validate_colors([color_i, color_j])
    distance = float(np.linalg.norm(colors[0] - colors[1])) / _SQRT3
    return np.array([0.0, -potts_strength(distance, params)])


def edge_potts_blocks(graph: CrfGraph, colors: Optional[np.ndarray],
                      similarity: Optional[np.ndarray], params: PottsParams) -> np.ndarray:
    """
    (E, 2) Potts blocks for every edge.

    An explicit similarity s in [0, 1] gives C = weight * s. Otherwise C comes
    from the color distance; without colors the edge gets the full weight.
    """
    blocks = np.zeros((graph.edge_count, 2))
    if graph.edge_count == 0:
        return blocks

    strengths = np.full(graph.edge_count, params.weight)
    if colors is not None:
        colors = validate_colors(colors)
        edges = graph.edge_array
        distance = np.linalg.norm(colors[edges[:, 0]] - colors[edges[:, 1]], axis=1) / _SQRT3
        strengths = params.weight * np.exp(-params.decay * distance)

    if similarity is not None:
        similarity = np.asarray(similarity, dtype=float)
        given = ~np.isnan(similarity)
        if np.any((similarity[given] < 0) | (similarity[given] > 1)):
            raise ValidationError("Edge similarity must lie in [0, 1]")
        strengths = np.where(given, params.weight * np.nan_to_num(similarity), strengths)

    blocks[:, 1] = -strengths
    return blocks


def rescore_unaries(instance: CrfInstance, sigmoid: SigmoidParams,
                    floor: float = PROBABILITY_FLOOR) -> CrfInstance:
    """Recompute observed unaries from the stored classifier scores with other sigmoid parameters"""
    if instance.unary_scores is None:
        raise ValidationError("Instance carries no classifier scores to rescore")
    scores = instance.unary_scores
    rows = np.asarray(instance.observed_mask, dtype=bool) & ~np.any(np.isnan(scores), axis=1)
    unary = np.array(instance.theta.unary)
    if rows.any():
        unary[rows] = scores_to_unary(scores[rows], sigmoid, floor)
    return instance.with_theta(instance.theta.replace(unary=unary))


def assemble_instance(graph: CrfGraph, labels: LabelSpace,
                      unary_scores: Optional[np.ndarray] = None,
                      unary_potential: Optional[np.ndarray] = None,
                      observed: Optional[np.ndarray] = None,
                      colors: Optional[np.ndarray] = None,
                      edge_similarity: Optional[np.ndarray] = None,
                      ground_truth: Optional[Sequence[int]] = None,
                      sigmoid: SigmoidParams = SigmoidParams(),
                      potts: PottsParams = SEMANTIC_POTTS,
                      floor: float = PROBABILITY_FLOOR) -> CrfInstance:
    """
    Build a CrfInstance from per-node scores/potentials (NaN rows = missing).

    Missing unary terms are initialized to 0 and marked unobserved. A row of
    unary_potential (log-probabilities) takes precedence over a score row.
    """
    n, L = graph.node_count, labels.count
    theta_u = np.zeros((n, L))
    known = np.zeros(n, dtype=bool)

    if unary_scores is not None:
        scores = np.asarray(unary_scores, dtype=float)
        if scores.shape != (n, L):
            raise ValidationError(f"unary_scores have shape {scores.shape}, expected {(n, L)}")
        rows = ~np.any(np.isnan(scores), axis=1)
        if np.any(~np.isfinite(scores[rows])):
            raise ValidationError("unary_scores must be finite")
        if rows.any():
            theta_u[rows] = scores_to_unary(scores[rows], sigmoid, floor)
        known |= rows

    if unary_potential is not None:
        potential = np.asarray(unary_potential, dtype=float)
        if potential.shape != (n, L):
            raise ValidationError(f"unary_potential has shape {potential.shape}, expected {(n, L)}")
        rows = ~np.any(np.isnan(potential), axis=1)
        if np.any(~np.isfinite(potential[rows])):
            raise ValidationError("unary_potential must be finite")
        theta_u[rows] = potential[rows]
        known |= rows

    observed_mask = known if observed is None else (np.asarray(observed, dtype=bool) & known)
    theta_u[~observed_mask] = 0.0

    theta = StatVector(graph, L, PairwiseLayout.POTTS, theta_u,
                       edge_potts_blocks(graph, colors, edge_similarity, potts))
    return CrfInstance(
        graph=graph,
        labels=labels,
        theta=theta,
        observed_mask=observed_mask,
        ground_truth=None if ground_truth is None else Labeling(tuple(ground_truth)),
        colors=colors,
        unary_scores=None if unary_scores is None else np.asarray(unary_scores, dtype=float),
        edge_similarity=None if edge_similarity is None else np.asarray(edge_similarity, dtype=float),
    )
