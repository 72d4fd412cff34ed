# tools/instance_generator.py
"""
Seeded synthetic segmentation instances: planted blob labelings on grid
graphs with per-label prototype colors and noisy classifier scores.
"""
import logging
import math
from enum import Enum
from typing import List, Optional

import numpy as np

from crf.model import CrfGraph, CrfInstance, LabelSpace, Labeling, PairwiseLayout, StatVector
from tools.potentials import (
    INTERACTIVE_POTTS, PROBABILITY_FLOOR, SEMANTIC_POTTS, PottsParams, SigmoidParams,
    assemble_instance, clamped_one_hot,
)
from utils.validation import ValidationError, validate_fraction, validate_positive

logger = logging.getLogger(__name__)

MAX_GENERATED_NODES = 10 ** 4
COLOR_JITTER = 0.03


class InstanceKind(str, Enum):
    GRID_SEMANTIC = "grid_semantic"
    GRID_INTERACTIVE = "grid_interactive"


def _planted_labeling(width: int, height: int, label_count: int, present: int,
                      rng: np.random.Generator) -> np.ndarray:
    """Voronoi blobs around 2*present random centers; label 0 is always among the planted labels"""
    others = rng.choice(np.arange(1, label_count), size=present - 1, replace=False)
    planted = np.concatenate([[0], np.sort(others)]).astype(np.int64)

    centers = rng.uniform([0.0, 0.0], [width, height], size=(2 * present, 2))
    cols, rows = np.meshgrid(np.arange(width) + 0.5, np.arange(height) + 0.5)
    points = np.stack([cols.ravel(), rows.ravel()], axis=1)
    nearest = np.argmin(((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2), axis=1)
    return planted[nearest % present]


def generate_instance(kind: InstanceKind, width: int, height: int, labels: int,
                      noise: float, seed: int,
                      present_labels: Optional[int] = None,
                      sigmoid: SigmoidParams = SigmoidParams(),
                      potts: Optional[PottsParams] = None,
                      floor: float = PROBABILITY_FLOOR) -> CrfInstance:
    """
    Deterministic instance from a seed.

    Scores are the one-hot ground truth plus noise * N(0, 1). Interactive
    instances keep no unary term; use mask_unaries to reveal some.
    """
    kind = InstanceKind(kind)
    if int(width) != width or int(height) != height or width < 1 or height < 1:
        raise ValidationError(f"Grid dimensions must be positive integers, got {width}x{height}")
    if width * height > MAX_GENERATED_NODES:
        raise ValidationError(f"Grid of {width * height} nodes exceeds {MAX_GENERATED_NODES}")
    label_space = LabelSpace(labels)
    validate_positive(noise, "noise", allow_zero=True)
    present = min(labels, 3) if present_labels is None else int(present_labels)
    if not 1 <= present <= labels:
        raise ValidationError(f"present_labels must lie in [1, {labels}], got {present}")

    rng = np.random.default_rng(seed)
    graph = CrfGraph.grid(width, height)
    gt = _planted_labeling(width, height, labels, present, rng)

    prototypes = rng.uniform(0.1, 0.9, size=(labels, 3))
    colors = np.clip(prototypes[gt] + rng.normal(0.0, COLOR_JITTER, size=(graph.node_count, 3)), 0.0, 1.0)

    scores = np.eye(labels)[gt] + noise * rng.normal(size=(graph.node_count, labels))

    if kind == InstanceKind.GRID_INTERACTIVE:
        instance = assemble_instance(
            graph, label_space,
            unary_scores=np.full_like(scores, np.nan),
            observed=np.zeros(graph.node_count, dtype=bool),
            colors=colors, ground_truth=gt.tolist(),
            sigmoid=sigmoid, potts=potts or INTERACTIVE_POTTS, floor=floor,
        )
    else:
        instance = assemble_instance(
            graph, label_space, unary_scores=scores, colors=colors, ground_truth=gt.tolist(),
            sigmoid=sigmoid, potts=potts or SEMANTIC_POTTS, floor=floor,
        )

    logger.debug("Generated %s instance %dx%d, %d labels, seed %d", kind.value, width, height, labels, seed)
    return instance


def mask_unaries(instance: CrfInstance, observed_fraction: float, seed: int,
                 floor: float = PROBABILITY_FLOOR) -> CrfInstance:
    """
    Reveal ceil(fraction * N) random nodes with clamped one-hot ground-truth
    unaries; every other unary becomes 0 and unobserved.
    """
    if instance.ground_truth is None:
        raise ValidationError("mask_unaries needs ground truth")
    fraction = validate_fraction(observed_fraction)
    n, L = instance.node_count, instance.label_count
    count = min(n, math.ceil(round(fraction * n, 9)))

    rng = np.random.default_rng(seed)
    chosen = rng.choice(n, size=count, replace=False)

    observed = np.zeros(n, dtype=bool)
    observed[chosen] = True
    gt = instance.ground_truth.as_array()
    unary = np.zeros((n, L))
    for node in chosen:
        unary[node] = clamped_one_hot(int(gt[node]), L, floor)

    return CrfInstance(
        graph=instance.graph,
        labels=instance.labels,
        theta=instance.theta.replace(unary=unary),
        observed_mask=observed,
        ground_truth=instance.ground_truth,
        colors=instance.colors,
        unary_scores=None,
        edge_similarity=instance.edge_similarity,
    )


def random_theta(graph: CrfGraph, label_count: int, rng: np.random.Generator,
                 layout: PairwiseLayout = PairwiseLayout.POTTS, scale: float = 1.0) -> StatVector:
    """Gaussian parameters, used for inference and dynamics checks"""
    template = StatVector.zeros(graph, label_count, layout)
    return template.replace(scale * rng.normal(size=template.unary.shape),
                            scale * rng.normal(size=template.pairwise.shape))


def random_tree(node_count: int, rng: np.random.Generator) -> CrfGraph:
    """Random recursive tree: node k attaches to a uniformly chosen earlier node"""
    edges = [(int(rng.integers(0, k)), k) for k in range(1, node_count)]
    return CrfGraph(node_count, tuple(edges))


def single_loop(node_count: int) -> CrfGraph:
    if node_count < 3:
        raise ValidationError("A loop needs at least 3 nodes")
    return CrfGraph(node_count, tuple((k, (k + 1) % node_count) for k in range(node_count)))


def random_labelings(node_count: int, label_count: int, count: int, seed: int) -> List[Labeling]:
    rng = np.random.default_rng(seed)
    draws = rng.integers(0, label_count, size=(count, node_count))
    return [Labeling(tuple(row)) for row in draws]
