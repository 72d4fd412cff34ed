# crf/model.py
"""
Pairwise CRF representation in the over-complete (indicator) form.

A labeling x is mapped to its sufficient statistics phi(x): one one-hot block
per node and one block per edge. Parameters theta and moments mu live in the
same space (StatVector), and the energy is the inner product theta . phi(x),
which MAP inference maximizes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from utils.validation import ValidationError, validate_labeling


class PairwiseLayout(str, Enum):
    """Layout of the per-edge statistic"""
    POTTS = "potts"   # (I[x_i = x_j], I[x_i != x_j])
    FULL = "full"     # one-hot over (x_i, x_j), row-major, x_i for the lower node index


@dataclass(frozen=True)
class LabelSpace:
    count: int
    names: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        if int(self.count) != self.count or self.count < 2:
            raise ValidationError(f"Label count must be an integer >= 2, got {self.count}")
        if self.names is not None:
            names = tuple(str(n) for n in self.names)
            if len(names) != self.count:
                raise ValidationError(
                    f"Expected {self.count} label names, got {len(names)}"
                )
            if len(set(names)) != len(names):
                raise ValidationError("Label names must be unique")
            object.__setattr__(self, "names", names)


@dataclass(frozen=True)
class CrfGraph:
    """Undirected graph; edges are stored as sorted (min, max) pairs in sorted order."""
    node_count: int
    edges: Tuple[Tuple[int, int], ...] = ()

    def __post_init__(self):
        if int(self.node_count) != self.node_count or self.node_count < 1:
            raise ValidationError(f"node_count must be a positive integer, got {self.node_count}")

        canonical = []
        for edge in self.edges:
            i, j = (int(v) for v in edge)
            if i == j:
                raise ValidationError(f"Self-loop on node {i}")
            if not (0 <= i < self.node_count and 0 <= j < self.node_count):
                raise ValidationError(f"Edge ({i}, {j}) has an endpoint outside [0, {self.node_count})")
            canonical.append((min(i, j), max(i, j)))

        canonical.sort()
        for a, b in zip(canonical, canonical[1:]):
            if a == b:
                raise ValidationError(f"Duplicate edge {a}")
        object.__setattr__(self, "edges", tuple(canonical))

    @classmethod
    def grid(cls, width: int, height: int) -> "CrfGraph":
        """4-connected grid, nodes numbered row-major"""
        if width < 1 or height < 1:
            raise ValidationError(f"Grid dimensions must be positive, got {width}x{height}")
        edges = []
        for r in range(height):
            for c in range(width):
                n = r * width + c
                if c + 1 < width:
                    edges.append((n, n + 1))
                if r + 1 < height:
                    edges.append((n, n + width))
        return cls(width * height, tuple(edges))

    @classmethod
    def chain(cls, length: int) -> "CrfGraph":
        return cls(length, tuple((i, i + 1) for i in range(length - 1)))

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @cached_property
    def edge_array(self) -> np.ndarray:
        """(E, 2) int array of endpoints"""
        if not self.edges:
            return np.zeros((0, 2), dtype=np.int64)
        return np.asarray(self.edges, dtype=np.int64)


@dataclass(frozen=True)
class Labeling:
    assignment: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "assignment", tuple(int(v) for v in self.assignment))

    def __len__(self) -> int:
        return len(self.assignment)

    def __iter__(self):
        return iter(self.assignment)

    def __getitem__(self, index: int) -> int:
        return self.assignment[index]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.assignment, dtype=np.int64)

    def validate(self, node_count: int, label_count: int) -> "Labeling":
        validate_labeling(self.assignment, node_count, label_count)
        return self


LabelingLike = Union[Labeling, Sequence[int], np.ndarray]


def as_labeling(x: LabelingLike) -> Labeling:
    if isinstance(x, Labeling):
        return x
    return Labeling(tuple(int(v) for v in np.asarray(x).ravel()))


def pairwise_width(layout: PairwiseLayout, label_count: int) -> int:
    return 2 if layout == PairwiseLayout.POTTS else label_count * label_count


@dataclass(frozen=True)
class BlockMask:
    """Selects the statistic blocks that take part in an inner product"""
    unary: np.ndarray      # (N,) bool
    pairwise: np.ndarray   # (E,) bool

    @classmethod
    def full(cls, graph: CrfGraph) -> "BlockMask":
        return cls(np.ones(graph.node_count, dtype=bool), np.ones(graph.edge_count, dtype=bool))


@dataclass(frozen=True, eq=False)
class StatVector:
    """
    A vector in the sufficient-statistics space of a graph and label space.

    Holds phi(x), parameters theta and moments mu alike. Arrays are copied
    on construction and made read-only.
    """
    graph: CrfGraph
    label_count: int
    layout: PairwiseLayout
    unary: np.ndarray
    pairwise: np.ndarray

    def __post_init__(self):
        layout = PairwiseLayout(self.layout)
        unary = np.array(self.unary, dtype=float)
        pairwise = np.array(self.pairwise, dtype=float)
        n, e = self.graph.node_count, self.graph.edge_count
        width = pairwise_width(layout, self.label_count)

        if pairwise.size == 0:
            pairwise = pairwise.reshape(e, width) if e == 0 else pairwise
        if unary.shape != (n, self.label_count):
            raise ValidationError(
                f"Unary blocks have shape {unary.shape}, expected {(n, self.label_count)}"
            )
        if pairwise.shape != (e, width):
            raise ValidationError(
                f"Pairwise blocks have shape {pairwise.shape}, expected {(e, width)} for {layout.value} layout"
            )

        unary.setflags(write=False)
        pairwise.setflags(write=False)
        object.__setattr__(self, "layout", layout)
        object.__setattr__(self, "unary", unary)
        object.__setattr__(self, "pairwise", pairwise)

    @classmethod
    def zeros(cls, graph: CrfGraph, label_count: int,
              layout: PairwiseLayout = PairwiseLayout.POTTS) -> "StatVector":
        width = pairwise_width(layout, label_count)
        return cls(graph, label_count, layout,
                   np.zeros((graph.node_count, label_count)),
                   np.zeros((graph.edge_count, width)))

    def replace(self, unary: Optional[np.ndarray] = None,
                pairwise: Optional[np.ndarray] = None) -> "StatVector":
        return StatVector(
            self.graph, self.label_count, self.layout,
            self.unary if unary is None else unary,
            self.pairwise if pairwise is None else pairwise,
        )

    def check_compatible(self, other: "StatVector") -> None:
        """Raise ValidationError unless both vectors share graph, labels and layout"""
        if self.layout != other.layout:
            raise ValidationError(
                f"Layout mismatch: {self.layout.value} vs {other.layout.value}"
            )
        if self.label_count != other.label_count:
            raise ValidationError(
                f"Label count mismatch: {self.label_count} vs {other.label_count}"
            )
        if self.graph is not other.graph and self.graph != other.graph:
            raise ValidationError("StatVectors belong to different graphs")

    def norm(self) -> float:
        return math.sqrt(float(np.sum(self.unary ** 2) + np.sum(self.pairwise ** 2)))

    def scaled(self, factor: float) -> "StatVector":
        return self.replace(self.unary * factor, self.pairwise * factor)

    def pairwise_tables(self) -> np.ndarray:
        """(E, L, L) table of pairwise values indexed [x_i, x_j] for edge (i, j), i < j"""
        L = self.label_count
        if self.layout == PairwiseLayout.FULL:
            return self.pairwise.reshape(-1, L, L)
        eye = np.eye(L, dtype=bool)
        return np.where(eye[None, :, :], self.pairwise[:, 0, None, None], self.pairwise[:, 1, None, None])

    def to_full(self) -> "StatVector":
        """Embed a Potts-layout vector in the full layout (a on the diagonal, b off it)"""
        if self.layout == PairwiseLayout.FULL:
            return self
        tables = self.pairwise_tables().reshape(self.graph.edge_count, -1)
        return StatVector(self.graph, self.label_count, PairwiseLayout.FULL, self.unary, tables)

    def to_dict(self) -> dict:
        return {
            "layout": self.layout.value,
            "labels": self.label_count,
            "unary": self.unary.tolist(),
            "pairwise": self.pairwise.tolist(),
        }


@dataclass(frozen=True, eq=False)
class CrfInstance:
    """
    A CRF over a graph: parameters theta plus the observation metadata the
    segmentation harness needs (observed unaries, ground truth, region colors,
    raw classifier scores).
    """
    graph: CrfGraph
    labels: LabelSpace
    theta: StatVector
    observed_mask: np.ndarray = field(default=None)
    ground_truth: Optional[Labeling] = None
    colors: Optional[np.ndarray] = None
    unary_scores: Optional[np.ndarray] = None
    edge_similarity: Optional[np.ndarray] = None

    def __post_init__(self):
        theta = self.theta
        if theta.label_count != self.labels.count or (
                theta.graph is not self.graph and theta.graph != self.graph):
            raise ValidationError("theta shape does not match graph/labels")

        if self.observed_mask is None:
            mask = np.ones(self.graph.node_count, dtype=bool)
        else:
            mask = np.array(self.observed_mask, dtype=bool)
            if mask.shape != (self.graph.node_count,):
                raise ValidationError(
                    f"observed_mask has shape {mask.shape}, expected ({self.graph.node_count},)"
                )
        mask.setflags(write=False)
        object.__setattr__(self, "observed_mask", mask)

        if self.ground_truth is not None:
            gt = as_labeling(self.ground_truth).validate(self.graph.node_count, self.labels.count)
            object.__setattr__(self, "ground_truth", gt)

        if self.colors is not None:
            colors = np.array(self.colors, dtype=float)
            if colors.shape != (self.graph.node_count, 3):
                raise ValidationError(f"colors have shape {colors.shape}, expected ({self.graph.node_count}, 3)")
            colors.setflags(write=False)
            object.__setattr__(self, "colors", colors)

    @property
    def node_count(self) -> int:
        return self.graph.node_count

    @property
    def label_count(self) -> int:
        return self.labels.count

    def with_theta(self, theta: StatVector, observed_mask: Optional[np.ndarray] = None,
                   unary_scores: Optional[np.ndarray] = None) -> "CrfInstance":
        return CrfInstance(
            graph=self.graph,
            labels=self.labels,
            theta=theta,
            observed_mask=self.observed_mask if observed_mask is None else observed_mask,
            ground_truth=self.ground_truth,
            colors=self.colors,
            unary_scores=self.unary_scores if unary_scores is None else unary_scores,
            edge_similarity=self.edge_similarity,
        )


def labeling_stats(graph: CrfGraph, label_count: int, layout: PairwiseLayout,
                   x: LabelingLike) -> StatVector:
    """Sufficient statistics phi(x) for a graph/label space"""
    labeling = as_labeling(x).validate(graph.node_count, label_count)
    xs = labeling.as_array()
    n, e = graph.node_count, graph.edge_count

    unary = np.zeros((n, label_count))
    unary[np.arange(n), xs] = 1.0

    pairwise = np.zeros((e, pairwise_width(layout, label_count)))
    if e:
        xi = xs[graph.edge_array[:, 0]]
        xj = xs[graph.edge_array[:, 1]]
        if layout == PairwiseLayout.POTTS:
            agree = xi == xj
            pairwise[agree, 0] = 1.0
            pairwise[~agree, 1] = 1.0
        else:
            pairwise[np.arange(e), xi * label_count + xj] = 1.0

    return StatVector(graph, label_count, layout, unary, pairwise)


def sufficient_stats(instance: Union[CrfInstance, StatVector], x: LabelingLike) -> StatVector:
    """phi(x) in the layout of the instance parameters (or of a given StatVector)"""
    theta = instance.theta if isinstance(instance, CrfInstance) else instance
    return labeling_stats(theta.graph, theta.label_count, theta.layout, x)


def inner_product(a: StatVector, b: StatVector, mask: Optional[BlockMask] = None) -> float:
    """Sum over blocks of elementwise products, optionally restricted to masked blocks"""
    a.check_compatible(b)
    if mask is None:
        return float(np.sum(a.unary * b.unary) + np.sum(a.pairwise * b.pairwise))
    return float(
        np.sum(a.unary[mask.unary] * b.unary[mask.unary])
        + np.sum(a.pairwise[mask.pairwise] * b.pairwise[mask.pairwise])
    )


def energy(theta: StatVector, x: LabelingLike) -> float:
    """E_theta(x) = theta . phi(x); MAP maximizes it"""
    return inner_product(theta, sufficient_stats(theta, x))


def batch_energies(theta: StatVector, xs: np.ndarray) -> np.ndarray:
    """Energies of a (B, N) array of labelings, vectorized"""
    n = theta.graph.node_count
    total = theta.unary[np.arange(n)[None, :], xs].sum(axis=1)
    if theta.graph.edge_count:
        tables = theta.pairwise_tables()
        edges = theta.graph.edge_array
        picked = tables[np.arange(len(edges))[None, :], xs[:, edges[:, 0]], xs[:, edges[:, 1]]]
        total = total + picked.sum(axis=1)
    return total


def unary_similarity(x: LabelingLike, y: LabelingLike) -> int:
    """phi_u(x) . phi_u(y): the number of nodes on which x and y agree"""
    a, b = as_labeling(x), as_labeling(y)
    if len(a) != len(b):
        raise ValidationError(f"Labelings differ in length: {len(a)} vs {len(b)}")
    return int(np.sum(a.as_array() == b.as_array()))


def similarity_matrix(samples: Sequence[LabelingLike]) -> np.ndarray:
    """Pairwise unary_similarity over a list of labelings"""
    arrays = np.stack([as_labeling(s).as_array() for s in samples])
    return (arrays[:, None, :] == arrays[None, :, :]).sum(axis=2)


def mean_stats(graph: CrfGraph, label_count: int, layout: PairwiseLayout,
               samples: Iterable[LabelingLike]) -> StatVector:
    """Arithmetic mean of phi over a nonempty sample set"""
    samples = list(samples)
    if not samples:
        raise ValidationError("Cannot average statistics of an empty sample set")
    unary = np.zeros((graph.node_count, label_count))
    pairwise = np.zeros((graph.edge_count, pairwise_width(layout, label_count)))
    for s in samples:
        phi = labeling_stats(graph, label_count, layout, s)
        unary += phi.unary
        pairwise += phi.pairwise
    m = len(samples)
    return StatVector(graph, label_count, layout, unary / m, pairwise / m)
