# herding/moments.py
"""
Target moments mu and per-block update rates for the Herding system.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Tuple

import numpy as np
from scipy.special import softmax

from crf.model import (
    BlockMask, CrfGraph, CrfInstance, LabelSpace, LabelingLike, PairwiseLayout, StatVector, mean_stats,
)
from utils.validation import ValidationError, validate_positive

logger = logging.getLogger(__name__)

POLYTOPE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class MomentSpec:
    """
    Target moments with update rates.

    Unary blocks of nodes with unary_constrained False carry no moment
    constraint; their rate is zero regardless of eta_unary.
    """
    mu: StatVector
    eta_unary: float
    eta_pairwise: float
    in_polytope: bool = False
    normalize_theta: bool = False
    unary_constrained: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        eta_u = validate_positive(self.eta_unary, "eta_unary", allow_zero=True)
        eta_p = validate_positive(self.eta_pairwise, "eta_pairwise", allow_zero=True)
        if eta_u == 0 and eta_p == 0:
            raise ValidationError("eta_unary and eta_pairwise cannot both be zero")

        if self.unary_constrained is None:
            constrained = np.ones(self.mu.graph.node_count, dtype=bool)
        else:
            constrained = np.array(self.unary_constrained, dtype=bool)
            if constrained.shape != (self.mu.graph.node_count,):
                raise ValidationError(
                    f"unary_constrained has shape {constrained.shape}, expected ({self.mu.graph.node_count},)"
                )
        constrained.setflags(write=False)
        object.__setattr__(self, "eta_unary", eta_u)
        object.__setattr__(self, "eta_pairwise", eta_p)
        object.__setattr__(self, "unary_constrained", constrained)

        if not (self.active_mask().unary.any() or self.active_mask().pairwise.any()):
            raise ValidationError("MomentSpec constrains no block")

    def block_rates(self) -> Tuple[np.ndarray, np.ndarray]:
        """Per-node and per-edge update rates"""
        unary = np.where(self.unary_constrained, self.eta_unary, 0.0)
        pairwise = np.full(self.mu.graph.edge_count, self.eta_pairwise)
        return unary, pairwise

    def active_mask(self) -> BlockMask:
        unary, pairwise = self.block_rates()
        return BlockMask(unary > 0, pairwise > 0)

    def to_dict(self) -> Dict:
        return {
            "mu": self.mu.to_dict(),
            "eta_unary": self.eta_unary,
            "eta_pairwise": self.eta_pairwise,
            "in_polytope": self.in_polytope,
            "normalize_theta": self.normalize_theta,
            "unary_constrained": self.unary_constrained.tolist(),
        }


def validate_polytope(mu: StatVector, mask: Optional[BlockMask] = None, tol: float = POLYTOPE_TOL) -> bool:
    """
    Block-simplex check: every selected block is nonnegative and sums to 1.

    This is a necessary condition for marginal-polytope membership only;
    consistency between unary and pairwise blocks is not checked.
    """
    unary, pairwise = mu.unary, mu.pairwise
    if mask is not None:
        unary, pairwise = unary[mask.unary], pairwise[mask.pairwise]
    for blocks in (unary, pairwise):
        if blocks.size == 0:
            continue
        if np.any(blocks < -tol) or np.any(np.abs(blocks.sum(axis=1) - 1.0) > tol):
            return False
    return True


def project_to_simplex(values: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row onto the probability simplex"""
    v = np.atleast_2d(np.asarray(values, dtype=float))
    k = v.shape[1]
    u = -np.sort(-v, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    ind = np.arange(1, k + 1)
    rho = np.count_nonzero(u - css / ind > 0, axis=1)
    tau = css[np.arange(v.shape[0]), rho - 1] / rho
    projected = np.maximum(v - tau[:, None], 0.0)
    return projected.reshape(np.shape(values)) if np.ndim(values) == 1 else projected


def attractor_residual(spec: MomentSpec) -> float:
    """
    Rate-weighted squared distance from mu to its block-wise closest simplex
    point: the floor the reconstruction error settles at when mu lies outside
    the polytope.
    """
    unary_rates, pairwise_rates = spec.block_rates()
    total = 0.0
    for blocks, rates in ((spec.mu.unary, unary_rates), (spec.mu.pairwise, pairwise_rates)):
        active = rates > 0
        if not active.any():
            continue
        gap = blocks[active] - project_to_simplex(blocks[active])
        total += float(np.sum(rates[active] * np.sum(gap ** 2, axis=1)))
    return total


def moments_zero(graph: CrfGraph, labels: LabelSpace, eta_unary: float = 1.0,
                 layout: PairwiseLayout = PairwiseLayout.POTTS) -> MomentSpec:
    """mu = 0 with pairwise updates off: the moment setting that reproduces divMbest"""
    return MomentSpec(StatVector.zeros(graph, labels.count, layout), eta_unary, 0.0,
                      in_polytope=False, normalize_theta=False)


def _unary_targets(instance: CrfInstance) -> Tuple[np.ndarray, np.ndarray]:
    observed = np.asarray(instance.observed_mask, dtype=bool)
    theta_u = instance.theta.unary
    if not np.all(np.isfinite(theta_u[observed])):
        raise ValidationError("Observed unary parameters must be finite")
    targets = np.zeros_like(theta_u)
    if observed.any():
        targets[observed] = softmax(theta_u[observed], axis=1)
    return targets, observed


def moments_from_unary(instance: CrfInstance, eta_unary: float = 1.0) -> MomentSpec:
    """mu_u = normalized exp(theta_u) on observed nodes; missing unaries are unconstrained"""
    targets, observed = _unary_targets(instance)
    theta = instance.theta
    mu = StatVector(theta.graph, theta.label_count, theta.layout, targets,
                    np.zeros_like(theta.pairwise))
    spec = MomentSpec(mu, eta_unary, 0.0, unary_constrained=observed)
    return _with_polytope_flag(spec)


def moments_full(instance: CrfInstance, eta_unary: float, eta_pairwise: float) -> MomentSpec:
    """
    Unary targets as moments_from_unary plus pairwise targets equal to the
    normalized exponential of each Potts block (0, -C).
    """
    theta = instance.theta
    if theta.layout != PairwiseLayout.POTTS:
        raise ValidationError("moments_full requires the Potts pairwise layout")
    validate_positive(eta_unary, "eta_unary")
    validate_positive(eta_pairwise, "eta_pairwise")
    if theta.graph.edge_count and np.any(theta.pairwise[:, 1] > 0):
        raise ValidationError("Potts blocks must have a nonpositive disagreement entry (0, -C), C >= 0")

    targets, observed = _unary_targets(instance)
    pairwise = softmax(theta.pairwise, axis=1) if theta.graph.edge_count else np.zeros_like(theta.pairwise)
    mu = StatVector(theta.graph, theta.label_count, theta.layout, targets, pairwise)
    spec = MomentSpec(mu, eta_unary, eta_pairwise, unary_constrained=observed)
    return _with_polytope_flag(spec)


def moments_from_samples(graph: CrfGraph, labels: LabelSpace, samples: Iterable[LabelingLike],
                         eta_unary: float = 1.0, eta_pairwise: float = 1.0,
                         layout: PairwiseLayout = PairwiseLayout.POTTS) -> MomentSpec:
    """mu = average statistics of a labeling set (a point inside the polytope)"""
    mu = mean_stats(graph, labels.count, layout, samples)
    return _with_polytope_flag(MomentSpec(mu, eta_unary, eta_pairwise))


def _with_polytope_flag(spec: MomentSpec) -> MomentSpec:
    inside = validate_polytope(spec.mu, spec.active_mask())
    if not inside:
        logger.debug("Moment targets fail the block-simplex check")
    return MomentSpec(spec.mu, spec.eta_unary, spec.eta_pairwise, in_polytope=inside,
                      normalize_theta=spec.normalize_theta, unary_constrained=spec.unary_constrained)


def with_normalization(spec: MomentSpec, enabled: bool = True) -> MomentSpec:
    return MomentSpec(spec.mu, spec.eta_unary, spec.eta_pairwise, in_polytope=spec.in_polytope,
                      normalize_theta=enabled, unary_constrained=spec.unary_constrained)


def build_moment_spec(instance: CrfInstance, source: str, eta_unary: float, eta_pairwise: float = 0.0,
                      normalize_theta: bool = False) -> MomentSpec:
    """Moment spec by builder name: zero, unary or full"""
    if source == "zero":
        spec = moments_zero(instance.graph, instance.labels, eta_unary, instance.theta.layout)
        if eta_pairwise:
            logger.debug("Ignoring eta_pairwise=%g for zero moments", eta_pairwise)
    elif source == "unary":
        spec = moments_from_unary(instance, eta_unary)
    elif source == "full":
        spec = moments_full(instance, eta_unary, eta_pairwise)
    else:
        raise ValidationError(f"Unknown moment source {source!r}; expected zero, unary or full")
    return with_normalization(spec, normalize_theta) if normalize_theta else spec
