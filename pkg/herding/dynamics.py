# herding/dynamics.py
"""
The Herding dynamical system and divMbest.

Herding alternates a MAP call with the update
    theta <- theta + eta * (mu - phi(x*))
on every block with a positive rate. divMbest subtracts lambda * phi_u(x*)
from the unary parameters only, which is Herding with mu = 0, eta_u = lambda
and eta_p = 0.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from crf.inference import InferenceConfig, check_herding_condition, solve_map
from crf.model import (
    Labeling, LabelingLike, StatVector, as_labeling, energy, inner_product, mean_stats,
    sufficient_stats,
)
from herding.moments import MomentSpec
from utils.validation import ValidationError, validate_positive

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class HerdingConfig:
    initial_theta: StatVector
    spec: MomentSpec
    num_samples: int
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    theta_norm_cap: Optional[float] = None

    def __post_init__(self):
        self.initial_theta.check_compatible(self.spec.mu)
        if int(self.num_samples) != self.num_samples or self.num_samples < 1:
            raise ValidationError(f"num_samples must be a positive integer, got {self.num_samples}")
        if self.theta_norm_cap is not None:
            validate_positive(self.theta_norm_cap, "theta_norm_cap")
        if not (np.all(np.isfinite(self.initial_theta.unary)) and np.all(np.isfinite(self.initial_theta.pairwise))):
            raise ValidationError("initial theta must be finite")

    def effective_norm_cap(self) -> Optional[float]:
        """Explicit cap, else max(1, |Theta|) when the moment spec asks for normalization, else None"""
        if self.theta_norm_cap is not None:
            return float(self.theta_norm_cap)
        if self.spec.normalize_theta:
            return max(1.0, self.initial_theta.norm())
        return None


@dataclass(frozen=True, eq=False)
class HypothesisSet:
    samples: Tuple[Labeling, ...]
    running_mean_stats: StatVector
    error_trace: Tuple[float, ...]
    condition_trace: Tuple[bool, ...]
    energy_trace: Tuple[float, ...]
    theta_trajectory: Tuple[StatVector, ...]
    final_theta: StatVector
    inference_converged: Tuple[bool, ...] = ()

    def __len__(self) -> int:
        return len(self.samples)

    def assignments(self) -> np.ndarray:
        """(M, N) int array of the samples"""
        return np.stack([s.as_array() for s in self.samples])


def _weighted_error(mu: StatVector, mean_unary: np.ndarray, mean_pairwise: np.ndarray,
                    unary_rates: np.ndarray, pairwise_rates: np.ndarray) -> float:
    unary_gap = np.sum((mu.unary - mean_unary) ** 2, axis=1)
    total = float(np.sum(unary_rates[unary_rates > 0] * unary_gap[unary_rates > 0]))
    if mu.pairwise.shape[0]:
        pairwise_gap = np.sum((mu.pairwise - mean_pairwise) ** 2, axis=1)
        total += float(np.sum(pairwise_rates[pairwise_rates > 0] * pairwise_gap[pairwise_rates > 0]))
    return total


class _TraceRecorder:
    """Accumulates samples and the per-iteration diagnostics of a run"""

    def __init__(self, reference_theta: StatVector, mu: StatVector,
                 unary_rates: np.ndarray, pairwise_rates: np.ndarray):
        self.reference_theta = reference_theta
        self.mu = mu
        self.unary_rates = unary_rates
        self.pairwise_rates = pairwise_rates
        self.sum_unary = np.zeros_like(mu.unary)
        self.sum_pairwise = np.zeros_like(mu.pairwise)
        self.samples: List[Labeling] = []
        self.errors: List[float] = []
        self.conditions: List[bool] = []
        self.energies: List[float] = []
        self.trajectory: List[StatVector] = []
        self.converged: List[bool] = []

    def record(self, theta: StatVector, labeling: Labeling, phi: StatVector, converged: bool):
        self.trajectory.append(theta)
        self.samples.append(labeling)
        self.converged.append(converged)
        self.sum_unary += phi.unary
        self.sum_pairwise += phi.pairwise
        m = len(self.samples)
        self.errors.append(_weighted_error(self.mu, self.sum_unary / m, self.sum_pairwise / m,
                                           self.unary_rates, self.pairwise_rates))
        holds = check_herding_condition(theta, self.mu, labeling)
        if not holds:
            logger.debug("Herding condition violated at iteration %d", m)
        self.conditions.append(holds)
        self.energies.append(energy(self.reference_theta, labeling))

    def build(self, final_theta: StatVector) -> HypothesisSet:
        m = len(self.samples)
        mean = self.mu.replace(self.sum_unary / m, self.sum_pairwise / m)
        return HypothesisSet(
            samples=tuple(self.samples),
            running_mean_stats=mean,
            error_trace=tuple(self.errors),
            condition_trace=tuple(self.conditions),
            energy_trace=tuple(self.energies),
            theta_trajectory=tuple(self.trajectory),
            final_theta=final_theta,
            inference_converged=tuple(self.converged),
        )


def _apply_update(theta: StatVector, mu: StatVector, phi: StatVector,
                  unary_rates: np.ndarray, pairwise_rates: np.ndarray,
                  norm_cap: Optional[float]) -> StatVector:
    unary = theta.unary.copy()
    rows = unary_rates > 0
    unary[rows] = theta.unary[rows] + unary_rates[rows, None] * (mu.unary[rows] - phi.unary[rows])

    pairwise = theta.pairwise.copy()
    edges = pairwise_rates > 0
    if edges.any():
        pairwise[edges] = theta.pairwise[edges] + pairwise_rates[edges, None] * (mu.pairwise[edges] - phi.pairwise[edges])

    updated = theta.replace(unary, pairwise)
    if norm_cap is not None:
        norm = updated.norm()
        if norm > norm_cap:
            logger.debug("Scaling theta from norm %.6g to cap %.6g", norm, norm_cap)
            updated = updated.scaled(norm_cap / norm)
    return updated


def herding_step(theta: StatVector, spec: MomentSpec, inference: InferenceConfig = InferenceConfig(),
                 norm_cap: Optional[float] = None) -> Tuple[Labeling, StatVector]:
    """One iteration: x* = MAP(theta), then the moment-matching update"""
    theta.check_compatible(spec.mu)
    x = solve_map(theta, inference).labeling
    unary_rates, pairwise_rates = spec.block_rates()
    phi = sufficient_stats(theta, x)
    return x, _apply_update(theta, spec.mu, phi, unary_rates, pairwise_rates, norm_cap)


def herding_run(cfg: HerdingConfig) -> HypothesisSet:
    """Run M iterations from theta_(0) = Theta; sample first, update second"""
    spec = cfg.spec
    unary_rates, pairwise_rates = spec.block_rates()
    cap = cfg.effective_norm_cap()
    recorder = _TraceRecorder(cfg.initial_theta, spec.mu, unary_rates, pairwise_rates)

    theta = cfg.initial_theta
    for _ in range(cfg.num_samples):
        result = solve_map(theta, cfg.inference)
        phi = sufficient_stats(theta, result.labeling)
        recorder.record(theta, result.labeling, phi, result.converged)
        theta = _apply_update(theta, spec.mu, phi, unary_rates, pairwise_rates, cap)

    return recorder.build(theta)


def divmbest_run(theta: StatVector, lam: float, num_samples: int,
                 inference: InferenceConfig = InferenceConfig()) -> HypothesisSet:
    """
    Diverse M-best: after each MAP call subtract lam * phi_u(x*) from the
    unary parameters. Pairwise parameters never change.
    """
    lam = validate_positive(lam, "lambda", allow_zero=True)
    if int(num_samples) != num_samples or num_samples < 1:
        raise ValidationError(f"num_samples must be a positive integer, got {num_samples}")

    mu = StatVector.zeros(theta.graph, theta.label_count, theta.layout)
    recorder = _TraceRecorder(theta, mu, np.full(theta.graph.node_count, lam),
                              np.zeros(theta.graph.edge_count))
    for _ in range(num_samples):
        result = solve_map(theta, inference)
        phi = sufficient_stats(theta, result.labeling)
        recorder.record(theta, result.labeling, phi, result.converged)
        theta = theta.replace(unary=theta.unary - lam * phi.unary)

    hypotheses = recorder.build(theta)
    logger.debug("divMbest produced %d samples (lambda=%g, %d distinct)", num_samples, lam,
                 len(set(s.assignment for s in hypotheses.samples)))
    return hypotheses


def reconstruction_error(mu: StatVector, samples: Sequence[LabelingLike], spec: MomentSpec) -> float:
    """Rate-weighted |mu - mean phi(samples)|^2 over the blocks the moment spec constrains"""
    samples = list(samples)
    if not samples:
        raise ValidationError("reconstruction_error needs at least one sample")
    mean = mean_stats(mu.graph, mu.label_count, mu.layout, samples)
    unary_rates, pairwise_rates = spec.block_rates()
    return _weighted_error(mu, mean.unary, mean.pairwise, unary_rates, pairwise_rates)


def diverse_objective_weights(m: int, samples: Sequence[LabelingLike], cfg: HerdingConfig) -> StatVector:
    """
    Weights w with diverse_objective(x) = w . phi(x).

    Per block b with rate r_b and reference rate eta (eta_u if positive,
    else eta_p):
        w_b = Theta_b / (eta * m) + (r_b / eta) * (mu_b - mean_k phi_b(x_k))
    so that theta_(m) . phi(x) = eta * m * diverse_objective(x) when no norm
    cap is active.
    """
    samples = list(samples)
    if m < 1 or m != len(samples):
        raise ValidationError(f"m must equal the number of samples (>= 1), got m={m} with {len(samples)} samples")
    if cfg.effective_norm_cap() is not None:
        raise ValidationError("diverse_objective does not hold under theta normalization")

    spec, big_theta = cfg.spec, cfg.initial_theta
    eta = spec.eta_unary if spec.eta_unary > 0 else spec.eta_pairwise
    unary_rates, pairwise_rates = spec.block_rates()
    mean = mean_stats(big_theta.graph, big_theta.label_count, big_theta.layout, samples)

    unary = big_theta.unary / (eta * m) + (unary_rates / eta)[:, None] * (spec.mu.unary - mean.unary)
    pairwise = big_theta.pairwise / (eta * m) + (pairwise_rates / eta)[:, None] * (spec.mu.pairwise - mean.pairwise)
    return big_theta.replace(unary, pairwise)


def diverse_objective(x: LabelingLike, m: int, samples: Sequence[LabelingLike], cfg: HerdingConfig) -> float:
    weights = diverse_objective_weights(m, samples, cfg)
    return inner_product(weights, sufficient_stats(weights, x))


def diversity_term(x: LabelingLike, samples: Sequence[LabelingLike], theta_like: StatVector) -> float:
    """-(1/m) sum_k phi(x) . phi(x_k), the repulsion from earlier samples"""
    samples = list(samples)
    mean = mean_stats(theta_like.graph, theta_like.label_count, theta_like.layout, samples)
    return -inner_product(sufficient_stats(theta_like, x), mean)


def mean_unary_marginals(samples: Sequence[LabelingLike], label_count: int) -> np.ndarray:
    """(N, L) empirical label frequencies per node"""
    samples = [as_labeling(s) for s in samples]
    if not samples:
        raise ValidationError("mean_unary_marginals needs at least one sample")
    assignments = np.stack([s.as_array() for s in samples])
    if assignments.min() < 0 or assignments.max() >= label_count:
        raise ValidationError(f"Samples contain labels outside [0, {label_count})")
    counts = np.stack([(assignments == label).sum(axis=0) for label in range(label_count)], axis=1)
    return counts / len(samples)
