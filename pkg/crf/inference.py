# crf/inference.py
"""
MAP inference: exhaustive enumeration, max-product variable elimination and
synchronous damped loopy max-product belief propagation.

All solvers maximize theta . phi(x) and break ties toward the lowest label.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from crf.model import BlockMask, Labeling, StatVector, batch_energies, energy, inner_product, sufficient_stats
from utils.logging_config import system_logger
from utils.validation import CapacityError, ValidationError

logger = logging.getLogger(__name__)

HERDING_CONDITION_SLACK = 1e-12
_BRUTEFORCE_CHUNK = 1 << 16


class InferenceMethod(str, Enum):
    BRUTEFORCE = "bruteforce"
    ELIMINATION = "elimination"
    LBP = "lbp"


class MessageSchedule(str, Enum):
    SYNCHRONOUS = "synchronous"


@dataclass(frozen=True)
class LbpConfig:
    max_iterations: int = 200
    damping: float = 0.5
    convergence_tol: float = 1e-6
    schedule: MessageSchedule = MessageSchedule.SYNCHRONOUS

    def __post_init__(self):
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ValidationError(f"max_iterations must be a positive integer, got {self.max_iterations}")
        if not 0.0 <= self.damping < 1.0:
            raise ValidationError(f"damping must lie in [0, 1), got {self.damping}")
        if self.convergence_tol < 0:
            raise ValidationError(f"convergence_tol must be nonnegative, got {self.convergence_tol}")
        object.__setattr__(self, "schedule", MessageSchedule(self.schedule))


@dataclass(frozen=True)
class InferenceConfig:
    """Which MAP solver to run and its budgets"""
    method: InferenceMethod = InferenceMethod.LBP
    lbp: LbpConfig = field(default_factory=LbpConfig)
    bruteforce_limit: int = 10 ** 7
    elimination_table_limit: int = 10 ** 7

    def __post_init__(self):
        try:
            object.__setattr__(self, "method", InferenceMethod(self.method))
        except ValueError:
            raise ValidationError(
                f"Unknown inference method {self.method!r}; expected one of "
                f"{[m.value for m in InferenceMethod]}"
            )

    @classmethod
    def from_settings(cls, settings, method: Optional[str] = None) -> "InferenceConfig":
        """Build from config.environment.InferenceSettings, optionally overriding the method"""
        return cls(
            method=method or settings.method,
            lbp=LbpConfig(settings.lbp_max_iterations, settings.lbp_damping, settings.lbp_tol),
            bruteforce_limit=settings.bruteforce_limit,
            elimination_table_limit=settings.elimination_table_limit,
        )

    def to_dict(self) -> Dict:
        return {
            "method": self.method.value,
            "lbp": {
                "max_iterations": self.lbp.max_iterations,
                "damping": self.lbp.damping,
                "convergence_tol": self.lbp.convergence_tol,
                "schedule": self.lbp.schedule.value,
            },
            "bruteforce_limit": self.bruteforce_limit,
            "elimination_table_limit": self.elimination_table_limit,
        }


@dataclass(frozen=True)
class MapResult:
    labeling: Labeling
    energy_value: float
    converged: bool
    iterations_used: int


def _result(theta: StatVector, assignment, converged: bool, iterations: int) -> MapResult:
    labeling = Labeling(tuple(int(v) for v in assignment))
    return MapResult(labeling, energy(theta, labeling), converged, iterations)


def map_bruteforce(theta: StatVector, limit: int = 10 ** 7) -> MapResult:
    """
    Exhaustive MAP over all L^N labelings.

    Enumeration runs in lexicographic order (node 0 most significant), so
    keeping the first maximum yields the lexicographically smallest maximizer.

    Raises:
        CapacityError: If L^N exceeds the limit
    """
    n, L = theta.graph.node_count, theta.label_count
    total = L ** n
    if total > limit:
        raise CapacityError(f"Brute force needs {L}^{n} = {total} labelings, limit is {limit}")

    powers = L ** np.arange(n - 1, -1, -1, dtype=np.int64)
    best_value = -np.inf
    best_index = 0
    for start in range(0, total, _BRUTEFORCE_CHUNK):
        index = np.arange(start, min(start + _BRUTEFORCE_CHUNK, total), dtype=np.int64)
        xs = (index[:, None] // powers[None, :]) % L
        values = batch_energies(theta, xs)
        k = int(np.argmax(values))
        if values[k] > best_value:
            best_value = values[k]
            best_index = int(index[k])

    assignment = (best_index // powers) % L
    return _result(theta, assignment, True, 1)


def _min_degree_variable(remaining: List[int], factors: List[Tuple[Tuple[int, ...], np.ndarray]]) -> int:
    neighbours = {v: set() for v in remaining}
    for scope, _ in factors:
        for v in scope:
            neighbours[v].update(scope)
    return min(remaining, key=lambda v: (len(neighbours[v]) - 1, v))


def map_elimination(theta: StatVector, table_limit: int = 10 ** 7) -> MapResult:
    """
    Exact MAP by max-product variable elimination with a min-degree order.

    Raises:
        CapacityError: If an intermediate table has more than table_limit entries
    """
    n, L = theta.graph.node_count, theta.label_count
    factors: List[Tuple[Tuple[int, ...], np.ndarray]] = [((i,), theta.unary[i]) for i in range(n)]
    tables = theta.pairwise_tables()
    factors.extend((edge, tables[e]) for e, edge in enumerate(theta.graph.edges))

    remaining = list(range(n))
    trace = []
    while remaining:
        v = _min_degree_variable(remaining, factors)
        remaining.remove(v)

        touching = [f for f in factors if v in f[0]]
        factors = [f for f in factors if v not in f[0]]
        scope = tuple(sorted(set().union(*(s for s, _ in touching))))
        if L ** len(scope) > table_limit:
            raise CapacityError(
                f"Elimination table over {len(scope)} variables ({L}^{len(scope)} entries) "
                f"exceeds limit {table_limit}"
            )

        joint = np.zeros((L,) * len(scope))
        for fscope, table in touching:
            shape = [L if u in fscope else 1 for u in scope]
            joint = joint + table.reshape(shape)

        axis = scope.index(v)
        rest = scope[:axis] + scope[axis + 1:]
        trace.append((v, rest, joint.argmax(axis=axis)))
        factors.append((rest, joint.max(axis=axis)))

    assignment = np.zeros(n, dtype=np.int64)
    for v, rest, argmax_table in reversed(trace):
        assignment[v] = argmax_table[tuple(assignment[u] for u in rest)]

    return _result(theta, assignment, True, 1)


def map_lbp(theta: StatVector, cfg: LbpConfig = LbpConfig()) -> MapResult:
    """
    Loopy max-product belief propagation in the log domain.

    Messages are kept per directed edge and normalized to max 0. The update is
    m <- damping * m_old + (1 - damping) * m_new, and the run has converged
    once the largest message change drops below the tolerance.
    """
    graph = theta.graph
    n, L, e = graph.node_count, theta.label_count, graph.edge_count
    unary = theta.unary

    if e == 0:
        return _result(theta, np.argmax(unary, axis=1), True, 0)

    edges = graph.edge_array
    tables = theta.pairwise_tables()
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    # Tables indexed [x_src, x_dst] for both directions
    directed = np.concatenate([tables, np.transpose(tables, (0, 2, 1))])
    reverse = (np.arange(2 * e) + e) % (2 * e)

    messages = np.zeros((2 * e, L))
    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_iterations + 1):
        incoming = np.zeros((n, L))
        np.add.at(incoming, dst, messages)
        cavity = unary[src] + incoming[src] - messages[reverse]
        computed = np.max(cavity[:, :, None] + directed, axis=1)
        computed -= computed.max(axis=1, keepdims=True)

        updated = cfg.damping * messages + (1.0 - cfg.damping) * computed
        updated -= updated.max(axis=1, keepdims=True)
        change = float(np.max(np.abs(updated - messages)))
        messages = updated
        if change < cfg.convergence_tol:
            converged = True
            break

    beliefs = unary.copy()
    np.add.at(beliefs, dst, messages)
    labeling = np.argmax(beliefs, axis=1)

    system_logger.log_inference(InferenceMethod.LBP.value, n, converged, iterations)
    if not converged:
        logger.debug("LBP stopped after %d iterations without reaching tol %g",
                     iterations, cfg.convergence_tol)
    return _result(theta, labeling, converged, iterations)


def solve_map(theta: StatVector, config: InferenceConfig = InferenceConfig()) -> MapResult:
    """Dispatch to the configured MAP solver"""
    if config.method == InferenceMethod.BRUTEFORCE:
        return map_bruteforce(theta, config.bruteforce_limit)
    if config.method == InferenceMethod.ELIMINATION:
        return map_elimination(theta, config.elimination_table_limit)
    return map_lbp(theta, config.lbp)


def check_herding_condition(theta: StatVector, mu: StatVector, x,
                            mask: Optional[BlockMask] = None) -> bool:
    """theta . mu <= theta . phi(x) (+ slack), over the masked blocks when a mask is given"""
    theta.check_compatible(mu)
    phi = sufficient_stats(theta, x)
    return inner_product(theta, mu, mask) <= inner_product(theta, phi, mask) + HERDING_CONDITION_SLACK
