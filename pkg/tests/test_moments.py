# tests/test_moments.py
import math

import numpy as np
import pytest

from crf.model import CrfGraph, CrfInstance, LabelSpace, PairwiseLayout, StatVector
from herding.moments import (
    MomentSpec, attractor_residual, build_moment_spec, moments_from_samples, moments_from_unary, moments_full,
    moments_zero, project_to_simplex, validate_polytope,
)
from tools.instance_generator import random_labelings
from utils.validation import ValidationError


def make_instance(graph, unary, pairwise=None, observed=None, layout=PairwiseLayout.POTTS):
    unary = np.asarray(unary, dtype=float)
    labels = LabelSpace(unary.shape[1])
    if pairwise is None:
        pairwise = StatVector.zeros(graph, labels.count, layout).pairwise
    theta = StatVector(graph, labels.count, layout, unary, pairwise)
    return CrfInstance(graph, labels, theta, observed_mask=observed)


class TestMomentSpec:
    """Rate validation and block masks"""

    def test_rates_cannot_both_be_zero(self):
        """At least one block family must be updated"""
        graph = CrfGraph.chain(2)
        with pytest.raises(ValidationError):
            MomentSpec(StatVector.zeros(graph, 2), 0.0, 0.0)

    def test_negative_rate(self):
        """Rates are nonnegative"""
        with pytest.raises(ValidationError):
            MomentSpec(StatVector.zeros(CrfGraph.chain(2), 2), -1.0, 1.0)

    def test_unconstrained_rows_get_zero_rate(self):
        """Nodes without a moment constraint are never updated"""
        spec = MomentSpec(StatVector.zeros(CrfGraph.chain(3), 2), 2.0, 0.0,
                          unary_constrained=np.array([True, False, True]))
        unary, pairwise = spec.block_rates()
        np.testing.assert_array_equal(unary, [2.0, 0.0, 2.0])
        np.testing.assert_array_equal(pairwise, [0.0, 0.0])
        np.testing.assert_array_equal(spec.active_mask().unary, [True, False, True])

    def test_no_active_block(self):
        """All unaries unconstrained and eta_p = 0 leaves nothing to herd"""
        with pytest.raises(ValidationError):
            MomentSpec(StatVector.zeros(CrfGraph.chain(2), 2), 1.0, 0.0,
                       unary_constrained=np.array([False, False]))


class TestBuilders:
    """Moment constructors"""

    def test_zero_moments(self):
        """mu = 0 with eta_p = 0, outside the polytope"""
        spec = moments_zero(CrfGraph(1), LabelSpace(3), eta_unary=2.0)
        np.testing.assert_array_equal(spec.mu.unary, [[0.0, 0.0, 0.0]])
        assert spec.eta_pairwise == 0.0
        assert not validate_polytope(spec.mu)
        assert not spec.in_polytope

    def test_unary_from_log_probabilities(self):
        """theta_u = log(0.7, 0.3) -> mu_u = (0.7, 0.3)"""
        instance = make_instance(CrfGraph(1), [[math.log(0.7), math.log(0.3)]])
        spec = moments_from_unary(instance)
        np.testing.assert_allclose(spec.mu.unary, [[0.7, 0.3]], atol=1e-12)
        assert spec.in_polytope

    def test_unary_uniform(self):
        """theta_u = (0, 0) -> (0.5, 0.5)"""
        spec = moments_from_unary(make_instance(CrfGraph(1), [[0.0, 0.0]]))
        np.testing.assert_allclose(spec.mu.unary, [[0.5, 0.5]])

    def test_unary_softmax(self):
        """theta_u = (1, 0) -> (e/(e+1), 1/(e+1))"""
        spec = moments_from_unary(make_instance(CrfGraph(1), [[1.0, 0.0]]))
        e = math.e
        np.testing.assert_allclose(spec.mu.unary, [[e / (e + 1), 1 / (e + 1)]], atol=1e-12)

    def test_unobserved_nodes_unconstrained(self):
        """Nodes without an observed unary get no constraint"""
        instance = make_instance(CrfGraph.chain(2), [[0.0, -1.0], [0.0, 0.0]], observed=[True, False])
        spec = moments_from_unary(instance)
        np.testing.assert_array_equal(spec.unary_constrained, [True, False])
        np.testing.assert_array_equal(spec.mu.unary[1], [0.0, 0.0])
        assert spec.in_polytope

    def test_non_finite_unary(self):
        """Infinite observed parameters are rejected"""
        instance = make_instance(CrfGraph(1), [[-np.inf, 0.0]])
        with pytest.raises(ValidationError):
            moments_from_unary(instance)

    def test_full_pairwise_targets(self):
        """C = 0 -> (0.5, 0.5); C = 1 -> (e/(e+1), 1/(e+1))"""
        graph = CrfGraph(3, ((0, 1), (1, 2)))
        instance = make_instance(graph, np.zeros((3, 2)), pairwise=[[0.0, 0.0], [0.0, -1.0]])
        spec = moments_full(instance, 1.0, 0.5)
        e = math.e
        np.testing.assert_allclose(spec.mu.pairwise, [[0.5, 0.5], [e / (e + 1), 1 / (e + 1)]], atol=1e-12)
        assert spec.eta_pairwise == 0.5

    def test_full_rejects_positive_disagreement(self):
        """Potts blocks must have the form (0, -C) with C >= 0"""
        instance = make_instance(CrfGraph.chain(2), np.zeros((2, 2)), pairwise=[[0.0, 0.3]])
        with pytest.raises(ValidationError):
            moments_full(instance, 1.0, 1.0)

    def test_full_rejects_full_layout(self):
        """Only Potts parameters have a pairwise target"""
        instance = make_instance(CrfGraph.chain(2), np.zeros((2, 2)), layout=PairwiseLayout.FULL)
        with pytest.raises(ValidationError):
            moments_full(instance, 1.0, 1.0)

    def test_samples_lie_in_polytope(self):
        """The average of 5 labelings passes the block-simplex check"""
        graph = CrfGraph.grid(2, 2)
        spec = moments_from_samples(graph, LabelSpace(3), random_labelings(4, 3, 5, seed=0))
        assert validate_polytope(spec.mu)
        assert spec.in_polytope

    def test_build_by_name(self):
        """build_moment_spec dispatches on the source name"""
        instance = make_instance(CrfGraph.chain(2), [[0.0, 0.0], [0.0, 0.0]])
        assert build_moment_spec(instance, "zero", 1.5).eta_unary == 1.5
        assert build_moment_spec(instance, "unary", 1.0, normalize_theta=True).normalize_theta
        with pytest.raises(ValidationError):
            build_moment_spec(instance, "marginals", 1.0)


class TestPolytope:
    """Block-simplex check, projection and attractor residual"""

    def test_rejects_oversized_block(self):
        """(0.6, 0.6) sums to 1.2"""
        graph = CrfGraph(1)
        mu = StatVector(graph, 2, PairwiseLayout.POTTS, [[0.6, 0.6]], np.zeros((0, 2)))
        assert not validate_polytope(mu)

    def test_rejects_negative_entry(self):
        """(1.5, -0.5) sums to one but is not a distribution"""
        mu = StatVector(CrfGraph(1), 2, PairwiseLayout.POTTS, [[1.5, -0.5]], np.zeros((0, 2)))
        assert not validate_polytope(mu)

    def test_projection_of_zero(self):
        """The closest simplex point to 0 is uniform"""
        np.testing.assert_allclose(project_to_simplex(np.zeros(2)), [0.5, 0.5])
        np.testing.assert_allclose(project_to_simplex(np.zeros((2, 4))), np.full((2, 4), 0.25))

    def test_projection_keeps_simplex_points(self):
        """Points already on the simplex are unchanged"""
        point = np.array([0.2, 0.3, 0.5])
        np.testing.assert_allclose(project_to_simplex(point), point)

    def test_projection_clips(self):
        """(2, 0) projects to (1, 0)"""
        np.testing.assert_allclose(project_to_simplex(np.array([2.0, 0.0])), [1.0, 0.0])

    def test_zero_moment_residual(self):
        """mu = 0, eta_u = 2, N = 3, L = 3 -> eta_u * N / L = 2"""
        spec = moments_zero(CrfGraph(3), LabelSpace(3), eta_unary=2.0)
        assert attractor_residual(spec) == pytest.approx(2.0)

    def test_residual_vanishes_inside(self):
        """mu inside the polytope has no residual"""
        spec = moments_from_samples(CrfGraph.chain(3), LabelSpace(2), [(0, 1, 1), (1, 1, 0)])
        assert attractor_residual(spec) == pytest.approx(0.0, abs=1e-15)
