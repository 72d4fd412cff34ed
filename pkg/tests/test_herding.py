# tests/test_herding.py
import io
import math

import numpy as np
import pytest

from crf.inference import InferenceConfig, map_bruteforce
from crf.model import (
    CrfGraph, LabelSpace, PairwiseLayout, StatVector, energy, inner_product, mean_stats, sufficient_stats,
)
from herding.convergence import (
    analyze_convergence, error_distances, first_exact_hit, fit_loglog_slope, plateau_gap, windowed_envelope,
)
from herding.dynamics import (
    HerdingConfig, diverse_objective, diverse_objective_weights, diversity_term, divmbest_run, herding_run,
    herding_step, mean_unary_marginals, reconstruction_error,
)
from herding.moments import MomentSpec, attractor_residual, moments_from_samples, moments_zero, with_normalization
from herding.records import read_jsonl, write_jsonl
from tools.instance_generator import random_labelings, random_theta, random_tree, single_loop
from tools.potentials import log_probabilities
from utils.validation import ValidationError

BRUTEFORCE = InferenceConfig(method="bruteforce")
ELIMINATION = InferenceConfig(method="elimination")


def single_node_theta(values):
    return StatVector(CrfGraph(1), len(values), PairwiseLayout.POTTS, [values], np.zeros((0, 2)))


def unary_only_theta(node_count, label_count, rng):
    probabilities = rng.dirichlet(np.ones(label_count), size=node_count)
    graph = CrfGraph(node_count)
    return StatVector(graph, label_count, PairwiseLayout.POTTS, log_probabilities(probabilities),
                      np.zeros((0, 2)))


class TestHerdingStep:
    """Single iterations and hand-computed sequences"""

    def test_single_step(self):
        """theta=(1,0), mu=0, eta_u=1: x=(0), theta becomes (0,0)"""
        theta = single_node_theta([1.0, 0.0])
        spec = moments_zero(theta.graph, LabelSpace(2), eta_unary=1.0)
        x, updated = herding_step(theta, spec, BRUTEFORCE)
        assert x.assignment == (0,)
        np.testing.assert_array_equal(updated.unary, [[0.0, 0.0]])

    def test_hand_run_sequence(self):
        """Iterating from theta=(1,0) yields labels 0,0,1,0,1,0"""
        theta = single_node_theta([1.0, 0.0])
        spec = moments_zero(theta.graph, LabelSpace(2), eta_unary=1.0)
        hyps = herding_run(HerdingConfig(theta, spec, 6, BRUTEFORCE))
        assert [s[0] for s in hyps.samples] == [0, 0, 1, 0, 1, 0]

    def test_divmbest_hand_run(self):
        """divMbest with lambda=1 follows the same sequence"""
        hyps = divmbest_run(single_node_theta([1.0, 0.0]), 1.0, 6, BRUTEFORCE)
        assert [s[0] for s in hyps.samples] == [0, 0, 1, 0, 1, 0]

    def test_first_sample_is_map(self):
        """M=1 returns the MAP of the initial parameters"""
        rng = np.random.default_rng(3)
        theta = random_theta(CrfGraph.grid(2, 3), 3, rng)
        spec = moments_zero(theta.graph, LabelSpace(3), 1.0)
        hyps = herding_run(HerdingConfig(theta, spec, 1, BRUTEFORCE))
        assert hyps.samples[0] == map_bruteforce(theta).labeling

    def test_zero_lambda_repeats_map(self):
        """lambda = 0 leaves theta unchanged, so every sample is the MAP"""
        rng = np.random.default_rng(4)
        theta = random_theta(CrfGraph.chain(4), 3, rng)
        hyps = divmbest_run(theta, 0.0, 5, BRUTEFORCE)
        assert len(set(hyps.samples)) == 1
        np.testing.assert_array_equal(hyps.final_theta.unary, theta.unary)

    def test_fixed_point(self):
        """mu = phi(MAP) is a fixed point with zero error"""
        rng = np.random.default_rng(6)
        theta = random_theta(CrfGraph.chain(4), 3, rng)
        x_bar = map_bruteforce(theta).labeling
        spec = MomentSpec(sufficient_stats(theta, x_bar), 1.0, 1.0)
        hyps = herding_run(HerdingConfig(theta, spec, 5, BRUTEFORCE))
        assert all(s == x_bar for s in hyps.samples)
        assert all(e == 0.0 for e in hyps.error_trace)

    def test_negative_lambda(self):
        """lambda must be nonnegative"""
        with pytest.raises(ValidationError):
            divmbest_run(single_node_theta([1.0, 0.0]), -1.0, 3)

    def test_config_validation(self):
        """num_samples >= 1 and matching layouts"""
        theta = single_node_theta([1.0, 0.0])
        spec = moments_zero(theta.graph, LabelSpace(2))
        with pytest.raises(ValidationError):
            HerdingConfig(theta, spec, 0)
        full = StatVector.zeros(CrfGraph.chain(2), 2, PairwiseLayout.FULL)
        with pytest.raises(ValidationError):
            HerdingConfig(full, moments_zero(full.graph, LabelSpace(2)), 3)


class TestDivMBestEquivalence:
    """Herding with mu = 0, eta_u = lambda, eta_p = 0 reproduces divMbest"""

    def test_identical_on_random_instances(self):
        """100 trees and loops, M = 20, exact inference: identical samples and trajectories"""
        rng = np.random.default_rng(100)
        for trial in range(100):
            n = int(rng.integers(3, 11))
            L = int(rng.integers(2, 5))
            graph = random_tree(n, rng) if trial % 2 == 0 else single_loop(n)
            theta = random_theta(graph, L, rng)
            lam = float(rng.choice([0.5, 1.0, 2.0, 5.0]))

            div = divmbest_run(theta, lam, 20, ELIMINATION)
            spec = moments_zero(graph, LabelSpace(L), eta_unary=lam)
            herd = herding_run(HerdingConfig(theta, spec, 20, ELIMINATION))

            assert herd.samples == div.samples
            assert herd.error_trace == div.error_trace
            assert herd.energy_trace == div.energy_trace
            for a, b in zip(herd.theta_trajectory, div.theta_trajectory):
                assert np.array_equal(a.unary, b.unary)
                assert np.array_equal(a.pairwise, b.pairwise)

    def test_deterministic(self):
        """Repeated runs produce the same samples"""
        rng = np.random.default_rng(12)
        theta = random_theta(CrfGraph.grid(3, 3), 3, rng)
        first = divmbest_run(theta, 2.0, 10)
        second = divmbest_run(theta, 2.0, 10)
        np.testing.assert_array_equal(first.assignments(), second.assignments())


class TestDiverseObjective:
    """Each sample maximizes the prior-plus-diversity objective"""

    def test_sample_maximizes_objective(self):
        """100 small instances: samples[m] attains the objective maximum over all labelings"""
        rng = np.random.default_rng(55)
        for trial in range(100):
            n = int(rng.integers(2, 7))
            L = int(rng.integers(2, 4))
            graph = random_tree(n, rng)
            theta = random_theta(graph, L, rng)
            mu = mean_stats(graph, L, PairwiseLayout.POTTS, random_labelings(n, L, 3, seed=trial))
            spec = MomentSpec(mu, float(rng.uniform(0.5, 2.0)), float(rng.uniform(0.5, 2.0)))
            cfg = HerdingConfig(theta, spec, 11, BRUTEFORCE)
            hyps = herding_run(cfg)

            for m in range(1, 11):
                weights = diverse_objective_weights(m, hyps.samples[:m], cfg)
                best = map_bruteforce(weights).energy_value
                attained = inner_product(weights, sufficient_stats(weights, hyps.samples[m]))
                assert attained >= best - 1e-9

    def test_scaled_parameters(self):
        """theta_(m) . phi(x) = eta * m * objective(x)"""
        rng = np.random.default_rng(8)
        graph = CrfGraph.chain(4)
        theta = random_theta(graph, 3, rng)
        spec = moments_from_samples(graph, LabelSpace(3), random_labelings(4, 3, 4, seed=1), 1.5, 0.5)
        cfg = HerdingConfig(theta, spec, 6, BRUTEFORCE)
        hyps = herding_run(cfg)
        x = (0, 2, 1, 1)
        for m in range(1, 6):
            expected = energy(hyps.theta_trajectory[m], x)
            assert 1.5 * m * diverse_objective(x, m, hyps.samples[:m], cfg) == pytest.approx(expected, abs=1e-9)

    def test_pure_repulsion(self):
        """With Theta = 0 and mu = 0 the objective is the diversity term"""
        graph = CrfGraph.chain(3)
        theta = StatVector.zeros(graph, 2)
        cfg = HerdingConfig(theta, MomentSpec(StatVector.zeros(graph, 2), 1.0, 1.0), 3)
        samples = [(0, 0, 1), (1, 1, 1)]
        for x in [(0, 0, 0), (0, 1, 0), (1, 1, 1)]:
            assert diverse_objective(x, 2, samples, cfg) == pytest.approx(diversity_term(x, samples, theta))

    def test_diversity_of_repeat(self):
        """Repeating the only earlier sample costs N + E"""
        graph = CrfGraph.chain(3)
        theta = StatVector.zeros(graph, 2)
        assert diversity_term((0, 1, 1), [(0, 1, 1)], theta) == -(3 + 2)

    def test_rejects_norm_cap(self):
        """The identity does not hold once theta is rescaled"""
        theta = single_node_theta([1.0, 0.0])
        cfg = HerdingConfig(theta, moments_zero(theta.graph, LabelSpace(2)), 3, theta_norm_cap=1.0)
        with pytest.raises(ValidationError):
            diverse_objective_weights(1, [(0,)], cfg)

    def test_rejects_wrong_m(self):
        """m must equal the number of earlier samples"""
        theta = single_node_theta([1.0, 0.0])
        cfg = HerdingConfig(theta, moments_zero(theta.graph, LabelSpace(2)), 3)
        with pytest.raises(ValidationError):
            diverse_objective_weights(2, [(0,)], cfg)


class TestReconstructionError:
    """Rate-weighted moment mismatch"""

    def _spec(self):
        mu = single_node_theta([0.5, 0.5])
        return mu, MomentSpec(mu, 1.0, 0.0)

    def test_single_sample(self):
        """mu=(0.5,0.5), samples {(0)} -> 0.5"""
        mu, spec = self._spec()
        assert reconstruction_error(mu, [(0,)], spec) == pytest.approx(0.5)

    def test_balanced_samples(self):
        """samples {(0),(1)} -> 0"""
        mu, spec = self._spec()
        assert reconstruction_error(mu, [(0,), (1,)], spec) == 0.0

    def test_empty(self):
        """No samples is an error"""
        mu, spec = self._spec()
        with pytest.raises(ValidationError):
            reconstruction_error(mu, [], spec)

    def test_trace_matches_recomputation(self):
        """error_trace[m] equals reconstruction_error over the first m+1 samples"""
        rng = np.random.default_rng(17)
        graph = CrfGraph.grid(2, 2)
        theta = random_theta(graph, 3, rng)
        spec = moments_from_samples(graph, LabelSpace(3), random_labelings(4, 3, 6, seed=2), 2.0, 0.5)
        hyps = herding_run(HerdingConfig(theta, spec, 12, BRUTEFORCE))
        for m in range(12):
            expected = reconstruction_error(spec.mu, hyps.samples[:m + 1], spec)
            assert hyps.error_trace[m] == pytest.approx(expected, abs=1e-12)
        mean = mean_stats(graph, 3, PairwiseLayout.POTTS, hyps.samples)
        np.testing.assert_allclose(hyps.running_mean_stats.unary, mean.unary, atol=1e-12)

    def test_condition_holds_in_polytope(self):
        """Exact MAP and mu inside the polytope: the condition holds at every iteration"""
        rng = np.random.default_rng(23)
        graph = CrfGraph.grid(3, 2)
        theta = random_theta(graph, 3, rng)
        spec = moments_from_samples(graph, LabelSpace(3), random_labelings(6, 3, 5, seed=7), 1.0, 1.0)
        hyps = herding_run(HerdingConfig(theta, spec, 30, BRUTEFORCE))
        assert all(hyps.condition_trace)

    def test_condition_covers_unupdated_blocks(self):
        """eta_p = 0 still checks the pairwise blocks: every entry holds for polytope mu"""
        rng = np.random.default_rng(31)
        graph = CrfGraph.grid(3, 2)
        failures = 0
        for seed in range(30):
            theta = random_theta(graph, 3, rng, scale=2.0)
            mu = mean_stats(graph, 3, PairwiseLayout.POTTS, random_labelings(6, 3, 5, seed=seed))
            hyps = herding_run(HerdingConfig(theta, MomentSpec(mu, 1.0, 0.0), 30, BRUTEFORCE))
            failures += hyps.condition_trace.count(False)
        assert failures == 0


class TestAttractor:
    """divMbest drives unary marginals toward the uniform distribution"""

    @pytest.mark.parametrize("lam", [1.0, 2.0, 5.0])
    def test_equiprobable_marginals(self, lam):
        """Unary-only instances, M = 500: marginals within 0.05 of 1/L"""
        rng = np.random.default_rng(int(lam * 10))
        theta = unary_only_theta(3, 3, rng)
        hyps = divmbest_run(theta, lam, 500)
        marginals = mean_unary_marginals(hyps.samples, 3)
        assert np.all(np.abs(marginals - 1.0 / 3.0) < 0.05)

    def test_small_example(self):
        """N=3, L=3, lambda=2, M=300"""
        theta = unary_only_theta(3, 3, np.random.default_rng(1))
        marginals = mean_unary_marginals(divmbest_run(theta, 2.0, 300).samples, 3)
        np.testing.assert_allclose(marginals, np.full((3, 3), 1.0 / 3.0), atol=0.05)

    def test_error_approaches_residual(self):
        """With norm normalization the error settles at eta_u * N / L"""
        theta = unary_only_theta(2, 2, np.random.default_rng(2))
        spec = with_normalization(moments_zero(theta.graph, LabelSpace(2), eta_unary=1.0))
        cfg = HerdingConfig(theta, spec, 400, BRUTEFORCE)
        hyps = herding_run(cfg)
        assert attractor_residual(spec) == pytest.approx(1.0)
        assert plateau_gap(hyps.error_trace, attractor_residual(spec)) < 0.05
        assert hyps.final_theta.norm() <= cfg.effective_norm_cap() + 1e-12

    def test_marginal_validation(self):
        """Labels outside the space are rejected"""
        with pytest.raises(ValidationError):
            mean_unary_marginals([(0, 3)], 3)


class TestConvergence:
    """Error-trace diagnostics"""

    def test_exact_hit(self):
        """mu = mean of two reachable labelings: the error reaches 0 at M = 2"""
        graph = CrfGraph.chain(3)
        spec = moments_from_samples(graph, LabelSpace(2), [(0, 0, 0), (1, 1, 1)])
        hyps = herding_run(HerdingConfig(StatVector.zeros(graph, 2), spec, 4, BRUTEFORCE))
        assert hyps.samples[1].assignment == (1, 1, 1)
        assert first_exact_hit(hyps.error_trace) == 2

    def test_no_hit(self):
        """A trace that never drops below tol gives None"""
        assert first_exact_hit([1.0, 0.5, 0.25]) is None

    def test_envelope_windows(self):
        """Windows [M, 2M) for M = 2, 4 on a trace of length 8"""
        values = [8, 7, 6, 5, 4, 3, 2, 1]
        assert windowed_envelope(values, start=2) == [(2, 7.0), (4, 5.0)]

    def test_slope_of_inverse(self):
        """1/M has slope -1"""
        ms = np.array([16, 32, 64, 128])
        assert fit_loglog_slope(ms, 1.0 / ms).slope == pytest.approx(-1.0)

    def test_slope_needs_points(self):
        """Fewer than two positive points cannot be fitted"""
        with pytest.raises(ValidationError):
            fit_loglog_slope([16, 32], [0.0, 0.1])

    def test_distances(self):
        """Distances are square roots of the squared-error trace"""
        np.testing.assert_allclose(error_distances([4.0, 0.25]), [2.0, 0.5])

    @pytest.mark.slow
    def test_inverse_m_rate(self):
        """Five 4x4 grids, L=3, mu inside the polytope: log-log slope in [-1.3, -0.7]"""
        for seed in range(5):
            rng = np.random.default_rng(seed)
            graph = CrfGraph.grid(4, 4)
            theta = random_theta(graph, 3, rng)
            spec = moments_from_samples(graph, LabelSpace(3), random_labelings(16, 3, 10, seed=seed + 50))
            hyps = herding_run(HerdingConfig(theta, spec, 1024, ELIMINATION))
            report = analyze_convergence(hyps, spec)
            assert report.fit is not None
            assert -1.3 <= report.fit.slope <= -0.7
            assert report.residual == pytest.approx(0.0, abs=1e-12)


class TestRecords:
    """JSON Lines output"""

    def test_one_line_per_sample(self):
        """M samples give M lines carrying m, labeling and diagnostics"""
        hyps = divmbest_run(single_node_theta([1.0, 0.0]), 1.0, 4, BRUTEFORCE)
        buffer = io.StringIO()
        assert write_jsonl(hyps, buffer) == 4
        buffer.seek(0)
        records = read_jsonl(buffer)
        assert [r["m"] for r in records] == [1, 2, 3, 4]
        assert records[0]["labeling"] == [0]
        assert records[0]["energy"] == 1.0
        assert set(records[0]) == {"m", "labeling", "energy", "error", "condition", "inference_converged"}
        assert not math.isnan(records[-1]["error"])
