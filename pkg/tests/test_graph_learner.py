import json

import numpy as np
import pytest

from errors import ShapeError
from forecaster import sage_step
from graph_learner import (LinkPredictorParams, dump_graphs, edge_probabilities, gumbel_sample, harden, pair_count,
                           readout_support, smoothness_at, window_noise)
from model import TimeGNN
from oracles import relative_error, sage_step_loop, theta_loop
from tensor import Tensor, backward, mul, numeric_gradient, parameter, total


def random_link(rng, d, d_link=None):
    params = LinkPredictorParams.init(rng, d, d_link)
    for t in params.named().values():
        t.values[...] = rng.standard_normal(t.shape)
    return params


def upper_theta(rng, size, batch=()):
    theta = np.zeros(batch + (size, size))
    iu, ju = np.triu_indices(size, k=1)
    theta[..., iu, ju] = rng.uniform(0.05, 0.95, size=batch + (len(iu),))
    return theta


class TestEdgeProbabilities:
    def test_two_nodes_one_pair(self, rng):
        theta = edge_probabilities(rng.standard_normal((2, 3)), random_link(rng, 3)).values
        assert theta[0, 1] > 0
        assert theta[0, 0] == theta[1, 0] == theta[1, 1] == 0

    def test_zero_everything_gives_half(self):
        params = LinkPredictorParams.init(np.random.default_rng(0), 3)
        for t in params.named().values():
            t.values[...] = 0
        theta = edge_probabilities(np.zeros((5, 3)), params).values
        np.testing.assert_array_equal(theta, np.triu(np.full((5, 5), 0.5), k=1))

    def test_matches_pair_loop(self, rng):
        params = random_link(rng, 3, 5)
        z = rng.standard_normal((4, 3))
        p = {k.split('.')[1]: t.values for k, t in params.named().items()}
        np.testing.assert_allclose(edge_probabilities(z, params).values, theta_loop(z, p), atol=1e-10)

    def test_needs_two_nodes(self, rng):
        with pytest.raises(ShapeError):
            edge_probabilities(rng.standard_normal((1, 3)), random_link(rng, 3))

    def test_width_mismatch(self, rng):
        with pytest.raises(ShapeError):
            edge_probabilities(rng.standard_normal((4, 2)), random_link(rng, 3))


class TestGumbel:
    @pytest.mark.parametrize('theta', [0.1, 0.5, 0.9])
    def test_hard_fraction_matches_theta(self, theta):
        n = 10_000
        probs = np.zeros((n, 2, 2))
        probs[:, 0, 1] = theta
        a = gumbel_sample(probs, 0.01, np.random.default_rng(42)).values[:, 0, 1]
        assert abs((a > 0.5).mean() - theta) <= 3 * np.sqrt(theta * (1 - theta) / n)

    def test_fraction_at_point_eight(self):
        probs = np.zeros((10_000, 2, 2))
        probs[:, 0, 1] = 0.8
        a = gumbel_sample(probs, 0.01, np.random.default_rng(7)).values[:, 0, 1]
        assert 0.78 <= (a > 0.5).mean() <= 0.82

    def test_symmetric_at_half(self):
        probs = np.zeros((10_000, 2, 2))
        probs[:, 0, 1] = 0.5
        a = gumbel_sample(probs, 1.0, np.random.default_rng(3)).values[:, 0, 1]
        assert abs(np.median(a) - 0.5) < 0.02

    def test_variance_shrinks_with_smoothness(self):
        n = 10_000
        probs = np.zeros((n, 2, 2))
        probs[:, 0, 1] = 0.5
        previous = None
        for i, s in enumerate([0.1, 0.3, 1.0, 3.0, 10.0]):
            a = gumbel_sample(probs, s, np.random.default_rng(100 + i)).values[:, 0, 1]
            dev = (a - a.mean()) ** 2
            var, se = dev.mean(), dev.std() / np.sqrt(n)
            if previous is not None:
                assert var <= previous[0] + 2 * np.hypot(se, previous[1])
            previous = var, se

    def test_gradient_with_frozen_noise(self, rng):
        theta = parameter(upper_theta(rng, 5))
        noise = rng.logistic(size=pair_count(5))
        weights = Tensor(rng.standard_normal((5, 5)))

        def loss():
            return total(mul(gumbel_sample(theta, 0.5, noise=noise), weights))

        backward(loss())
        numeric = numeric_gradient(lambda: loss().item(), theta)
        assert relative_error(theta.grad, numeric) < 1e-5

    @pytest.mark.parametrize('s', [0.0, -1.0])
    def test_smoothness_must_be_positive(self, rng, s):
        with pytest.raises(ValueError):
            gumbel_sample(upper_theta(rng, 3), s, rng)


class TestHarden:
    def test_tie_is_not_an_edge(self):
        assert not harden(np.triu(np.full((4, 4), 0.5), k=1)).any()

    def test_threshold(self):
        theta = np.zeros((3, 3))
        theta[0, 1], theta[0, 2] = 0.9, 0.1
        hard = harden(theta)
        assert list(zip(*np.nonzero(hard))) == [(0, 1)]

    def test_idempotent(self, rng):
        theta = upper_theta(rng, 6)
        np.testing.assert_array_equal(harden(harden(theta)), harden(theta))


def test_structure_over_random_windows():
    rng = np.random.default_rng(2024)
    params = random_link(rng, 3)
    weight = Tensor(rng.standard_normal((3, 3)))
    bias = Tensor(rng.standard_normal(3))
    for _ in range(1000):
        tau = int(rng.integers(2, 97))
        z = rng.standard_normal((tau, 3))
        theta = edge_probabilities(z, params).values
        relaxed = gumbel_sample(theta, 0.3, rng).values
        hard = harden(theta)
        lower = np.tril_indices(tau)
        for matrix in (theta, relaxed, hard):
            assert not matrix[lower].any()
        assert set(np.unique(hard)) <= {0.0, 1.0}
        out = sage_step(z, Tensor(hard), weight, bias).values
        np.testing.assert_allclose(out, sage_step_loop(z, hard, weight.values, bias.values), atol=1e-10)


def test_window_noise_depends_only_on_start():
    forward = window_noise(5, 2, [10, 3, 7], 6)
    backward_order = window_noise(5, 2, [7, 3, 10], 6)
    np.testing.assert_array_equal(forward[0], backward_order[2])
    np.testing.assert_array_equal(forward[1], backward_order[1])
    assert not np.array_equal(window_noise(5, 3, [10], 6), forward[:1])


def test_smoothness_schedule():
    assert smoothness_at(0.3, None, 4, 10) == 0.3
    assert smoothness_at(1.0, 0.1, 0, 10) == 1.0
    assert smoothness_at(1.0, 0.1, 9, 10) == pytest.approx(0.1)


def test_readout_support():
    adjacency = np.zeros((5, 5))
    adjacency[0, 2] = adjacency[2, 4] = 1
    assert readout_support(adjacency, 1) == {2, 4}
    assert readout_support(adjacency, 2) == {0, 2, 4}
    assert readout_support(np.zeros((5, 5)), 3) == {4}


def test_dump_graphs(tmp_path):
    path = tmp_path / 'graphs.json'
    records = [{'window_index': 0, 'edges': [[0, 1, 0.7, 1.0]]}]
    dump_graphs(records, str(path))
    assert json.loads(path.read_text()) == records


class TestGraphLearner:
    def windows(self, rng, config, n=3):
        return rng.standard_normal((n, config.window, 2))

    def test_training_graph_is_relaxed(self, rng, tiny_config):
        model = TimeGNN(tiny_config, 2)
        z = model.extractor(self.windows(rng, tiny_config))
        graph = model.graph_learner(z, np.arange(3), epoch=0, train=True)
        a = graph.adjacency.values
        assert graph.mode == 'relaxed-train'
        assert graph.adjacency.requires_grad
        assert not a[:, np.tril_indices(8)[0], np.tril_indices(8)[1]].any()
        iu = np.triu_indices(8, k=1)
        assert ((a[:, iu[0], iu[1]] > 0) & (a[:, iu[0], iu[1]] < 1)).all()

    def test_eval_graph_is_hard(self, rng, tiny_config):
        model = TimeGNN(tiny_config, 2)
        z = model.extractor(self.windows(rng, tiny_config))
        graph = model.graph_learner(z, np.arange(3), train=False)
        assert graph.mode == 'hard-eval'
        np.testing.assert_array_equal(graph.adjacency.values, harden(graph.theta))
        assert len(graph.edges(1)) == pair_count(8)

    def test_sampled_eval(self, rng, tiny_config):
        model = TimeGNN(tiny_config.replace(sample_eval=True), 2)
        z = model.extractor(self.windows(rng, tiny_config))
        assert model.graph_learner(z, np.arange(3), train=False).mode == 'sampled-eval'

    def test_noise_independent_of_batch_composition(self, rng, tiny_config):
        model = TimeGNN(tiny_config, 2)
        windows = self.windows(rng, tiny_config)
        starts = np.array([4, 9, 1])
        a = model.graph_learner(model.extractor(windows), starts, epoch=1).adjacency.values
        order = [2, 0, 1]
        b = model.graph_learner(model.extractor(windows[order]), starts[order], epoch=1).adjacency.values
        np.testing.assert_allclose(a[order], b, atol=1e-12)
