import json
import logging
from collections import deque
from dataclasses import dataclass, fields

import numpy as np

from errors import ShapeError
from settings import THETA_EPS
from tensor import (Tensor, as_tensor, clip, concat_features, gather_rows, gather_upper, linear, log,
                    relu, reshape, scale, scatter_upper, sigmoid, sub, uniform_parameter, zeros_parameter)

logger = logging.getLogger(__name__)


@dataclass
class LinkPredictorParams:
    w1: Tensor  # 2d x d_link
    b1: Tensor
    w2: Tensor  # d_link x 1
    b2: Tensor

    @classmethod
    def init(cls, rng, d, d_link=None, dtype=np.float64):
        d_link = d_link or d
        return cls(
            w1=uniform_parameter(rng, (2 * d, d_link), 2 * d, dtype), b1=zeros_parameter(d_link, dtype),
            w2=uniform_parameter(rng, (d_link, 1), d_link, dtype), b2=zeros_parameter(1, dtype),
        )

    def named(self, prefix='link'):
        return {f'{prefix}.{f.name}': getattr(self, f.name) for f in fields(self)}


@dataclass
class TemporalGraph:
    theta: np.ndarray  # (..., tau, tau), zero on and below the diagonal
    adjacency: Tensor
    smoothness: float
    mode: str  # 'relaxed-train' | 'hard-eval' | 'sampled-eval'

    @property
    def size(self):
        return self.theta.shape[-1]

    def edges(self, window=0):
        """[[i, j, theta, a], ...] for every upper pair of one window."""
        square = (-1, self.size, self.size)
        theta = self.theta.reshape(square)[window]
        adj = self.adjacency.values.reshape(square)[window]
        iu, ju = np.triu_indices(self.size, k=1)
        return [[int(i), int(j), float(theta[i, j]), float(adj[i, j])] for i, j in zip(iu, ju)]


def pair_count(tau):
    return tau * (tau - 1) // 2


def _check_nodes(z):
    if z.ndim < 2:
        raise ShapeError('edge_probabilities', 'rank', '>= 2', z.ndim)
    if z.shape[-2] < 2:
        raise ShapeError('edge_probabilities', 'nodes', '>= 2', z.shape[-2])


def pair_scores(z, params):
    """Pre-sigmoid link score for every pair i < j, row-major over the upper triangle."""
    z = as_tensor(z)
    _check_nodes(z)
    if params.w1.shape[0] != 2 * z.shape[-1]:
        raise ShapeError('edge_probabilities', 'link input width', params.w1.shape[0], 2 * z.shape[-1])
    iu, ju = np.triu_indices(z.shape[-2], k=1)
    pairs = concat_features([gather_rows(z, iu), gather_rows(z, ju)])
    hidden = relu(linear(pairs, params.w1, params.b1))
    score = linear(hidden, params.w2, params.b2)
    return reshape(score, score.shape[:-1])


def edge_probabilities(z, params):
    z = as_tensor(z)
    return scatter_upper(sigmoid(pair_scores(z, params)), z.shape[-2])


def gumbel_noise(rng, shape, dtype=np.float64):
    # g1 - g2 with g1, g2 iid Gumbel(0, 1); the difference is Logistic(0, 1)
    return (rng.gumbel(size=shape) - rng.gumbel(size=shape)).astype(dtype)


def _check_smoothness(s):
    if not s > 0:
        raise ValueError(f'smoothness must be > 0, got {s}')


def relax(logits, s, noise, size):
    """sigmoid((logit + g1 - g2) / s) on the pair vector, scattered to (..., size, size)."""
    _check_smoothness(s)
    noisy = logits + Tensor(noise, dtype=logits.dtype)
    return scatter_upper(sigmoid(scale(noisy, 1 / s)), size)


def gumbel_sample(theta, s, rng=None, noise=None):
    """Relaxed Bernoulli sample of every upper edge of theta (..., tau, tau).

    noise, when given, freezes g1 - g2 (one value per upper pair).
    """
    _check_smoothness(s)
    theta = as_tensor(theta)
    size = theta.shape[-1]
    probs = clip(gather_upper(theta), THETA_EPS, 1 - THETA_EPS)
    one = Tensor(np.ones(probs.shape), dtype=probs.dtype)
    logits = sub(log(probs), log(sub(one, probs)))
    if noise is None:
        noise = gumbel_noise(rng if rng is not None else np.random.default_rng(), probs.shape)
    return relax(logits, s, noise, size)


def report_theta(logits, size):
    """theta = sigmoid(score) on the upper support, clamped to [eps, 1 - eps]; zero elsewhere."""
    iu, ju = np.triu_indices(size, k=1)
    theta = np.zeros(logits.shape[:-1] + (size, size), dtype=logits.dtype)
    theta[..., iu, ju] = np.clip(sigmoid(Tensor(logits)).values, THETA_EPS, 1 - THETA_EPS)
    return theta


def harden(theta):
    theta = theta.values if isinstance(theta, Tensor) else np.asarray(theta)
    return np.triu(theta > 0.5, k=1).astype(theta.dtype)


def window_noise(seed, epoch, starts, pairs, dtype=np.float64):
    """One independent noise stream per window, keyed by (seed, epoch, window start)."""
    rows = [gumbel_noise(np.random.default_rng([seed, epoch, int(s)]), pairs) for s in starts]
    return np.stack(rows).astype(dtype)


def smoothness_at(s, s_end, epoch, epochs):
    if s_end is None or epochs <= 1:
        return s
    return s + (s_end - s) * epoch / (epochs - 1)


def get_graph(adjacency):
    # node -> predecessors sending into it
    graph = {}
    for i, j in zip(*np.nonzero(adjacency > 0)):
        graph.setdefault(int(j), []).append(int(i))
    return graph


def readout_support(adjacency, steps):
    """Timesteps whose features can reach the last node within `steps` message-passing hops."""
    adjacency = np.asarray(adjacency)
    graph = get_graph(adjacency)
    goal = adjacency.shape[-1] - 1
    queue = deque([goal])
    visited = {goal: 0}
    while queue:
        cur_node = queue.popleft()
        if visited[cur_node] == steps:
            continue
        for next_node in graph.get(cur_node, []):
            if next_node not in visited:
                visited[next_node] = visited[cur_node] + 1
                queue.append(next_node)
    return set(visited)


def dump_graphs(records, path):
    with open(path, 'w') as f:
        json.dump(records, f)
    logger.info('wrote %d graphs to %s', len(records), path)


class GraphLearner:
    def __init__(self, model):
        self.model = model
        config = model.config
        self.params = LinkPredictorParams.init(model.rng, config.hidden_dim, config.link_width, model.dtype)
        model.register(self.params.named())

    def __call__(self, z, starts=None, epoch=0, smoothness=None, train=True):
        config = self.model.config
        s = smoothness or config.smoothness
        logits = pair_scores(z, self.params)
        theta = report_theta(logits.values, z.shape[-2])
        if train or config.sample_eval:
            noise = window_noise(config.seed, epoch, starts, logits.shape[-1], logits.dtype).reshape(logits.shape)
            adjacency = relax(logits, s, noise, z.shape[-2])
            mode = 'relaxed-train' if train else 'sampled-eval'
        else:
            adjacency = Tensor(harden(theta))
            mode = 'hard-eval'
        return TemporalGraph(theta, adjacency, s, mode)
