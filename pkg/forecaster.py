from dataclasses import dataclass, field

import numpy as np

from errors import ShapeError
from settings import GNN_ACTIVATION
from tensor import (Tensor, as_tensor, l2_normalize_rows, linear, mean_aggregate, relu, reshape, select_row,
                    sigmoid, uniform_parameter, zeros_parameter)

ACTIVATIONS = {
    'relu': relu,
    'sigmoid': sigmoid,
    'linear': lambda x: x,
}


@dataclass
class SageParams:
    weights: list = field(default_factory=list)  # P matrices, d x d
    biases: list = field(default_factory=list)
    out_w1: Tensor = None  # d x d_out_hidden
    out_b1: Tensor = None
    out_w2: Tensor = None  # d_out_hidden x (m or h*m)
    out_b2: Tensor = None

    @classmethod
    def init(cls, rng, d, out_dim, steps, out_hidden=None, dtype=np.float64):
        out_hidden = out_hidden or d
        return cls(
            weights=[uniform_parameter(rng, (d, d), d, dtype) for _ in range(steps)],
            biases=[zeros_parameter(d, dtype) for _ in range(steps)],
            out_w1=uniform_parameter(rng, (d, out_hidden), d, dtype), out_b1=zeros_parameter(out_hidden, dtype),
            out_w2=uniform_parameter(rng, (out_hidden, out_dim), out_hidden, dtype),
            out_b2=zeros_parameter(out_dim, dtype),
        )

    @property
    def steps(self):
        return len(self.weights)

    def named(self, prefix='sage'):
        named = {}
        for p, (w, b) in enumerate(zip(self.weights, self.biases), start=1):
            named[f'{prefix}.w{p}'] = w
            named[f'{prefix}.b{p}'] = b
        named.update({f'{prefix}.out_w1': self.out_w1, f'{prefix}.out_b1': self.out_b1,
                      f'{prefix}.out_w2': self.out_w2, f'{prefix}.out_b2': self.out_b2})
        return named


def _adjacency(graph):
    return graph.adjacency if hasattr(graph, 'adjacency') else as_tensor(graph)


def sage_step(h, graph, weight, bias, activation=GNN_ACTIVATION):
    """One mean-aggregation step: act(W . mean({h_u} + {A[i, u] h_i : i < u}) + b)."""
    h = as_tensor(h)
    if weight.shape[0] != h.shape[-1]:
        raise ShapeError('sage_step', 'feature width', weight.shape[0], h.shape[-1])
    return ACTIVATIONS[activation](linear(mean_aggregate(h, _adjacency(graph)), weight, bias))


def node_states(z, graph, params, activation=GNN_ACTIVATION):
    states = [as_tensor(z)]
    for weight, bias in zip(params.weights, params.biases):
        states.append(sage_step(states[-1], graph, weight, bias, activation))
    return states


def forecast(z, graph, params, activation=GNN_ACTIVATION, horizon=None):
    """Forecast from the normalized last-node embedding.

    Returns (..., m), or (..., horizon, m) when horizon is given (multi-step mode).
    """
    if params.steps < 1:
        raise ValueError('forecast needs at least one message-passing step')
    final = l2_normalize_rows(node_states(z, graph, params, activation)[-1])
    lead = final.shape[:-2]
    # a single unbatched window still reads out as a 1 x d matrix
    readout = reshape(select_row(final, -1), lead + (1, final.shape[-1]))
    out = linear(relu(linear(readout, params.out_w1, params.out_b1)), params.out_w2, params.out_b2)
    width = out.shape[-1]
    if horizon is None:
        return reshape(out, lead + (width,))
    return reshape(out, lead + (horizon, width // horizon))


class Forecaster:
    def __init__(self, model):
        self.model = model
        config = model.config
        self.horizon = config.horizon if config.mode == 'multi-step' else None
        out_dim = model.m * (self.horizon or 1)
        self.params = SageParams.init(model.rng, config.hidden_dim, out_dim, config.gnn_steps,
                                      config.out_width, model.dtype)
        self.activation = config.gnn_activation
        model.register(self.params.named())

    def __call__(self, z, graph):
        return forecast(z, graph, self.params, self.activation, self.horizon)
