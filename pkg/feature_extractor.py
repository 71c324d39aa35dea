from dataclasses import dataclass, fields

import numpy as np

from settings import BRANCHES, PADDING
from tensor import Tensor, as_tensor, concat_features, conv1d, linear, relu, uniform_parameter, zeros_parameter


@dataclass
class ExtractorParams:
    c0: Tensor  # 1 x m x d
    b0: Tensor
    c1: Tensor  # 1 x m x d
    b1: Tensor
    c2: Tensor  # 1 x m x d
    b2: Tensor
    c23: Tensor  # 3 x d x d, dilation 3
    b23: Tensor
    c25: Tensor  # 5 x d x d, dilation 5
    b25: Tensor
    fc_w: Tensor  # 3d x d
    fc_b: Tensor

    @classmethod
    def init(cls, rng, m, d, dtype=np.float64):
        k3, k5 = BRANCHES['f1'][0], BRANCHES['f2'][0]
        return cls(
            c0=uniform_parameter(rng, (1, m, d), m, dtype), b0=zeros_parameter(d, dtype),
            c1=uniform_parameter(rng, (1, m, d), m, dtype), b1=zeros_parameter(d, dtype),
            c2=uniform_parameter(rng, (1, m, d), m, dtype), b2=zeros_parameter(d, dtype),
            c23=uniform_parameter(rng, (k3, d, d), k3 * d, dtype), b23=zeros_parameter(d, dtype),
            c25=uniform_parameter(rng, (k5, d, d), k5 * d, dtype), b25=zeros_parameter(d, dtype),
            fc_w=uniform_parameter(rng, (3 * d, d), 3 * d, dtype), fc_b=zeros_parameter(d, dtype),
        )

    def named(self, prefix='extractor'):
        return {f'{prefix}.{f.name}': getattr(self, f.name) for f in fields(self)}


def branches(window, params, padding=PADDING):
    window = as_tensor(window)
    f0 = conv1d(window, params.c0, params.b0)
    dil1, dil2 = BRANCHES['f1'][1], BRANCHES['f2'][1]
    f1 = conv1d(conv1d(window, params.c1, params.b1), params.c23, params.b23, dilation=dil1, padding=padding)
    f2 = conv1d(conv1d(window, params.c2, params.b2), params.c25, params.b25, dilation=dil2, padding=padding)
    return f0, f1, f2


def extract(window, params, padding=PADDING, fusion_relu=False):
    """(..., tau, m) window -> (..., tau, d) node features, one node per timestep."""
    z = linear(concat_features(list(branches(window, params, padding))), params.fc_w, params.fc_b)
    return relu(z) if fusion_relu else z


def receptive_field(branch):
    try:
        stacked = BRANCHES[branch]
    except KeyError:
        raise ValueError(f'unknown branch {branch!r}, expected one of {sorted(BRANCHES)}') from None
    if stacked is None:
        return 1
    kernel, dilation = stacked
    return 1 + (kernel - 1) * dilation


class FeatureExtractor:
    def __init__(self, model):
        self.model = model
        config = model.config
        self.params = ExtractorParams.init(model.rng, model.m, config.hidden_dim, model.dtype)
        self.padding = config.padding
        self.fusion_relu = config.fusion_relu
        model.register(self.params.named())

    def __call__(self, windows):
        return extract(windows, self.params, self.padding, self.fusion_relu)
