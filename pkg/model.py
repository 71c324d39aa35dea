import numpy as np

from checkpoint import ModelState
from errors import CheckpointError, DataError
from feature_extractor import FeatureExtractor
from forecaster import Forecaster
from graph_learner import GraphLearner


class TimeGNN:
    """Extractor -> graph learner -> forecaster over a batch of windows."""

    def __init__(self, config, channels, seed=None):
        self.config = config
        self.m = channels
        self.dtype = np.dtype(config.dtype)
        self.seed = config.seed if seed is None else seed
        self.rng = np.random.default_rng(self.seed)
        self.new_model()

    def new_model(self):
        self.params = {}
        self.extractor = FeatureExtractor(self)
        self.graph_learner = GraphLearner(self)
        self.forecaster = Forecaster(self)

    def register(self, named):
        for name, tensor in named.items():
            if name in self.params:
                raise ValueError(f'duplicate parameter name {name}')
            self.params[name] = tensor

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def check_inputs(self, windows):
        windows = np.asarray(windows)
        if windows.ndim != 3 or windows.shape[1:] != (self.config.window, self.m):
            raise DataError(f'expected windows of shape (B, {self.config.window}, {self.m}), got {windows.shape}')
        return windows.astype(self.dtype, copy=False)

    def forward(self, windows, starts=None, epoch=0, smoothness=None, train=True):
        windows = self.check_inputs(windows)
        if starts is None:
            starts = np.arange(len(windows))
        z = self.extractor(windows)
        graph = self.graph_learner(z, starts, epoch, smoothness, train)
        return self.forecaster(z, graph), graph

    def predict(self, windows, starts=None):
        pred, _ = self.forward(windows, starts, train=False)
        return pred.values

    # state

    def metadata(self):
        c = self.config
        return {
            'd': c.hidden_dim, 'tau': c.window, 'm': self.m, 'h': c.horizon, 'P': c.gnn_steps,
            's': c.smoothness, 'seed': self.seed, 'config_hash': c.config_hash(), 'config': c.model_dict(),
        }

    def state(self, scaler=None):
        params = {name: p.values.copy() for name, p in self.params.items()}
        meta = self.metadata()
        if scaler is not None:
            meta['scaler'] = scaler.to_dict()
        return ModelState(params, meta)

    def load_state(self, state):
        missing = sorted(set(self.params) - set(state.params))
        if missing:
            raise CheckpointError(f'checkpoint has no parameter {missing[0]}')
        for name, p in self.params.items():
            values = state.params[name]
            if values.shape != p.shape:
                raise CheckpointError(f'{name}: shape {values.shape} does not match model {p.shape}')
            p.values[...] = values
        return self
