# adam with bias correction, plus global-norm gradient clipping
import numpy as np

from errors import TrainingError
from settings import ADAM_EPS, BETA1, BETA2, LEARNING_RATE


class OptimizerState:
    def __init__(self, lr=LEARNING_RATE, beta1=BETA1, beta2=BETA2, eps=ADAM_EPS):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        # first / second moment buffers keyed by parameter name
        self.m = {}
        self.v = {}
        self.step = 0

    def to_dict(self):
        return {'step': self.step, 'm': {k: v.copy() for k, v in self.m.items()},
                'v': {k: v.copy() for k, v in self.v.items()}}

    def load(self, d):
        self.step = d['step']
        self.m = {k: v.copy() for k, v in d['m'].items()}
        self.v = {k: v.copy() for k, v in d['v'].items()}
        return self


def adam_step(params, grads, opt):
    """params: name -> ndarray (updated in place); grads: name -> ndarray."""
    missing = [name for name in params if grads.get(name) is None]
    if missing:
        raise TrainingError(f'adam_step: no gradient for parameter {missing[0]}')
    opt.step += 1
    bc1 = 1.0 - opt.beta1 ** opt.step
    bc2 = 1.0 - opt.beta2 ** opt.step
    for name, p in params.items():
        g = grads[name]
        if name not in opt.m:
            opt.m[name] = np.zeros_like(p)
            opt.v[name] = np.zeros_like(p)
        m, v = opt.m[name], opt.v[name]
        m *= opt.beta1
        m += (1.0 - opt.beta1) * g
        v *= opt.beta2
        v += (1.0 - opt.beta2) * (g * g)
        p -= opt.lr * (m / bc1) / (np.sqrt(v / bc2) + opt.eps)


class Adam:
    def __init__(self, named, lr=LEARNING_RATE, beta1=BETA1, beta2=BETA2, eps=ADAM_EPS):
        self.named = named
        self.state = OptimizerState(lr, beta1, beta2, eps)

    def step(self):
        params = {name: t.values for name, t in self.named.items()}
        grads = {name: t.grad for name, t in self.named.items()}
        adam_step(params, grads, self.state)

    def zero_grad(self):
        for t in self.named.values():
            t.zero_grad()


def global_grad_norm(named):
    return float(np.sqrt(sum(float((t.grad.astype(np.float64) ** 2).sum()) for t in named.values())))


def clip_grad_norm(named, max_norm):
    """Scales every gradient so the global norm is at most max_norm; returns the norm before clipping."""
    norm = global_grad_norm(named)
    if not np.isfinite(norm):
        bad = next(name for name, t in named.items() if not np.isfinite(t.grad).all())
        raise TrainingError(f'non-finite gradient in {bad}')
    if max_norm is not None and norm > max_norm:
        factor = max_norm / (norm + 1e-12)
        for t in named.values():
            t.grad *= factor
    return norm
