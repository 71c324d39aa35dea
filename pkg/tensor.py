"""Dense tensors with reverse-mode differentiation.

Only the operations the forecasting graph needs are provided. Every op takes
optional leading batch axes, so one tape can carry a whole batch of windows.
"""
import numpy as np

from errors import ShapeError, TimeGNNError
from settings import SIGMOID_CLAMP, LOG_EPS, NORM_EPS


class TapeNode:
    __slots__ = 'op', 'inputs', 'backward_fn'

    def __init__(self, op, inputs, backward_fn):
        self.op = op
        self.inputs = inputs
        # grad_output -> one gradient (or None) per input
        self.backward_fn = backward_fn

    def __repr__(self):
        return f'TapeNode({self.op}, inputs={len(self.inputs)})'


class Tensor:
    def __init__(self, values, requires_grad=False, dtype=None, node=None):
        values = np.asarray(values)
        if dtype is None:
            dtype = values.dtype if np.issubdtype(values.dtype, np.floating) else np.float64
        # 0-d losses stay 0-d
        self.values = np.require(values, dtype=dtype, requirements=['C'])
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.values) if requires_grad else None
        self.node = node

    @property
    def shape(self):
        return self.values.shape

    @property
    def ndim(self):
        return self.values.ndim

    @property
    def dtype(self):
        return self.values.dtype

    def item(self):
        return float(self.values.item())

    def zero_grad(self):
        if self.grad is not None:
            self.grad.fill(0)

    def backward(self):
        backward(self)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        flag = ', requires_grad=True' if self.requires_grad else ''
        return f'Tensor(shape={self.shape}, dtype={self.dtype}{flag})'


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def parameter(values, dtype=None):
    return Tensor(values, requires_grad=True, dtype=dtype)


def uniform_parameter(rng, shape, fan_in, dtype=np.float64):
    bound = 1 / np.sqrt(fan_in)
    return parameter(rng.uniform(-bound, bound, size=shape), dtype=dtype)


def zeros_parameter(shape, dtype=np.float64):
    return parameter(np.zeros(shape), dtype=dtype)


def _result(values, op, inputs, backward_fn):
    requires_grad = any(t.requires_grad for t in inputs)
    node = TapeNode(op, inputs, backward_fn) if requires_grad else None
    return Tensor(values, requires_grad=requires_grad, dtype=values.dtype, node=node)


def _same_shape(op, a, b):
    if a.shape != b.shape:
        raise ShapeError(op, 'shape', a.shape, b.shape)


def _sum_to(grad, shape):
    # reduce leading batch axes a 2-D weight was broadcast over
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    return grad


# elementwise

def add(a, b):
    _same_shape('add', a, b)
    return _result(a.values + b.values, 'add', (a, b), lambda g: (g, g))


def sub(a, b):
    _same_shape('sub', a, b)
    return _result(a.values - b.values, 'sub', (a, b), lambda g: (g, -g))


def mul(a, b):
    _same_shape('mul', a, b)
    return _result(a.values * b.values, 'mul', (a, b),
                   lambda g: (g * b.values, g * a.values))


def scale(a, c):
    c = float(c)
    return _result(a.values * a.dtype.type(c), 'scale', (a,), lambda g: (g * c,))


def sigmoid(a):
    x = np.clip(a.values, -SIGMOID_CLAMP, SIGMOID_CLAMP)
    e = np.exp(-np.abs(x))
    y = np.where(x >= 0, 1 / (1 + e), e / (1 + e))
    return _result(y, 'sigmoid', (a,), lambda g: (g * y * (1 - y),))


def relu(a):
    mask = a.values > 0
    return _result(a.values * mask, 'relu', (a,), lambda g: (g * mask,))


def log(a):
    x = np.maximum(a.values, LOG_EPS)
    live = a.values >= LOG_EPS
    return _result(np.log(x), 'log', (a,), lambda g: (g / x * live,))


def absolute(a):
    sign = np.sign(a.values)
    return _result(np.abs(a.values), 'abs', (a,), lambda g: (g * sign,))


def clip(a, low, high):
    inside = (a.values >= low) & (a.values <= high)
    return _result(np.clip(a.values, low, high), 'clip', (a,), lambda g: (g * inside,))


_ELEMENTWISE = {
    'sigmoid': sigmoid,
    'relu': relu,
    'add': add,
    'sub': sub,
    'mul': mul,
    'scale': scale,
    'log': log,
    'abs': absolute,
}


def elementwise(op, *args):
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f'elementwise: unknown op {op!r}') from None
    return fn(*args)


# reductions

def total(a):
    shape = a.shape
    return _result(np.asarray(a.values.sum(), dtype=a.dtype), 'sum', (a,),
                   lambda g: (np.broadcast_to(g, shape).copy(),))


def mean(a):
    shape, n = a.shape, a.values.size
    return _result(np.asarray(a.values.mean(), dtype=a.dtype), 'mean', (a,),
                   lambda g: (np.broadcast_to(g / n, shape).copy(),))


# linear algebra

def matmul(a, b):
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError('matmul', 'rank', '>= 2', (a.ndim, b.ndim))
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError('matmul', 'inner dimension', a.shape[-1], b.shape[-2])
    if b.ndim > 2 and b.shape[:-2] != a.shape[:-2]:
        raise ShapeError('matmul', 'batch axes', a.shape[:-2], b.shape[:-2])
    b_shape = b.shape

    def backward_fn(g):
        ga = g @ np.swapaxes(b.values, -1, -2) if a.requires_grad else None
        gb = None
        if b.requires_grad:
            gb = _sum_to(np.swapaxes(a.values, -1, -2) @ g, b_shape)
        return ga, gb

    return _result(a.values @ b.values, 'matmul', (a, b), backward_fn)


def add_bias(x, b):
    n = x.shape[-1]
    if b.shape != (n,):
        raise ShapeError('add_bias', 'bias length', n, b.shape)
    return _result(x.values + b.values, 'add_bias', (x, b),
                   lambda g: (g, g.reshape(-1, n).sum(axis=0)))


def linear(x, weight, bias):
    return add_bias(matmul(x, weight), bias)


def conv1d(x, kernel, bias, dilation=1, padding='same'):
    """Dilated 1-D convolution over the time axis of x (..., tau, c_in).

    kernel is (k, c_in, c_out); out[t] = bias + sum_j x[t + (j - left/dilation) * dilation] @ kernel[j]
    with zeros outside the window, so the output keeps length tau.
    """
    if kernel.ndim != 3:
        raise ShapeError('conv1d', 'kernel rank', 3, kernel.ndim)
    k, c_in, c_out = kernel.shape
    if x.ndim < 2 or x.shape[-1] != c_in:
        raise ShapeError('conv1d', 'input channels', c_in, x.shape[-1] if x.ndim else None)
    if bias.shape != (c_out,):
        raise ShapeError('conv1d', 'bias length', c_out, bias.shape)
    if k < 1 or dilation < 1:
        raise ValueError(f'conv1d: kernel size {k} and dilation {dilation} must be >= 1')
    if padding == 'same':
        left = (k // 2) * dilation
    elif padding == 'causal':
        left = (k - 1) * dilation
    else:
        raise ValueError(f'conv1d: unknown padding {padding!r}')
    right = (k - 1) * dilation - left
    tau = x.shape[-2]

    widths = [(0, 0)] * (x.ndim - 2) + [(left, right), (0, 0)]
    padded = np.pad(x.values, widths)
    cols = np.concatenate([padded[..., j * dilation:j * dilation + tau, :] for j in range(k)], axis=-1)
    flat = kernel.values.reshape(k * c_in, c_out)
    out = cols @ flat + bias.values

    def backward_fn(g):
        gx = gk = None
        if x.requires_grad:
            gcols = g @ flat.T
            gpad = np.zeros_like(padded)
            for j in range(k):
                gpad[..., j * dilation:j * dilation + tau, :] += gcols[..., j * c_in:(j + 1) * c_in]
            gx = gpad[..., left:left + tau, :]
        if kernel.requires_grad:
            gk = _sum_to(np.swapaxes(cols, -1, -2) @ g, flat.shape).reshape(kernel.shape)
        gb = g.reshape(-1, c_out).sum(axis=0)
        return gx, gk, gb

    return _result(out, 'conv1d', (x, kernel, bias), backward_fn)


# structure

def concat_features(parts):
    if not parts:
        raise ValueError('concat_features: nothing to concatenate')
    lead = parts[0].shape[:-1]
    for p in parts[1:]:
        if p.shape[:-1] != lead:
            raise ShapeError('concat_features', 'leading extent', lead, p.shape[:-1])
    bounds = np.cumsum([p.shape[-1] for p in parts])[:-1]
    out = np.concatenate([p.values for p in parts], axis=-1)
    return _result(out, 'concat', tuple(parts), lambda g: tuple(np.split(g, bounds, axis=-1)))


def l2_normalize_rows(x):
    norm = np.sqrt((x.values * x.values).sum(axis=-1, keepdims=True))
    denom = np.maximum(norm, NORM_EPS)
    y = x.values / denom

    def backward_fn(g):
        radial = np.where(norm > NORM_EPS, y * (g * y).sum(axis=-1, keepdims=True), 0)
        return ((g - radial) / denom,)

    return _result(y, 'l2_normalize_rows', (x,), backward_fn)


def gather_rows(x, index):
    index = np.asarray(index, dtype=np.intp)
    shape = x.shape

    def backward_fn(g):
        gx = np.zeros(shape, dtype=g.dtype)
        np.add.at(np.moveaxis(gx, -2, 0), index, np.moveaxis(g, -2, 0))
        return (gx,)

    return _result(x.values[..., index, :], 'gather_rows', (x,), backward_fn)


def select_row(x, row):
    shape = x.shape

    def backward_fn(g):
        gx = np.zeros(shape, dtype=g.dtype)
        gx[..., row, :] = g
        return (gx,)

    return _result(x.values[..., row, :].copy(), 'select_row', (x,), backward_fn)


def scatter_upper(values, size):
    """Place a (..., size*(size-1)/2) pair vector on the strict upper triangle."""
    iu, ju = np.triu_indices(size, k=1)
    if values.shape[-1] != len(iu):
        raise ShapeError('scatter_upper', 'pair count', len(iu), values.shape[-1])
    out = np.zeros(values.shape[:-1] + (size, size), dtype=values.dtype)
    out[..., iu, ju] = values.values
    return _result(out, 'scatter_upper', (values,), lambda g: (g[..., iu, ju],))


def gather_upper(x):
    """Strict upper triangle of (..., size, size) as a row-major pair vector."""
    size = x.shape[-1]
    if x.ndim < 2 or x.shape[-2] != size:
        raise ShapeError('gather_upper', 'square matrix', (size, size), x.shape[-2:])
    iu, ju = np.triu_indices(size, k=1)
    shape = x.shape

    def backward_fn(g):
        gx = np.zeros(shape, dtype=g.dtype)
        gx[..., iu, ju] = g
        return (gx,)

    return _result(x.values[..., iu, ju], 'gather_upper', (x,), backward_fn)


def reshape(x, shape):
    old = x.shape
    return _result(x.values.reshape(shape), 'reshape', (x,), lambda g: (g.reshape(old),))


def mean_aggregate(h, adjacency):
    """Weighted mean of each node with its predecessors.

    out[u] = (h[u] + sum_i A[i, u] h[i]) / (1 + sum_i A[i, u])
    """
    tau = h.shape[-2]
    if adjacency.shape[-2:] != (tau, tau):
        raise ShapeError('mean_aggregate', 'adjacency', (tau, tau), adjacency.shape[-2:])
    if adjacency.shape[:-2] != h.shape[:-2]:
        raise ShapeError('mean_aggregate', 'batch axes', h.shape[:-2], adjacency.shape[:-2])
    a = adjacency.values
    degree = 1 + a.sum(axis=-2)[..., None]
    out = (h.values + np.swapaxes(a, -1, -2) @ h.values) / degree

    def backward_fn(g):
        gn = g / degree
        gh = gn + a @ gn
        ga = None
        if adjacency.requires_grad:
            gdeg = -(gn * out).sum(axis=-1)
            ga = h.values @ np.swapaxes(gn, -1, -2) + gdeg[..., None, :]
        return gh, ga

    return _result(out, 'mean_aggregate', (h, adjacency), backward_fn)


# tape

def _topological(root):
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        t, finished = stack.pop()
        if finished:
            order.append(t)
            continue
        if id(t) in visited:
            continue
        visited.add(id(t))
        stack.append((t, True))
        if t.node is not None:
            for parent in t.node.inputs:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
    return order


def backward(loss):
    if loss.values.size != 1:
        raise ShapeError('backward', 'loss size', 1, loss.values.size)
    if not loss.requires_grad:
        raise TimeGNNError('backward: loss is not connected to any parameter')
    pending = {id(loss): np.ones_like(loss.values)}
    for t in reversed(_topological(loss)):
        g = pending.pop(id(t), None)
        if g is None:
            continue
        t.grad += g
        if t.node is None:
            continue
        for parent, pg in zip(t.node.inputs, t.node.backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            pending[key] = pending[key] + pg if key in pending else pg


def zero_grad(tensors):
    for t in tensors:
        t.zero_grad()


def numeric_gradient(fn, tensor, step=1e-5):
    """Central finite differences of scalar fn() with respect to tensor's values."""
    grad = np.zeros_like(tensor.values, dtype=np.float64)
    flat = tensor.values.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        plus = float(fn())
        flat[i] = keep - step
        minus = float(fn())
        flat[i] = keep
        out[i] = (plus - minus) / (2 * step)
    return grad
