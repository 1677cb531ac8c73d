"""Dense layers, AdaIN with a FiLM parameter generator, and Adam."""

import numpy as np

from . import tensor as T
from .errors import NumericError, ShapeError
from .tensor import Tensor

EPS_NORM = 1e-5

ACTIVATIONS = {
    "relu": T.relu,
    "tanh": T.tanh,
    "softplus": T.softplus,
    "sigmoid": T.sigmoid,
    None: lambda x: x,
}


class Module:
    """Parameter container; subclasses list child modules in ``_children``."""

    _children = ()

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
        for child in self._children:
            module = getattr(self, child)
            items = module if isinstance(module, (list, tuple)) else [module]
            for i, m in enumerate(items):
                tag = f"{child}.{i}." if isinstance(module, (list, tuple)) else f"{child}."
                yield from m.named_parameters(prefix + tag)

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        for name, p in params.items():
            value = np.asarray(state[name], dtype=p.dtype)
            if value.shape != p.shape:
                raise ShapeError(f"{name}: expected {p.shape}, got {value.shape}")
            p.data = T._freeze(value.copy())

    def astype(self, dtype):
        for _, p in self.named_parameters():
            p.data = T._freeze(p.data.astype(dtype))
        return self


class Dense(Module):
    """y = x W^T + b with W stored as [out x in]."""

    def __init__(self, n_in, n_out, rng, zero=False):
        bound = 1.0 / np.sqrt(n_in)
        if zero:
            w = np.zeros((n_out, n_in))
        else:
            w = rng.uniform(-bound, bound, size=(n_out, n_in))
        self.W = Tensor(w, requires_grad=True)
        self.b = Tensor(np.zeros(n_out), requires_grad=True)

    def __call__(self, x):
        return T.matmul(x, T.transpose(self.W)) + self.b


class MLP(Module):
    _children = ("layers",)

    def __init__(self, sizes, rng, activation="relu", zero_last=False):
        self.layers = [
            Dense(a, b, rng, zero=zero_last and i == len(sizes) - 2)
            for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]))
        ]
        self.activation = activation

    def __call__(self, x):
        act = ACTIVATIONS[self.activation]
        for layer in self.layers[:-1]:
            x = act(layer(x))
        return self.layers[-1](x)


def instance_stats(y, eps=EPS_NORM):
    """Per-(n, c) mean and sqrt(var + eps) over the spatial axis of y[N, C, S]."""
    if y.ndim != 3:
        raise ShapeError(f"instance_stats expects [N, C, S], got {y.shape}")
    mu = y.mean(axis=2, keepdims=True)
    var = T.square(y - mu).mean(axis=2, keepdims=True)
    sigma = T.sqrt(var + eps)
    return mu.reshape(y.shape[:2]), sigma.reshape(y.shape[:2])


def adain(y, gamma, beta, eps=EPS_NORM):
    """gamma * (y - mu(y)) / sigma(y) + beta, per instance and channel."""
    n, c, _ = y.shape
    for name, p in (("gamma", gamma), ("beta", beta)):
        if tuple(p.shape) != (n, c):
            raise ShapeError(f"{name} must be {(n, c)}, got {p.shape}")
    if eps == 0:
        mu = y.mean(axis=2, keepdims=True)
        centered = y - mu
        sigma = T.sqrt(T.square(centered).mean(axis=2, keepdims=True))
    else:
        mu, sigma = instance_stats(y, eps)
        mu, sigma = mu.reshape(n, c, 1), sigma.reshape(n, c, 1)
        centered = y - mu
    return T.as_tensor(gamma).reshape(n, c, 1) * (centered / sigma) + T.as_tensor(beta).reshape(n, c, 1)


class FiLMGenerator(Module):
    """MLP from z to one (gamma, beta) pair per modulated layer.

    The output layer starts at zero and gamma is parameterized as 1 + raw, so a
    fresh generator yields gamma = 1 and beta = 0 for every z.
    """

    _children = ("net",)

    def __init__(self, z_dim, channels, n_layers, rng, hidden=64):
        self.channels = channels
        self.n_layers = n_layers
        self.net = MLP([z_dim, hidden, 2 * channels * n_layers], rng, zero_last=True)

    def __call__(self, z):
        raw = self.net(z)
        c = self.channels
        out = []
        for i in range(self.n_layers):
            base = 2 * c * i
            out.append((1.0 + raw[:, base:base + c], raw[:, base + c:base + 2 * c]))
        return out


def film_modulate(y, z, gen, eps=EPS_NORM, layer=0):
    gamma, beta = gen(z)[layer]
    if gamma.shape[1] != y.shape[1]:
        raise ShapeError(f"generator emits {gamma.shape[1]} channels, activations have {y.shape[1]}")
    return adain(y, gamma, beta, eps)


class Adam:
    """Bias-corrected Adam over a fixed list of parameter tensors."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.step_count = 0

    def step(self, grads):
        if len(grads) != len(self.params):
            raise ShapeError("one gradient per parameter is required")
        for g in grads:
            if not np.isfinite(g).all():
                raise NumericError("non-finite gradient passed to Adam")
        self.step_count += 1
        t = self.step_count
        c1 = 1 - self.beta1 ** t
        c2 = 1 - self.beta2 ** t
        for i, (p, g) in enumerate(zip(self.params, grads)):
            if g.shape != p.shape:
                raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            update = self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps)
            p.data = T._freeze((p.data - update).astype(p.dtype))


def adam_step(params, grads, state):
    """Functional wrapper: apply one Adam update held in ``state``."""
    state.step(grads)
    return params, state
