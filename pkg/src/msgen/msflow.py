"""Tractable two-stage model: a Gaussian mixture for the coarse image and a
conditional affine coupling flow for the detailed image given it."""

from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .distributions import GMM, LOG_2PI, gmm_em_fit, gmm_logpdf, gmm_map_mean, gmm_responsibilities
from .errors import ShapeError
from .nn import MLP, Module
from .training import fit


class CouplingLayer(Module):
    """x_b <- x_b * exp(s(x_a, y)) + t(x_a, y), with x_a passed through."""

    _children = ("s_net", "t_net")

    def __init__(self, d, y_dim, flip, hidden, scale_cap, rng):
        half = d // 2
        self.d, self.flip, self.scale_cap = d, flip, scale_cap
        # unflipped: a = [0, half), b = [half, d)
        self.a = slice(half, d) if flip else slice(0, half)
        self.b = slice(0, half) if flip else slice(half, d)
        n_a = d - half if flip else half
        n_b = d - n_a
        self.s_net = MLP([n_a + y_dim, hidden, n_b], rng, zero_last=True)
        self.t_net = MLP([n_a + y_dim, hidden, n_b], rng, zero_last=True)

    def _scale_shift(self, xa, y):
        inp = T.concat([xa, y], axis=1)
        s = self.scale_cap * T.tanh(self.s_net(inp))
        return s, self.t_net(inp)

    def _join(self, xa, xb):
        return T.concat([xb, xa] if self.flip else [xa, xb], axis=1)

    def forward(self, x, y):
        xa, xb = x[:, self.a], x[:, self.b]
        s, t = self._scale_shift(xa, y)
        return self._join(xa, xb * T.exp(s) + t), s.sum(axis=1)

    def inverse(self, u, y):
        ua, ub = u[:, self.a], u[:, self.b]
        s, t = self._scale_shift(ua, y)
        return self._join(ua, (ub - t) * T.exp(-s))


class ConditionalFlow(Module):
    _children = ("layers",)

    def __init__(self, d, y_dim, n_layers=6, hidden=128, scale_cap=3.0, seed=0):
        rng = np.random.default_rng(seed)
        self.d, self.y_dim, self.n_layers, self.hidden, self.scale_cap = d, y_dim, n_layers, hidden, scale_cap
        self.layers = [CouplingLayer(d, y_dim, i % 2 == 1, hidden, scale_cap, rng) for i in range(n_layers)]

    _META = ("d", "y_dim", "n_layers", "hidden", "scale_cap")

    def to_entries(self, prefix="flow."):
        meta = {f"{prefix}meta.{k}": np.float32(getattr(self, k)) for k in self._META}
        return {**meta, **{prefix + k: v for k, v in self.state_dict().items()}}

    @classmethod
    def from_entries(cls, entries, prefix="flow."):
        kw = {k: entries[f"{prefix}meta.{k}"].item() for k in cls._META}
        f = cls(int(kw["d"]), int(kw["y_dim"]), int(kw["n_layers"]), int(kw["hidden"]), float(kw["scale_cap"]))
        f.load_state_dict({k[len(prefix):]: v for k, v in entries.items() if k.startswith(prefix)})
        return f


def _check(f, x, y):
    if x.shape[1] != f.d or y.shape[1] != f.y_dim or x.shape[0] != y.shape[0]:
        raise ShapeError(f"flow expects x[N, {f.d}] and y[N, {f.y_dim}], got {x.shape} and {y.shape}")


def flow_forward(f, x, y):
    x, y = T.as_tensor(x), T.as_tensor(y)
    _check(f, x, y)
    logdet = None
    for layer in f.layers:
        x, ld = layer.forward(x, y)
        logdet = ld if logdet is None else logdet + ld
    if logdet is None:
        logdet = T.Tensor(np.zeros(x.shape[0]))
    return x, logdet


def flow_inverse(f, u, y):
    u, y = T.as_tensor(u), T.as_tensor(y)
    _check(f, u, y)
    for layer in reversed(f.layers):
        u = layer.inverse(u, y)
    return u


def flow_logpdf(f, x, y):
    u, logdet = flow_forward(f, x, y)
    return -0.5 * (f.d * LOG_2PI + T.square(u).sum(axis=1)) + logdet


@dataclass
class MSFlowConfig:
    k: int = 10
    n_layers: int = 6
    hidden: int = 128
    scale_cap: float = 3.0
    epochs: int = 10
    batch: int = 64
    lr: float = 1e-3
    seed: int = 0
    em_iters: int = 100


def train_msflow(config, dataset, log=None):
    """Fit the mixture by EM, then the flow by maximum conditional likelihood
    with y set to the mean of each point's most responsible component."""
    from .stage1 import _flat

    x = _flat(dataset)
    gmm = gmm_em_fit(x, config.k, config.em_iters, config.seed)
    y = gmm_map_mean(x, gmm).astype(np.float32)
    flow = ConditionalFlow(x.shape[1], x.shape[1], config.n_layers, config.hidden, config.scale_cap, config.seed)

    def loss_fn(idx, rng):
        nll = -flow_logpdf(flow, x[idx], y[idx]).mean()
        return nll, {"nll": nll.item()}

    rng = np.random.default_rng(config.seed + 1)
    flow.history = fit(flow, loss_fn, len(x), config.epochs, config.batch, config.lr, rng, log)
    flow.config = asdict(config)
    return gmm, flow


def evaluate(gmm, flow, x, batch=1024):
    """Mean held-out log densities: conditional flow, mixture alone, and the
    joint log p(x, y_map) = flow + log pi_map."""
    x = np.asarray(x, dtype=np.float32).reshape(len(x), -1)
    comp = np.argmax(gmm_responsibilities(x, gmm), axis=1)
    y = gmm.means[comp].astype(np.float32)
    flow_lp = np.concatenate([flow_logpdf(flow, x[s:s + batch], y[s:s + batch]).data
                              for s in range(0, len(x), batch)])
    return {
        "flow_logpdf": float(np.mean(flow_lp)),
        "gmm_logpdf": float(np.mean(gmm_logpdf(x, gmm))),
        "joint_logpdf": float(np.mean(flow_lp + np.log(gmm.weights[comp]))),
    }


def save_entries(gmm, flow):
    return {**{k: v.astype(np.float32) for k, v in gmm.to_entries().items()}, **flow.to_entries()}


def load_entries(entries):
    return GMM.from_entries(entries), ConditionalFlow.from_entries(entries)
