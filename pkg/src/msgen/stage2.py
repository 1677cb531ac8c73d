"""Stage two: a conditional VAE that adds detail to the stage-one output.

The encoder sees only the residual x - y. The decoder's input is y; the
detail code z reaches it solely through AdaIN layers whose scale and shift
come from a FiLM generator, so z can rescale and shift hidden statistics but
cannot replace the content carried by y.
"""

from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .distributions import GaussianParams, diag_gaussian_kl, gaussian_logpdf, reparam_sample
from .errors import ShapeError
from .nn import EPS_NORM, MLP, Dense, FiLMGenerator, Module, adain
from .stage1 import _flat, produce_y
from .training import fit


@dataclass
class Stage2Config:
    z_dim: int = 5
    epochs: int = 20
    batch: int = 64
    lr: float = 1e-3
    seed: int = 0
    sigma_x: float = 0.1
    slab_s: int = 16
    channels: int = 16
    n_layers: int = 2
    hidden: int = 256


class Stage2Model(Module):
    _children = ("encoder", "layers", "film", "head")

    def __init__(self, n_pixels, z_dim=5, sigma_x=0.1, slab_s=16, channels=16,
                 n_layers=2, hidden=256, seed=0):
        rng = np.random.default_rng(seed)
        self.n_pixels, self.z_dim, self.sigma_x = n_pixels, z_dim, sigma_x
        self.slab_s, self.channels, self.n_layers, self.hidden = slab_s, channels, n_layers, hidden
        width = channels * slab_s
        self.encoder = MLP([n_pixels, hidden, hidden, 2 * z_dim], rng)
        self.layers = [Dense(n_pixels if i == 0 else width, width, rng) for i in range(n_layers)]
        self.film = FiLMGenerator(z_dim, channels, n_layers, rng)
        self.head = Dense(width, n_pixels, rng)

    _META = ("n_pixels", "z_dim", "sigma_x", "slab_s", "channels", "n_layers", "hidden")

    def to_entries(self):
        meta = {f"meta.{k}": np.float32(getattr(self, k)) for k in self._META}
        return {**meta, **self.state_dict()}

    @classmethod
    def from_entries(cls, entries):
        kw = {k: entries[f"meta.{k}"].item() for k in cls._META}
        ints = {k: int(v) for k, v in kw.items() if k != "sigma_x"}
        m = cls(sigma_x=float(kw["sigma_x"]), **ints)
        m.load_state_dict(entries)
        return m


def encode_residual(m, x, y):
    x, y = T.as_tensor(x), T.as_tensor(y)
    if x.shape != y.shape:
        raise ShapeError(f"x {x.shape} and y {y.shape} must match")
    return GaussianParams.from_output(m.encoder(x - y))


def refine(m, y, z):
    """Decoder mean over pixels given the coarse image y and detail code z."""
    y, z = T.as_tensor(y), T.as_tensor(z)
    n = y.shape[0]
    film = m.film(z)
    h = y
    for layer, (gamma, beta) in zip(m.layers, film):
        a = layer(h).reshape(n, m.channels, m.slab_s)
        h = T.relu(adain(a, gamma, beta, EPS_NORM)).reshape(n, m.channels * m.slab_s)
    return T.sigmoid(m.head(h))


def stage2_loss(m, x, y, noise):
    """Negative term (b) of the two-stage bound, averaged over the batch."""
    x, y = T.as_tensor(x), T.as_tensor(y)
    q = encode_residual(m, x, y)
    z = reparam_sample(q, noise)
    mean = refine(m, y, z)
    lv = np.full(x.shape, 2 * np.log(m.sigma_x))
    recon = gaussian_logpdf(x, GaussianParams(mean, T.Tensor(lv))).mean()
    kl = diag_gaussian_kl(q).mean()
    return {"recon": recon, "kl": kl, "total": kl - recon}


def train_stage2(config, dataset, stage1, log=None, y=None):
    """Fit stage two on (x, y) pairs with y produced by the frozen stage-one model."""
    x = _flat(dataset)
    if y is None:
        y = produce_y(stage1, x)
    m = Stage2Model(x.shape[1], config.z_dim, config.sigma_x, config.slab_s, config.channels,
                    config.n_layers, config.hidden, config.seed)
    rng = np.random.default_rng(config.seed + 1)

    def loss_fn(idx, rng):
        noise = rng.standard_normal((len(idx), m.z_dim))
        out = stage2_loss(m, x[idx], y[idx], noise)
        return out["total"], {k: v.item() for k, v in out.items()}

    m.history = fit(m, loss_fn, len(x), config.epochs, config.batch, config.lr, rng, log)
    m.config = asdict(config)
    return m


def posterior_mean(m, x, y, batch=1024):
    x, y = _flat(x), _flat(y)
    return np.concatenate([encode_residual(m, x[s:s + batch], y[s:s + batch]).mean.data
                           for s in range(0, len(x), batch)], axis=0)


def refine_batched(m, y, z, batch=1024):
    y = _flat(y)
    z = np.asarray(z, dtype=np.float32)
    return np.concatenate([refine(m, y[s:s + batch], z[s:s + batch]).data
                           for s in range(0, len(y), batch)], axis=0)


def reconstruct(stage1, stage2, x):
    """(y, x_hat): the stage-one reconstruction and its refinement."""
    x = _flat(x)
    y = produce_y(stage1, x)
    z = posterior_mean(stage2, x, y)
    return y, refine_batched(stage2, y, z)
