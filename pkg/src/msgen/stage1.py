"""Stage one: a beta-TCVAE mapping images to independent factors C and back.

The decoder's Bernoulli means, evaluated at the posterior mean code, are the
low-detail reconstructions Y handed to stage two.
"""

from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .distributions import (
    LOG_2PI,
    GaussianParams,
    bernoulli_logpmf,
    diag_gaussian_kl,
    gaussian_logpdf,
    reparam_sample,
)
from .errors import ContractError
from .nn import MLP, Module
from .tensor import Tensor
from .training import fit


@dataclass
class Stage1Config:
    beta: float = 4.0
    c_dim: int = 10
    epochs: int = 20
    batch: int = 64
    lr: float = 1e-3
    seed: int = 0
    hidden: int = 256
    estimator: str = "mss"


class Stage1Model(Module):
    _children = ("encoder", "decoder")

    def __init__(self, n_pixels, c_dim=10, beta=4.0, hidden=256, seed=0):
        rng = np.random.default_rng(seed)
        self.n_pixels, self.c_dim, self.beta, self.hidden = n_pixels, c_dim, beta, hidden
        self.encoder = MLP([n_pixels, hidden, hidden, 2 * c_dim], rng)
        self.decoder = MLP([c_dim, hidden, hidden, n_pixels], rng)

    def to_entries(self):
        meta = {"meta.n_pixels": self.n_pixels, "meta.c_dim": self.c_dim,
                "meta.beta": self.beta, "meta.hidden": self.hidden}
        return {**{k: np.float32(v) for k, v in meta.items()}, **self.state_dict()}

    @classmethod
    def from_entries(cls, entries):
        m = cls(int(entries["meta.n_pixels"]), int(entries["meta.c_dim"]),
                float(entries["meta.beta"]), int(entries["meta.hidden"]))
        m.load_state_dict(entries)
        return m


def encode(m, x):
    return GaussianParams.from_output(m.encoder(T.as_tensor(x)))


def decode(m, c):
    return m.decoder(T.as_tensor(c))


def _log_importance_weights(batch, dataset_size, estimator):
    """log W[i, j] used to estimate log q(c_i) = logsumexp_j log q(c_i|x_j) + log W[i, j]."""
    if estimator == "mws":
        return np.full((batch, batch), -np.log(dataset_size * batch))
    if estimator != "mss":
        raise ValueError(f"unknown estimator {estimator!r}")
    if dataset_size < batch:
        raise ContractError("dataset_size must be at least the batch size")
    m = batch - 1
    w = np.full((batch, batch), 1.0 / m)
    np.fill_diagonal(w, 1.0 / dataset_size)
    idx = np.arange(batch)
    w[idx, (idx + 1) % batch] = (dataset_size - m) / (dataset_size * m)
    return np.log(w)


def tcvae_terms(q, c, dataset_size, estimator="mss"):
    """Estimates of log q(c|x), log q(c), log prod_d q(c_d) and log p(c) per row."""
    b, d = q.mean.shape
    if b < 2:
        raise ContractError("the total-correlation estimator needs a batch of at least 2")
    log_w = T.Tensor(_log_importance_weights(b, dataset_size, estimator))
    ci = c.reshape(b, 1, d)
    mu = q.mean.reshape(1, b, d)
    lv = q.logvar.reshape(1, b, d)
    pair = -0.5 * (LOG_2PI + lv + T.square(ci - mu) * T.exp(-lv))  # [i, j, d]
    log_qc = T.logsumexp(pair.sum(axis=2) + log_w, axis=1)
    log_qc_prod = T.logsumexp(pair + log_w.reshape(b, b, 1), axis=1).sum(axis=1)
    zero = GaussianParams(T.Tensor(np.zeros((b, d))), T.Tensor(np.zeros((b, d))))
    return gaussian_logpdf(c, q), log_qc, log_qc_prod, gaussian_logpdf(c, zero)


def tcvae_loss(m, batch, dataset_size, noise=None, rng=None, beta=None, estimator="mss"):
    """Decomposed beta-TCVAE objective for one minibatch.

    Returns a dict with recon, mi_term, tc_term, dwkl_term and total, where
    total = -recon + mi + beta * tc + dwkl (all batch means).
    """
    x = T.as_tensor(batch)
    if x.shape[0] < 2:
        raise ContractError("tcvae_loss needs a batch of at least 2")
    beta = m.beta if beta is None else beta
    q = encode(m, x)
    if noise is None:
        noise = (rng or np.random.default_rng()).standard_normal(q.mean.shape)
    c = reparam_sample(q, noise)
    recon = bernoulli_logpmf(x, decode(m, c)).mean()
    log_qc_x, log_qc, log_qc_prod, log_pc = tcvae_terms(q, c, dataset_size, estimator)
    mi = (log_qc_x - log_qc).mean()
    tc = (log_qc - log_qc_prod).mean()
    dwkl = (log_qc_prod - log_pc).mean()
    total = -recon + mi + beta * tc + dwkl
    return {"recon": recon, "mi_term": mi, "tc_term": tc, "dwkl_term": dwkl, "total": total}


def elbo(m, x, rng):
    """Single-sample ELBO per row, averaged."""
    x = T.as_tensor(x)
    q = encode(m, x)
    c = reparam_sample(q, rng.standard_normal(q.mean.shape))
    return float((bernoulli_logpmf(x, decode(m, c)) - diag_gaussian_kl(q)).mean().item())


def train_stage1(config, dataset, log=None):
    """Fit a Stage1Model to ``dataset`` (an array [N, P] or SynthDataset)."""
    x = _flat(dataset)
    m = Stage1Model(x.shape[1], config.c_dim, config.beta, config.hidden, config.seed)
    rng = np.random.default_rng(config.seed + 1)
    n = len(x)

    def loss_fn(idx, rng):
        out = tcvae_loss(m, x[idx], n, rng=rng, estimator=config.estimator)
        terms = {k: out[k].item() for k in ("recon", "mi_term", "tc_term", "dwkl_term", "total")}
        return out["total"], terms

    m.history = fit(m, loss_fn, n, config.epochs, config.batch, config.lr, rng, log)
    m.config = asdict(config)
    return m


def produce_y(m, dataset, batch=1024):
    """Decoded Bernoulli means at the posterior mean code."""
    x = _flat(dataset)
    out = []
    for start in range(0, len(x), batch):
        q = encode(m, x[start:start + batch])
        out.append(T.sigmoid(decode(m, q.mean)).data)
    return np.concatenate(out, axis=0)


def encode_mean(m, x, batch=1024):
    x = _flat(x)
    return np.concatenate([encode(m, x[s:s + batch]).mean.data for s in range(0, len(x), batch)], axis=0)


def _flat(dataset):
    if hasattr(dataset, "images"):
        return dataset.flat
    if isinstance(dataset, Tensor):
        dataset = dataset.data
    arr = np.asarray(dataset, dtype=np.float32)
    return arr.reshape(arr.shape[0], -1)
