"""Diagonal Gaussians, Bernoulli likelihood and a diagonal Gaussian mixture."""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp as np_logsumexp

from . import tensor as T
from .errors import ContractError, DomainError, ShapeError
from .tensor import Tensor

LOGVAR_MIN, LOGVAR_MAX = -10.0, 10.0
LOG_2PI = float(np.log(2 * np.pi))
VAR_FLOOR = 1e-6


@dataclass
class GaussianParams:
    mean: Tensor
    logvar: Tensor

    def __post_init__(self):
        self.mean = T.as_tensor(self.mean)
        self.logvar = T.clip(T.as_tensor(self.logvar), LOGVAR_MIN, LOGVAR_MAX)
        if self.mean.shape != self.logvar.shape:
            raise ShapeError(f"mean {self.mean.shape} vs logvar {self.logvar.shape}")

    @classmethod
    def from_output(cls, out):
        """Split an encoder output [N, 2d] into (mean, logvar)."""
        d = out.shape[1] // 2
        return cls(out[:, :d], out[:, d:])


def diag_gaussian_kl(q):
    """KL(q || N(0, I)) per row."""
    mu, lv = q.mean, q.logvar
    return 0.5 * (T.square(mu) + T.exp(lv) - 1.0 - lv).sum(axis=-1)


def reparam_sample(q, noise):
    noise = T.as_tensor(noise)
    if noise.shape != q.mean.shape:
        raise ShapeError(f"noise {noise.shape} must match mean {q.mean.shape}")
    return q.mean + T.exp(0.5 * q.logvar) * noise


def gaussian_logpdf(x, q):
    """Diagonal Gaussian log density summed over the last axis."""
    x = T.as_tensor(x)
    diff = x - q.mean
    return -0.5 * (LOG_2PI + q.logvar + T.square(diff) * T.exp(-q.logvar)).sum(axis=-1)


def bernoulli_logpmf(x, logits):
    """sum x log sigmoid(l) + (1 - x) log(1 - sigmoid(l)) over the last axis.

    Uses log sigmoid(l) = -softplus(-l) so large |l| stays finite.
    """
    x = T.as_tensor(x)
    logits = T.as_tensor(logits)
    if x.shape != logits.shape:
        raise ShapeError(f"x {x.shape} vs logits {logits.shape}")
    if np.any(x.data < 0) or np.any(x.data > 1):
        raise DomainError("Bernoulli targets must lie in [0, 1]")
    return -(x * T.softplus(-logits) + (1.0 - x) * T.softplus(logits)).sum(axis=-1)


# -- Gaussian mixture -------------------------------------------------------
@dataclass
class GMM:
    weights: np.ndarray  # [K]
    means: np.ndarray  # [K, d]
    vars: np.ndarray  # [K, d]

    @property
    def k(self):
        return self.weights.shape[0]

    def to_entries(self, prefix=""):
        return {prefix + "weights": self.weights, prefix + "means": self.means, prefix + "vars": self.vars}

    @classmethod
    def from_entries(cls, entries, prefix=""):
        return cls(
            np.asarray(entries[prefix + "weights"], dtype=np.float64),
            np.asarray(entries[prefix + "means"], dtype=np.float64),
            np.asarray(entries[prefix + "vars"], dtype=np.float64),
        )


def _component_logpdf(x, m):
    """log pi_k + log N(x; mu_k, var_k), shape [N, K]."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != m.means.shape[1]:
        raise ShapeError(f"data {x.shape} does not match mixture dim {m.means.shape[1]}")
    inv = 1.0 / m.vars
    quad = (x * x) @ inv.T - 2 * x @ (m.means * inv).T + np.sum(m.means ** 2 * inv, axis=1)
    log_norm = -0.5 * (x.shape[1] * LOG_2PI + np.sum(np.log(m.vars), axis=1))
    return np.log(m.weights) + log_norm - 0.5 * quad


def gmm_logpdf(x, m):
    return np_logsumexp(_component_logpdf(x, m), axis=1)


def gmm_responsibilities(x, m):
    lp = _component_logpdf(x, m)
    return np.exp(lp - np_logsumexp(lp, axis=1, keepdims=True))


def gmm_map_mean(x, m):
    """Mean of the most responsible component for each row."""
    return m.means[np.argmax(_component_logpdf(x, m), axis=1)]


def _kmeanspp(x, k, rng):
    centers = [x[rng.integers(len(x))]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(len(x))
        else:
            idx = rng.choice(len(x), p=d2 / total)
        centers.append(x[idx])
        d2 = np.minimum(d2, np.sum((x - x[idx]) ** 2, axis=1))
    return np.array(centers)


def gmm_em_fit(data, k, iters=100, seed=0, var_floor=VAR_FLOOR, tol=0.0, history=None):
    """Fit a diagonal GMM by EM from k-means++ seeds.

    ``history``, when a list, receives the mean log-likelihood of the data under
    the model produced by each M-step. A component that loses all its
    responsibility is re-seeded at the point worst explained by the mixture.
    """
    x = np.asarray(data.data if isinstance(data, Tensor) else data, dtype=np.float64)
    n, d = x.shape
    if n < k:
        raise ContractError(f"need at least K={k} points, got {n}")
    rng = np.random.default_rng(seed)
    centers = _kmeanspp(x, k, rng)
    global_var = np.maximum(x.var(axis=0), var_floor)
    m = GMM(np.full(k, 1.0 / k), centers, np.tile(global_var, (k, 1)))
    prev = -np.inf
    for _ in range(iters):
        lp = _component_logpdf(x, m)
        log_norm = np_logsumexp(lp, axis=1, keepdims=True)
        resp = np.exp(lp - log_norm)
        nk = resp.sum(axis=0)
        empty = nk < 1e-10
        if np.any(empty):
            worst = np.argsort(log_norm[:, 0])
            for j, comp in enumerate(np.flatnonzero(empty)):
                resp[:, comp] = 0.0
                resp[worst[j], :] = 0.0
                resp[worst[j], comp] = 1.0
            nk = resp.sum(axis=0)
        means = (resp.T @ x) / nk[:, None]
        var = np.empty_like(means)
        for j in range(k):
            var[j] = resp[:, j] @ (x - means[j]) ** 2 / nk[j]
        var = np.maximum(var, var_floor)
        m = GMM(nk / n, means, var)
        ll = float(np.mean(gmm_logpdf(x, m)))
        if history is not None:
            history.append(ll)
        if tol > 0 and ll - prev < tol:
            break
        prev = ll
    return m


def gmm_sample(m, n, rng):
    comp = rng.choice(m.k, size=n, p=m.weights)
    return m.means[comp] + np.sqrt(m.vars[comp]) * rng.standard_normal((n, m.means.shape[1])), comp
