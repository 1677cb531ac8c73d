"""Damped pendulum simulator and the three-step hierarchy L -> y0, (B, y0) -> y1,
(z, y1) -> theta with a one-dimensional detail code z."""

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .distributions import GaussianParams, diag_gaussian_kl, gaussian_logpdf, reparam_sample
from .errors import ContractError, DomainError, ShapeError
from .io import load_tensor, save_tensor
from .nn import MLP, Module
from .training import fit

G = 9.81
THETA0 = np.pi / 3
OMEGA0 = 0.0
DT = 1e-3
HORIZON = 10.0
N_STEPS = 100


@dataclass(frozen=True)
class PendulumParams:
    L: float
    M: float
    B: float
    theta0: float = THETA0
    omega0: float = OMEGA0
    g: float = G
    dt: float = DT
    horizon: float = HORIZON
    T: int = N_STEPS

    def validate(self):
        if self.dt <= 0:
            raise DomainError(f"dt must be positive, got {self.dt}")
        if self.L <= 0 or self.M <= 0:
            raise DomainError(f"length and mass must be positive, got L={self.L}, M={self.M}")
        if self.B < 0:
            raise DomainError(f"damping must be non-negative, got {self.B}")
        if self.T <= 0 or self.horizon <= 0:
            raise DomainError("horizon and sample count must be positive")
        return self


def wrap(theta):
    return (np.asarray(theta) + np.pi) % (2 * np.pi) - np.pi


def integrate(L, M, B, theta0=THETA0, omega0=OMEGA0, g=G, dt=DT, horizon=HORIZON, T=N_STEPS):
    """Batched RK4. Returns unwrapped (theta, omega), each [n, T], sampled at
    t = k * horizon / T for k = 0..T-1."""
    if dt <= 0:
        raise DomainError(f"dt must be positive, got {dt}")
    L, M, B = (np.atleast_1d(np.asarray(v, dtype=np.float64)) for v in (L, M, B))
    L, M, B = np.broadcast_arrays(L, M, B)
    if np.any(L <= 0) or np.any(M <= 0) or np.any(B < 0):
        raise DomainError("need L > 0, M > 0, B >= 0")
    stride = int(round(horizon / T / dt))
    if stride < 1 or not np.isclose(stride * dt * T, horizon):
        raise DomainError(f"horizon / T = {horizon / T} is not a whole number of steps of {dt}")
    damp, grav = B / M, g / L

    def accel(th, om):
        return -damp * om - grav * np.sin(th)

    th = np.full(L.shape, float(theta0))
    om = np.full(L.shape, float(omega0))
    thetas = np.empty(L.shape + (T,))
    omegas = np.empty(L.shape + (T,))
    for k in range(T):
        thetas[..., k], omegas[..., k] = th, om
        for _ in range(stride):
            k1t, k1o = om, accel(th, om)
            k2t, k2o = om + 0.5 * dt * k1o, accel(th + 0.5 * dt * k1t, om + 0.5 * dt * k1o)
            k3t, k3o = om + 0.5 * dt * k2o, accel(th + 0.5 * dt * k2t, om + 0.5 * dt * k2o)
            k4t, k4o = om + dt * k3o, accel(th + dt * k3t, om + dt * k3o)
            th = th + dt / 6 * (k1t + 2 * k2t + 2 * k3t + k4t)
            om = om + dt / 6 * (k1o + 2 * k2o + 2 * k3o + k4o)
    return thetas, omegas


def simulate(p):
    """Wrapped angle trajectory of length p.T for one parameter set."""
    p.validate()
    th, _ = integrate(p.L, p.M, p.B, p.theta0, p.omega0, p.g, p.dt, p.horizon, p.T)
    return wrap(th[0])


def energy(theta, omega, L, M, g=G):
    return 0.5 * M * L ** 2 * omega ** 2 + M * g * L * (1 - np.cos(theta))


@dataclass
class PendulumData:
    L: np.ndarray
    M: np.ndarray
    B: np.ndarray
    theta: np.ndarray
    y0: np.ndarray
    y1: np.ndarray

    def __len__(self):
        return len(self.L)

    def subset(self, idx):
        return PendulumData(*(np.asarray(getattr(self, k))[idx] for k in self.__dataclass_fields__))

    def split(self, frac=0.8):
        cut = int(round(frac * len(self)))
        return self.subset(slice(0, cut)), self.subset(slice(cut, None))

    def to_entries(self):
        return {k: np.asarray(getattr(self, k), dtype=np.float32) for k in self.__dataclass_fields__}

    @classmethod
    def from_entries(cls, entries):
        return cls(*(entries[k] for k in cls.__dataclass_fields__))


def sample_pendulum_dataset(n, seed=0):
    if n <= 0:
        raise DomainError(f"n must be positive, got {n}")
    rng = np.random.default_rng(seed)
    L = rng.uniform(1.0, 3.0, n)
    B = rng.uniform(0.1, 2.0, n)
    M = rng.uniform(0.1, 2.0, n)
    ones = np.ones(n)
    theta = wrap(integrate(L, M, B)[0])
    y0 = wrap(integrate(L, ones, np.zeros(n))[0])
    y1 = wrap(integrate(L, ones, B)[0])
    f32 = lambda a: a.astype(np.float32)  # noqa: E731
    return PendulumData(f32(L), f32(M), f32(B), f32(theta), f32(y0), f32(y1))


def save_pendulum_dataset(data, directory):
    """Trajectories as MSTN tensors, the (L, M, B) table as JSON."""
    os.makedirs(directory, exist_ok=True)
    for k in ("theta", "y0", "y1"):
        save_tensor(os.path.join(directory, f"{k}.mstn"), getattr(data, k))
    rows = [{"L": float(a), "M": float(m), "B": float(b)} for a, m, b in zip(data.L, data.M, data.B)]
    with open(os.path.join(directory, "factors.json"), "w") as fh:
        json.dump(rows, fh)


def load_pendulum_dataset(directory):
    with open(os.path.join(directory, "factors.json")) as fh:
        rows = json.load(fh)
    cols = {k: np.array([r[k] for r in rows], dtype=np.float32) for k in ("L", "M", "B")}
    trajs = {k: load_tensor(os.path.join(directory, f"{k}.mstn")) for k in ("theta", "y0", "y1")}
    return PendulumData(**cols, **trajs)


class CondGaussian(Module):
    """MLP mean with a learned scalar log-variance."""

    _children = ("net",)

    def __init__(self, n_in, n_out, hidden, rng):
        self.net = MLP([n_in, hidden, hidden, n_out], rng, activation="tanh")
        self.logvar = T.Tensor(np.zeros(1), requires_grad=True)

    def dist(self, inp):
        mean = self.net(inp)
        return GaussianParams(mean, T.Tensor(np.zeros(mean.shape, dtype=mean.data.dtype)) + self.logvar)

    def nll(self, inp, target):
        return -gaussian_logpdf(target, self.dist(inp)).mean()


class Vae3(Module):
    _children = ("encoder", "decoder")

    def __init__(self, T_len, hidden, rng):
        self.encoder = MLP([2 * T_len, hidden, hidden, 2], rng, activation="tanh")
        self.decoder = CondGaussian(1 + T_len, T_len, hidden, rng)

    def posterior(self, theta, y1):
        return GaussianParams.from_output(self.encoder(T.concat([T.as_tensor(theta), T.as_tensor(y1)], axis=1)))

    def decode(self, z, y1):
        return self.decoder.net(T.concat([T.as_tensor(z), T.as_tensor(y1)], axis=1))

    def loss(self, theta, y1, noise):
        q = self.posterior(theta, y1)
        z = reparam_sample(q, noise)
        inp = T.concat([z, T.as_tensor(y1)], axis=1)
        recon = gaussian_logpdf(theta, self.decoder.dist(inp)).mean()
        kl = diag_gaussian_kl(q).mean()
        return {"recon": recon, "kl": kl, "total": kl - recon}


@dataclass
class PendulumConfig:
    hidden: int = 64
    epochs1: int = 60
    epochs2: int = 60
    epochs3: int = 100
    batch: int = 64
    lr: float = 1e-3
    seed: int = 0


class PendulumHierarchy(Module):
    _children = ("net1", "net2", "vae3")

    def __init__(self, T_len=N_STEPS, hidden=64, seed=0):
        rng = np.random.default_rng(seed)
        self.T_len, self.hidden, self.seed = T_len, hidden, seed
        self.net1 = CondGaussian(1, T_len, hidden, rng)
        self.net2 = CondGaussian(1 + T_len, T_len, hidden, rng)
        self.vae3 = Vae3(T_len, hidden, rng)
        self.steps_done = set()
        self.medians = {"L": 2.0, "B": 1.05}

    def to_entries(self):
        meta = {"meta.T_len": np.float32(self.T_len), "meta.hidden": np.float32(self.hidden),
                "meta.seed": np.float32(self.seed), "meta.median_L": np.float32(self.medians["L"]),
                "meta.median_B": np.float32(self.medians["B"]),
                "meta.steps": np.array(sorted(self.steps_done), dtype=np.float32)}
        return {**meta, **self.state_dict()}

    @classmethod
    def from_entries(cls, entries):
        h = cls(int(entries["meta.T_len"].item()), int(entries["meta.hidden"].item()),
                int(entries["meta.seed"].item()))
        h.medians = {"L": float(entries["meta.median_L"].item()), "B": float(entries["meta.median_B"].item())}
        h.steps_done = {int(s) for s in np.ravel(entries["meta.steps"])}
        h.load_state_dict({k: v for k, v in entries.items() if not k.startswith("meta.")})
        return h


def _col(v):
    return np.asarray(v, dtype=np.float32).reshape(-1, 1)


def _fit_module(module, loss, n, epochs, config, offset, log, tag):
    rng = np.random.default_rng(config.seed + offset)

    def wrapped(idx, rng):
        total, terms = loss(idx, rng)
        return total, {"step": tag, **terms}

    return fit(module, wrapped, n, epochs, config.batch, config.lr, rng, log)


def train_step1(h, data, config, log=None):
    inp, tgt = _col(data.L), np.asarray(data.y0, dtype=np.float32)

    def loss(idx, rng):
        nll = h.net1.nll(inp[idx], tgt[idx])
        return nll, {"nll": nll.item()}

    h.history1 = _fit_module(h.net1, loss, len(data), config.epochs1, config, 11, log, 1)
    h.steps_done.add(1)
    h.medians["L"] = float(np.median(data.L))


def train_step2(h, data, config, log=None):
    inp = np.concatenate([_col(data.B), np.asarray(data.y0, dtype=np.float32)], axis=1)
    tgt = np.asarray(data.y1, dtype=np.float32)

    def loss(idx, rng):
        nll = h.net2.nll(inp[idx], tgt[idx])
        return nll, {"nll": nll.item()}

    h.history2 = _fit_module(h.net2, loss, len(data), config.epochs2, config, 22, log, 2)
    h.steps_done.add(2)
    h.medians["B"] = float(np.median(data.B))


def train_step3(h, data, config, log=None):
    if not {1, 2} <= h.steps_done:
        raise ContractError("step 3 needs steps 1 and 2 to have been trained first")
    theta = np.asarray(data.theta, dtype=np.float32)
    y1 = np.asarray(data.y1, dtype=np.float32)

    def loss(idx, rng):
        out = h.vae3.loss(theta[idx], y1[idx], rng.standard_normal((len(idx), 1)))
        return out["total"], {k: v.item() for k, v in out.items()}

    h.history3 = _fit_module(h.vae3, loss, len(data), config.epochs3, config, 33, log, 3)
    h.steps_done.add(3)


def train_hierarchy(config, data, log=None):
    h = PendulumHierarchy(np.asarray(data.theta).shape[1], config.hidden, config.seed)
    train_step1(h, data, config, log)
    train_step2(h, data, config, log)
    train_step3(h, data, config, log)
    h.config = asdict(config)
    return h


def posterior_z(h, data):
    return h.vae3.posterior(np.asarray(data.theta, dtype=np.float32),
                            np.asarray(data.y1, dtype=np.float32)).mean.data[:, 0]


def pearson(a, b):
    """(r, degenerate). A zero-variance input gives r = 0 with the flag set."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ShapeError("pearson needs equal-length inputs")
    a, b = a - a.mean(), b - b.mean()
    denom = np.sqrt(np.sum(a * a) * np.sum(b * b))
    if denom < 1e-12:
        return 0.0, True
    return float(np.sum(a * b) / denom), False


def z_mass_correlation(h, data, masses=None):
    if 3 not in h.steps_done:
        raise ContractError("hierarchy is not fully trained")
    if len(data) < 100:
        raise ContractError("need at least 100 rows for a stable correlation")
    return pearson(posterior_z(h, data), data.M if masses is None else masses)


def generate(h, L, B, z):
    """Means of y0, y1 and theta for given (L, B, z) columns."""
    y0 = h.net1.net(_col(L)).data
    y1 = h.net2.net(np.concatenate([_col(B), y0], axis=1)).data
    theta = h.vae3.decode(_col(z), y1).data
    return y0, y1, theta


def traverse(h, which, grid):
    """Sweep one of L, B or Z with the others at their medians (z at 0)."""
    grid = np.asarray(grid, dtype=np.float32).ravel()
    vals = {"L": h.medians["L"], "B": h.medians["B"], "Z": 0.0}
    if which not in vals:
        raise DomainError(f"which must be one of L, B, Z, got {which!r}")
    cols = {k: np.full(len(grid), v, dtype=np.float32) for k, v in vals.items()}
    cols[which] = grid
    y0, y1, theta = generate(h, cols["L"], cols["B"], cols["Z"])
    return {"y0": y0, "y1": y1, "theta": theta}


def dominant_period(traj, dt):
    """Mean spacing between sign changes, doubled; inf when there are fewer than two."""
    s = np.signbit(np.asarray(traj))
    idx = np.nonzero(s[1:] != s[:-1])[0]
    if len(idx) < 2:
        return np.inf
    return 2 * dt * float(np.mean(np.diff(idx)))
