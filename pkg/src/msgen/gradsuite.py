"""Finite-difference verification of every differentiable op and training loss."""

import numpy as np

from . import tensor as T
from .errors import ContractError

TOL = 1e-4
H = 1e-5


def _positive(rng, shape):
    return np.abs(rng.standard_normal(shape)) + 0.5


def _normal(rng, shape):
    return rng.standard_normal(shape)


def _unary(fn, sampler=_normal):
    def make(rng):
        return sampler(rng, (3, 4)), lambda x: fn(x)
    return make


def _with_other(fn, shape_x, shape_o, x_sampler=_normal, o_sampler=_normal, x_first=True):
    def make(rng):
        other = T.Tensor(o_sampler(rng, shape_o))
        f = (lambda x: fn(x, other)) if x_first else (lambda x: fn(other, x))
        return x_sampler(rng, shape_x), f
    return make


def _clip_make(rng):
    x = rng.uniform(-2, 2, (3, 4))
    x[np.abs(np.abs(x) - 1) < 1e-2] = 0.0  # keep away from the kinks
    return x, lambda t: T.clip(t, -1.0, 1.0)


def _take_make(rng):
    idx = rng.integers(0, 5, size=7)
    return rng.standard_normal((5, 3)), lambda t: T.take(t, idx)


def _getitem_make(rng):
    return rng.standard_normal((4, 5)), lambda t: t[1:3, ::2]


# name -> factory(rng) -> (point, f) with f mapping a Tensor to a Tensor
OPS = {
    "add": _with_other(T.add, (3, 4), (4,)),
    "add_rhs": _with_other(T.add, (4,), (3, 4), x_first=False),
    "sub": _with_other(T.sub, (3, 4), (3, 1)),
    "sub_rhs": _with_other(T.sub, (3, 1), (3, 4), x_first=False),
    "mul": _with_other(T.mul, (3, 4), (3, 4)),
    "mul_rhs": _with_other(T.mul, (1, 4), (3, 4), x_first=False),
    "div": _with_other(T.div, (3, 4), (3, 4), o_sampler=_positive),
    "div_rhs": _with_other(T.div, (3, 4), (3, 4), x_sampler=_positive, x_first=False),
    "neg": _unary(T.neg),
    "exp": _unary(T.exp),
    "log": _unary(T.log, _positive),
    "tanh": _unary(T.tanh),
    "relu": _unary(T.relu),
    "sigmoid": _unary(T.sigmoid),
    "softplus": _unary(T.softplus),
    "square": _unary(T.square),
    "sqrt": _unary(T.sqrt, _positive),
    "clip": _clip_make,
    "matmul": _with_other(T.matmul, (3, 4), (4, 2)),
    "matmul_rhs": _with_other(T.matmul, (4, 2), (3, 4), x_first=False),
    "reduce_sum": _unary(lambda t: T.reduce_sum(t, axis=1, keepdims=True)),
    "reduce_mean": _unary(lambda t: T.reduce_mean(t, axis=0)),
    "logsumexp": _unary(lambda t: T.logsumexp(t, axis=1)),
    "reshape": _unary(lambda t: T.reshape(t, (4, 3))),
    "transpose": _unary(T.transpose),
    "concat": _with_other(lambda a, b: T.concat([a, b], axis=1), (3, 4), (3, 2)),
    "take": _take_make,
    "getitem": _getitem_make,
}


def _projected(f, rng):
    """Scalar test function: a fixed random linear functional of f's output."""
    w = None

    def scalar(x):
        nonlocal w
        out = f(x)
        if w is None:
            w = rng.standard_normal(out.shape)
        return (out * T.Tensor(w)).sum()

    return scalar


def check_op(name, points=10, seed=0, h=H):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(points):
        x, f = OPS[name](rng)
        worst = max(worst, T.grad_check(_projected(f, rng), x, h))
    return worst


# -- losses on tiny models -------------------------------------------------

def _resolve(model, name):
    """(owner, attribute) for a dotted parameter name such as 'layers.0.W'."""
    parts = name.split(".")
    obj = model
    for p in parts[:-1]:
        obj = obj[int(p)] if p.isdigit() else getattr(obj, p)
    return obj, parts[-1]


def param_grad_check(model, loss, coords_per_param=6, seed=0, h=H):
    """Max relative error of d loss / d theta over sampled coordinates of every parameter.

    ``loss()`` must evaluate the model deterministically and return a scalar Tensor.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, p in list(model.named_parameters()):
        owner, attr = _resolve(model, name)
        original = getattr(owner, attr)

        def f(x, owner=owner, attr=attr):
            setattr(owner, attr, x)
            return loss()

        n = p.data.size
        coords = rng.choice(n, size=min(n, coords_per_param), replace=False)
        try:
            worst = max(worst, T.grad_check(f, p.data, h, coords=coords))
        finally:
            setattr(owner, attr, original)
    return worst


def _perturb(model, rng, scale=0.3):
    """Move zero-initialized parameters off zero so every path is exercised."""
    for _, p in model.named_parameters():
        p.data = T._freeze(p.data + scale * rng.standard_normal(p.shape))
    return model


def _loss_cases(seed):
    from .msflow import ConditionalFlow, flow_logpdf
    from .pendulum import PendulumHierarchy
    from .stage1 import Stage1Model, tcvae_loss
    from .stage2 import Stage2Model, stage2_loss

    rng = np.random.default_rng(seed)
    with T.precision("f64"):
        s1 = _perturb(Stage1Model(8, c_dim=3, beta=4.0, hidden=6, seed=seed).astype(np.float64), rng)
        x1 = rng.uniform(0, 1, (5, 8))
        n1 = rng.standard_normal((5, 3))

        s2 = _perturb(Stage2Model(8, z_dim=2, slab_s=3, channels=2, n_layers=2, hidden=6,
                                  seed=seed).astype(np.float64), rng)
        x2, y2 = rng.uniform(0, 1, (4, 8)), rng.uniform(0, 1, (4, 8))
        n2 = rng.standard_normal((4, 2))

        fl = _perturb(ConditionalFlow(5, 2, n_layers=3, hidden=6, seed=seed).astype(np.float64), rng)
        xf, yf = rng.standard_normal((4, 5)), rng.standard_normal((4, 2))

        ph = _perturb(PendulumHierarchy(T_len=5, hidden=6, seed=seed).astype(np.float64), rng)
        L, B = rng.uniform(1, 3, (4, 1)), rng.uniform(0.1, 2, (4, 1))
        y0, y1, th = (rng.uniform(-1, 1, (4, 5)) for _ in range(3))
        n3 = rng.standard_normal((4, 1))

    return {
        "tcvae_loss": (s1, lambda: tcvae_loss(s1, x1, 1000, noise=n1)["total"]),
        "stage2_loss": (s2, lambda: stage2_loss(s2, x2, y2, n2)["total"]),
        "flow_logpdf": (fl, lambda: flow_logpdf(fl, xf, yf).mean()),
        "pendulum_net1": (ph.net1, lambda: ph.net1.nll(L, y0)),
        "pendulum_net2": (ph.net2, lambda: ph.net2.nll(np.concatenate([B, y0], axis=1), y1)),
        "pendulum_vae3": (ph.vae3, lambda: ph.vae3.loss(th, y1, n3)["total"]),
    }


LOSSES = ("tcvae_loss", "stage2_loss", "flow_logpdf", "pendulum_net1", "pendulum_net2", "pendulum_vae3")


def run(points=10, seed=0, h=H, tol=TOL):
    """Check every registered op and loss. Returns a list of result dicts."""
    results = []
    for name in OPS:
        err = check_op(name, points, seed, h)
        results.append({"kind": "op", "name": name, "max_rel_err": float(err), "ok": bool(err < tol)})
    cases = _loss_cases(seed)
    for name in LOSSES:
        model, loss = cases[name]
        with T.precision("f64"):
            err = param_grad_check(model, loss, seed=seed, h=h)
        results.append({"kind": "loss", "name": name, "max_rel_err": float(err), "ok": bool(err < tol)})
    return results


def assert_all(results):
    bad = [r for r in results if not r["ok"]]
    if bad:
        raise ContractError(f"gradient check failed: {bad}")
    return results
