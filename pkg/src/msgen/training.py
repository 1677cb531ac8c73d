"""Minibatch Adam loop shared by every trainer in the package."""

import numpy as np

from .errors import NumericError, TrainingDiverged
from .nn import Adam
from .tensor import grad


def fit(model, loss_fn, n, epochs, batch, lr, rng, log=None, drop_last=True):
    """Train ``model`` in place.

    ``loss_fn(idx, rng)`` receives the row indices of one minibatch and returns
    ``(total, terms)``: a scalar Tensor and a dict of floats to average per
    epoch. Each epoch's averages go to ``log`` (a callable) and are returned as
    a list.
    """
    params = model.parameters()
    opt = Adam(params, lr=lr)
    history = []
    last_good = model.state_dict()
    for epoch in range(epochs):
        order = rng.permutation(n)
        stop = n - n % batch if drop_last and n >= batch else n
        sums, steps = {}, 0
        for start in range(0, stop, batch):
            idx = order[start:start + batch]
            try:
                total, terms = loss_fn(idx, rng)
                opt.step(grad(total, params))
            except NumericError as exc:
                raise TrainingDiverged(f"epoch {epoch}: {exc}", last_good, epoch) from exc
            for k, v in terms.items():
                sums[k] = sums.get(k, 0.0) + float(v)
            steps += 1
        record = {"epoch": epoch, **{k: v / max(steps, 1) for k, v in sums.items()}}
        if not all(np.isfinite(v) for v in record.values()):
            raise TrainingDiverged(f"epoch {epoch}: non-finite loss", last_good, epoch)
        last_good = model.state_dict()
        history.append(record)
        if log is not None:
            log(record)
    return history
