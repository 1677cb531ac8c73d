"""Binned mutual information, MIG, conditioning diagnostics and Frechet distance."""

import warnings

import numpy as np

from .errors import ContractError, ShapeError

DEFAULT_BINS = 20


def entropy(counts):
    """Plug-in entropy (nats) of a count vector or table."""
    p = np.asarray(counts, dtype=np.float64).ravel()
    total = p.sum()
    if total <= 0:
        raise ContractError("entropy needs a positive total count")
    p = p[p > 0] / total
    return float(-np.sum(p * np.log(p)))


def discrete_mi(counts):
    """Plug-in mutual information (nats) of a 2-d joint count table."""
    joint = np.asarray(counts, dtype=np.float64)
    if joint.ndim != 2:
        raise ShapeError("discrete_mi expects a 2-d count table")
    total = joint.sum()
    if total <= 0:
        raise ContractError("discrete_mi needs a positive total count")
    pxy = joint / total
    px = pxy.sum(axis=1, keepdims=True)
    py = pxy.sum(axis=0, keepdims=True)
    nz = pxy > 0
    mi = np.sum(pxy[nz] * (np.log(pxy[nz]) - np.log((px @ py)[nz])))
    return float(max(mi, 0.0))


def discretize(values, bins=DEFAULT_BINS):
    """Equal-width binning of one variable into integer codes 0..bins-1."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros(v.shape, dtype=np.int64)
    edges = np.linspace(lo, hi, bins + 1)
    return np.clip(np.digitize(v, edges[1:-1]), 0, bins - 1)


def _codes(values, bins):
    """Integer codes: kept as-is for small-integer data, otherwise binned."""
    v = np.asarray(values)
    if np.issubdtype(v.dtype, np.integer):
        return np.unique(v, return_inverse=True)[1].ravel()
    return discretize(v, bins)


def joint_counts(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    table = np.zeros((a.max() + 1, b.max() + 1))
    np.add.at(table, (a, b), 1)
    return table


def binned_mi(a, b, bins=DEFAULT_BINS):
    return discrete_mi(joint_counts(_codes(a, bins), _codes(b, bins)))


def binned_entropy(a, bins=DEFAULT_BINS):
    return entropy(np.bincount(_codes(a, bins)))


def normalized_mi(latents, factors, bins=DEFAULT_BINS):
    """mean_i I(latent_i; factor_i) / H(factor_i).

    Dimensions whose factor has zero entropy are skipped with a warning.
    """
    lat = np.asarray(latents)
    fac = np.asarray(factors)
    if lat.ndim == 1:
        lat, fac = lat[:, None], fac[:, None]
    if lat.shape != fac.shape:
        raise ShapeError(f"latents {lat.shape} and factors {fac.shape} must match")
    scores = []
    for i in range(lat.shape[1]):
        f = _codes(fac[:, i], bins)
        h = entropy(np.bincount(f))
        if h == 0:
            warnings.warn(f"factor dimension {i} has zero entropy; skipped", RuntimeWarning)
            continue
        scores.append(discrete_mi(joint_counts(_codes(lat[:, i], bins), f)) / h)
    if not scores:
        return 0.0
    return float(np.mean(scores))


def mi_matrix(latents, factors, bins=DEFAULT_BINS):
    """I(latent_j; factor_k) for all pairs, shape [n_latents, n_factors]."""
    lat = np.asarray(latents)
    fac = np.asarray(factors)
    lat_codes = [discretize(lat[:, j], bins) for j in range(lat.shape[1])]
    fac_codes = [_codes(fac[:, k], bins) for k in range(fac.shape[1])]
    return np.array([[discrete_mi(joint_counts(lc, fc)) for fc in fac_codes] for lc in lat_codes])


def mig(latents, factors, bins=DEFAULT_BINS):
    """Mutual information gap averaged over factors.

    For each factor the gap between the two latents most informative about it,
    divided by the factor's entropy.
    """
    lat = np.asarray(latents)
    fac = np.asarray(factors)
    if fac.ndim == 1:
        fac = fac[:, None]
    if lat.ndim != 2 or lat.shape[1] < 2:
        raise ContractError("MIG needs at least two latent dimensions")
    if lat.shape[0] != fac.shape[0]:
        raise ShapeError("latents and factors must have the same number of rows")
    m = mi_matrix(lat, fac, bins)
    top = np.sort(m, axis=0)[::-1]
    h = np.array([entropy(np.bincount(_codes(fac[:, k], bins))) for k in range(fac.shape[1])])
    return float(np.mean((top[0] - top[1]) / h))


def frechet_gaussian(feat_a, feat_b, mode="diag"):
    """Frechet distance between Gaussian fits of two feature sets."""
    a = np.asarray(feat_a, dtype=np.float64)
    b = np.asarray(feat_b, dtype=np.float64)
    if a.ndim == 1:
        a, b = a[:, None], b[:, None]
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"feature dims differ: {a.shape[1]} vs {b.shape[1]}")
    if len(a) < 2 or len(b) < 2:
        raise ContractError("need at least two samples per set")
    mean_term = float(np.sum((a.mean(axis=0) - b.mean(axis=0)) ** 2))
    if mode == "diag":
        return mean_term + float(np.sum((a.std(axis=0) - b.std(axis=0)) ** 2))
    if mode != "full":
        raise ValueError(f"unknown mode {mode!r}")
    return mean_term + frechet_trace_term(np.cov(a, rowvar=False, bias=True),
                                          np.cov(b, rowvar=False, bias=True))


def _psd_sqrt(m):
    w, v = np.linalg.eigh((m + m.T) / 2)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.T


def frechet_trace_term(cov_a, cov_b):
    """Tr(A + B - 2 (A^1/2 B A^1/2)^1/2) via symmetric eigendecompositions."""
    cov_a = np.atleast_2d(cov_a)
    cov_b = np.atleast_2d(cov_b)
    root_a = _psd_sqrt(cov_a)
    middle = _psd_sqrt(root_a @ cov_b @ root_a)
    return float(np.trace(cov_a) + np.trace(cov_b) - 2 * np.trace(middle))


def conditioning_metrics(stage1, stage2, data, seed=0, bins=DEFAULT_BINS):
    """(M1, M2, M3, M4): how much of the stage-one code of x survives in
    the codes of y, the refinement, the refinement with random z, and the
    refinement of a noise image with the true z."""
    from .stage1 import _flat, encode_mean, produce_y
    from .stage2 import posterior_mean, refine_batched

    x = _flat(data)
    rng = np.random.default_rng(seed)
    y = produce_y(stage1, x)
    z = posterior_mean(stage2, x, y)
    eps_z = rng.standard_normal(z.shape).astype(np.float32)
    eps_y = rng.standard_normal(y.shape).astype(np.float32)
    c_r = encode_mean(stage1, x)
    codes = (
        encode_mean(stage1, y),
        encode_mean(stage1, refine_batched(stage2, y, z)),
        encode_mean(stage1, refine_batched(stage2, y, eps_z)),
        encode_mean(stage1, refine_batched(stage2, eps_y, z)),
    )
    return tuple(normalized_mi(c, c_r, bins) for c in codes)
