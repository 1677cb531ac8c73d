"""Synthetic 16x16 images with known independent and correlated factors.

Independent factors (position and size of a square) play the role of C. Two
detail factors, a gradient angle and a texture phase, are drawn from a
correlated Gaussian and only change the texture inside the square; they play
the role of Z.
"""

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainError
from .io import load_tensor, save_tensor

SIDE = 16
PIXELS = SIDE * SIDE
N_POS = 8
SIZES = (1, 2, 3)
DETAIL_RHO = 0.8
DETAIL_STD = 0.7
INDEPENDENT = ("pos_x", "pos_y", "size")
DETAIL = ("gradient_angle", "texture_phase")
FACTOR_NAMES = INDEPENDENT + DETAIL


@dataclass(frozen=True)
class FactorSpec:
    pos_x: int
    pos_y: int
    size: int
    gradient_angle: float
    texture_phase: float

    def validate(self):
        if not (0 <= self.pos_x < N_POS and 0 <= self.pos_y < N_POS):
            raise DomainError(f"position ({self.pos_x}, {self.pos_y}) outside 0..{N_POS - 1}")
        if self.size not in SIZES:
            raise DomainError(f"size {self.size} not in {SIZES}")
        for name in DETAIL:
            v = getattr(self, name)
            if not 0 <= v < 2 * np.pi:
                raise DomainError(f"{name}={v} outside [0, 2pi)")


def render(f):
    """Render one factor record to a [1, 256] image with pixels in [0, 1]."""
    f.validate()
    cx, cy = 2 * f.pos_x + 1, 2 * f.pos_y + 1
    rows, cols = np.mgrid[0:SIDE, 0:SIDE]
    inside = (np.abs(cols - cx) <= f.size) & (np.abs(rows - cy) <= f.size)
    # offset along the gradient direction
    along = (cols - cx) * np.cos(f.gradient_angle) + (rows - cy) * np.sin(f.gradient_angle)
    texture = 0.5 + 0.4 * np.cos(f.texture_phase + along)
    img = np.where(inside, texture, 0.0)
    return img.reshape(1, PIXELS).astype(np.float32)


@dataclass
class SynthDataset:
    images: np.ndarray  # [N, 1, 256]
    factors: dict  # name -> [N] array
    seed: int = 0

    def __len__(self):
        return self.images.shape[0]

    @property
    def flat(self):
        return self.images.reshape(len(self), PIXELS)

    def factor_spec(self, i):
        return FactorSpec(
            int(self.factors["pos_x"][i]),
            int(self.factors["pos_y"][i]),
            int(self.factors["size"][i]),
            float(self.factors["gradient_angle"][i]),
            float(self.factors["texture_phase"][i]),
        )

    def independent_factors(self):
        return np.stack([self.factors[k] for k in INDEPENDENT], axis=1)

    def split(self, frac=0.8):
        cut = int(round(len(self) * frac))
        first = SynthDataset(self.images[:cut], {k: v[:cut] for k, v in self.factors.items()}, self.seed)
        second = SynthDataset(self.images[cut:], {k: v[cut:] for k, v in self.factors.items()}, self.seed)
        return first, second


def sample_factors(n, rng):
    pos_x = rng.integers(0, N_POS, size=n)
    pos_y = rng.integers(0, N_POS, size=n)
    size = rng.choice(np.array(SIZES), size=n)
    cov = DETAIL_STD ** 2 * np.array([[1.0, DETAIL_RHO], [DETAIL_RHO, 1.0]])
    detail = rng.multivariate_normal([np.pi, np.pi], cov, size=n)
    detail = np.mod(detail, 2 * np.pi)
    return {
        "pos_x": pos_x,
        "pos_y": pos_y,
        "size": size,
        "gradient_angle": detail[:, 0],
        "texture_phase": detail[:, 1],
    }


def sample_dataset(n, seed=0):
    if n <= 0:
        raise DomainError("n must be positive")
    rng = np.random.default_rng(seed)
    factors = sample_factors(n, rng)
    ds = SynthDataset(np.empty((n, 1, PIXELS), dtype=np.float32), factors, seed)
    for i in range(n):
        ds.images[i] = render(ds.factor_spec(i))
    return ds


def circular_correlation(a, b):
    """Circular correlation coefficient (Jammalamadaka and SenGupta)."""
    ma = np.angle(np.mean(np.exp(1j * a)))
    mb = np.angle(np.mean(np.exp(1j * b)))
    sa, sb = np.sin(a - ma), np.sin(b - mb)
    return float(np.sum(sa * sb) / np.sqrt(np.sum(sa ** 2) * np.sum(sb ** 2)))


def save_dataset(ds, directory):
    os.makedirs(directory, exist_ok=True)
    save_tensor(os.path.join(directory, "images.mstn"), ds.images)
    records = [asdict(ds.factor_spec(i)) for i in range(len(ds))]
    with open(os.path.join(directory, "factors.json"), "w") as fh:
        json.dump(records, fh)
    with open(os.path.join(directory, "meta.json"), "w") as fh:
        json.dump({"seed": ds.seed, "n": len(ds)}, fh)


def load_dataset(directory):
    images = load_tensor(os.path.join(directory, "images.mstn"))
    with open(os.path.join(directory, "factors.json")) as fh:
        records = json.load(fh)
    with open(os.path.join(directory, "meta.json")) as fh:
        meta = json.load(fh)
    factors = {k: np.array([r[k] for r in records]) for k in FACTOR_NAMES}
    return SynthDataset(images, factors, meta["seed"])
