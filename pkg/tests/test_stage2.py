import numpy as np
import pytest

from msgen import gradsuite
from msgen.data import sample_dataset
from msgen.errors import ShapeError
from msgen.stage1 import Stage1Config, produce_y, train_stage1
from msgen.stage2 import (Stage2Config, Stage2Model, encode_residual, reconstruct, refine, refine_batched,
                          stage2_loss, train_stage2)
from msgen.tensor import grad_check, precision

LOG_NORM = -0.5 * np.log(2 * np.pi * 0.1 ** 2)


@pytest.fixture(scope="module")
def pipeline():
    ds = sample_dataset(800, seed=2)
    train, test = ds.split()
    s1 = train_stage1(Stage1Config(epochs=10, hidden=64, batch=32), train)
    before = {k: v.copy() for k, v in s1.state_dict().items()}
    s2 = train_stage2(Stage2Config(epochs=10, hidden=64, batch=32), train, s1)
    return s1, s2, train, test, before


def small(seed=0):
    return Stage2Model(12, z_dim=2, slab_s=4, channels=3, n_layers=2, hidden=8, seed=seed)


def test_untrained_refine_ignores_z():
    m = small()
    r = np.random.default_rng(0)
    y = r.uniform(0, 1, (5, 12))
    a = refine(m, y, r.standard_normal((5, 2))).data
    b = refine(m, y, 50 * r.standard_normal((5, 2))).data
    assert a.tobytes() == b.tobytes()


def test_y_changes_output_with_z_fixed():
    m = small()
    r = np.random.default_rng(1)
    z = r.standard_normal((4, 2))
    assert not np.allclose(refine(m, r.uniform(0, 1, (4, 12)), z).data, refine(m, r.uniform(0, 1, (4, 12)), z).data)


def test_encoder_sees_only_the_residual():
    m = small()
    r = np.random.default_rng(2)
    x, shift = r.uniform(0, 1, (3, 12)), r.uniform(0, 1, (3, 12))
    a = encode_residual(m, x, x).mean.data
    b = encode_residual(m, shift, shift).mean.data
    np.testing.assert_array_equal(a, b)
    q = encode_residual(m, x, shift)
    assert q.mean.shape == (3, 2) and q.logvar.shape == (3, 2)


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        encode_residual(small(), np.zeros((2, 12)), np.zeros((2, 11)))


def test_recon_at_perfect_reconstruction():
    # a decoder that outputs exactly y: zero all weights, head bias = logit(y) for a constant y
    m = small()
    with precision("f64"):
        m.astype(np.float64)
        y_val = 0.3
        for _, p in m.head.named_parameters():
            p.data = np.zeros_like(p.data)
        m.head.b.data = np.full(12, np.log(y_val / (1 - y_val)))
        x = np.full((4, 12), y_val)
        out = stage2_loss(m, x, x, np.zeros((4, 2)))
    assert out["recon"].item() == pytest.approx(12 * LOG_NORM, abs=1e-9)
    assert out["kl"].item() >= 0


def test_stage2_gradients():
    m = gradsuite._perturb(small().astype(np.float64), np.random.default_rng(3))
    r = np.random.default_rng(4)
    x, y, noise = r.uniform(0, 1, (3, 12)), r.uniform(0, 1, (3, 12)), r.standard_normal((3, 2))
    assert gradsuite.param_grad_check(m, lambda: stage2_loss(m, x, y, noise)["total"]) < 1e-4
    assert grad_check(lambda t: stage2_loss(m, t, y, noise)["total"], x) < 1e-4
    assert grad_check(lambda t: stage2_loss(m, x, t, noise)["total"], y) < 1e-4


def test_stage1_untouched_by_stage2_training(pipeline):
    s1, _, _, _, before = pipeline
    for k, v in s1.state_dict().items():
        assert v.tobytes() == before[k].tobytes()


def test_heldout_refinement_beats_stage1(pipeline):
    s1, s2, _, test, _ = pipeline
    y, x_hat = reconstruct(s1, s2, test)
    x = test.flat
    assert x_hat.shape == x.shape
    assert np.mean((x - x_hat) ** 2) < np.mean((x - y) ** 2)
    assert np.array_equal(x_hat, reconstruct(s1, s2, test)[1])


def test_trained_refine_depends_on_z(pipeline):
    s1, s2, _, test, _ = pipeline
    y = produce_y(s1, test)[:20]
    r = np.random.default_rng(5)
    a = refine_batched(s2, y, r.standard_normal((20, 5)))
    b = refine_batched(s2, y, r.standard_normal((20, 5)))
    assert not np.array_equal(a, b)
    assert np.isfinite(a).all() and a.min() >= 0 and a.max() <= 1


def test_training_is_seed_deterministic(pipeline):
    s1, _, train, _, _ = pipeline
    sub = train.flat[:128]
    cfg = Stage2Config(epochs=1, hidden=16, batch=32)
    a, b = train_stage2(cfg, sub, s1), train_stage2(cfg, sub, s1)
    for k, v in a.state_dict().items():
        assert v.tobytes() == b.state_dict()[k].tobytes()


def test_container_roundtrip():
    m = small(seed=4)
    back = Stage2Model.from_entries(m.to_entries())
    r = np.random.default_rng(6)
    y, z = r.uniform(0, 1, (2, 12)), r.standard_normal((2, 2))
    assert refine(back, y, z).data.tobytes() == refine(m, y, z).data.tobytes()
    assert back.sigma_x == pytest.approx(0.1)
