import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import linalg, stats

from msgen.data import sample_dataset
from msgen.errors import ContractError, ShapeError
from msgen.metrics import (binned_mi, conditioning_metrics, discrete_mi, discretize, entropy, frechet_gaussian,
                           frechet_trace_term, joint_counts, mi_matrix, mig, normalized_mi)
from msgen.stage1 import Stage1Model
from msgen.stage2 import Stage2Model

tables = arrays(np.int64, st.tuples(st.integers(1, 5), st.integers(1, 5)), elements=st.integers(0, 50)).filter(
    lambda t: t.sum() > 0)


def mi_oracle(counts):
    # I = H(a) + H(b) - H(a, b)
    c = np.asarray(counts, dtype=np.float64)
    return stats.entropy(c.sum(1)) + stats.entropy(c.sum(0)) - stats.entropy(c.ravel())


def test_mi_closed_forms():
    assert discrete_mi([[1, 1], [1, 1]]) == pytest.approx(0.0, abs=1e-15)
    assert discrete_mi([[5, 0], [0, 5]]) == pytest.approx(np.log(2), rel=1e-15)


@pytest.mark.parametrize("k", [1, 2, 7, 20])
def test_entropy_uniform(k):
    assert entropy(np.full(k, 3)) == pytest.approx(np.log(k), abs=1e-15)


def test_entropy_matches_scipy():
    c = np.array([3, 0, 7, 1])
    assert entropy(c) == pytest.approx(stats.entropy(c), rel=1e-14)
    with pytest.raises(ContractError):
        entropy(np.zeros(3))


@given(tables)
def test_mi_properties(t):
    mi = discrete_mi(t)
    assert mi == pytest.approx(discrete_mi(t.T), abs=1e-12)
    assert mi == pytest.approx(max(mi_oracle(t), 0.0), abs=1e-10)
    assert -1e-12 <= mi <= min(entropy(t.sum(1)), entropy(t.sum(0))) + 1e-12


def test_binned_matches_discrete_on_integer_inputs():
    r = np.random.default_rng(0)
    a = r.integers(0, 4, 500)
    b = (a + r.integers(0, 2, 500)) % 4
    assert binned_mi(a, b) == discrete_mi(joint_counts(a, b))


def test_discretize_edges():
    codes = discretize(np.linspace(0, 1, 21), bins=20)
    assert codes.min() == 0 and codes.max() == 19
    np.testing.assert_array_equal(discretize(np.ones(5)), 0)


def test_normalized_mi_identity():
    f = np.random.default_rng(1).integers(0, 6, (1000, 3))
    assert normalized_mi(f, f) == pytest.approx(1.0, abs=1e-12)


def test_normalized_mi_noise():
    r = np.random.default_rng(2)
    assert normalized_mi(r.normal(size=(10_000, 3)), r.integers(0, 5, (10_000, 3))) < 0.05


@pytest.mark.parametrize("g", [lambda x: -3 * x + 2, lambda x: np.exp(0.3 * x), lambda x: np.sinh(0.3 * x),
                               lambda x: x + 0.02 * x ** 3])
def test_normalized_mi_monotone_transform(g):
    r = np.random.default_rng(3)
    f = r.integers(0, 5, (10_000, 3))
    lat = f + 0.3 * r.standard_normal(f.shape)
    assert abs(normalized_mi(g(lat), f) - normalized_mi(lat, f)) < 0.02


def test_normalized_mi_skips_constant_factor():
    r = np.random.default_rng(4)
    f = np.stack([r.integers(0, 3, 300), np.zeros(300, dtype=np.int64)], axis=1)
    with pytest.warns(RuntimeWarning):
        assert normalized_mi(f, f) == pytest.approx(1.0)
    with pytest.raises(ShapeError):
        normalized_mi(np.zeros((5, 2)), np.zeros((5, 3)))


def test_mig_calibration():
    r = np.random.default_rng(5)
    n = 10_000
    factor = r.integers(0, 5, n)
    noise = r.normal(size=(n, 3))
    perfect = np.column_stack([factor.astype(float), noise])
    assert mig(perfect, factor) >= 0.95
    twice = np.column_stack([factor.astype(float), factor.astype(float), noise])
    assert mig(twice, factor) == pytest.approx(0.0, abs=1e-12)
    assert mig(noise, factor) < 0.05


def test_mig_needs_two_latents():
    with pytest.raises(ContractError):
        mig(np.zeros((10, 1)), np.zeros(10, dtype=np.int64))


def test_mi_matrix_shape():
    r = np.random.default_rng(6)
    assert mi_matrix(r.normal(size=(50, 4)), r.integers(0, 3, (50, 2))).shape == (4, 2)


def test_frechet_closed_forms():
    # a sample standardized to exact unit moments makes the population closed forms exact
    a = stats.norm.ppf((np.arange(20_000) + 0.5) / 20_000)
    a = (a - a.mean()) / a.std()
    assert frechet_gaussian(a, a) == 0.0
    assert frechet_gaussian(a, a + 1.0) == pytest.approx(1.0, abs=1e-9)
    assert frechet_gaussian(a, 2.0 * a) == pytest.approx(1.0, abs=1e-9)
    assert frechet_gaussian(a, 2.0 * a, mode="full") == pytest.approx(1.0, abs=1e-9)


def test_frechet_full_against_sqrtm():
    r = np.random.default_rng(7)
    a = r.normal(size=(500, 3)) @ r.normal(size=(3, 3))
    b = r.normal(size=(400, 3)) @ r.normal(size=(3, 3)) + 0.5
    ca, cb = np.cov(a, rowvar=False, bias=True), np.cov(b, rowvar=False, bias=True)
    ref = np.sum((a.mean(0) - b.mean(0)) ** 2) + np.trace(ca + cb - 2 * linalg.sqrtm(ca @ cb).real)
    assert frechet_gaussian(a, b, mode="full") == pytest.approx(ref, rel=1e-8)
    assert frechet_gaussian(a, b, mode="full") == pytest.approx(frechet_gaussian(b, a, mode="full"), rel=1e-9)
    assert frechet_trace_term(ca, ca) == pytest.approx(0.0, abs=1e-9)


def test_frechet_full_equals_diag_for_diagonal_covariances():
    a = np.array([[1.0, 0], [-1, 0], [0, 2], [0, -2]])
    b = np.array([[3.0, 0], [-3, 0], [0, 1], [0, -1]]) + 1
    assert frechet_gaussian(a, b, mode="full") == pytest.approx(frechet_gaussian(a, b), abs=1e-12)


@given(arrays(np.float64, (6, 2), elements=st.floats(-10, 10)), arrays(np.float64, (5, 2), elements=st.floats(-10, 10)))
def test_frechet_symmetric_and_non_negative(a, b):
    d = frechet_gaussian(a, b)
    assert d >= 0 and d == pytest.approx(frechet_gaussian(b, a), abs=1e-9)


def test_frechet_errors():
    with pytest.raises(ShapeError):
        frechet_gaussian(np.zeros((3, 2)), np.zeros((3, 3)))
    with pytest.raises(ContractError):
        frechet_gaussian(np.zeros((1, 2)), np.zeros((3, 2)))
    with pytest.raises(ValueError):
        frechet_gaussian(np.zeros((3, 2)), np.zeros((3, 2)), mode="other")


def test_conditioning_metrics_untrained_refiner():
    ds = sample_dataset(200, seed=8)
    s1 = Stage1Model(256, 10, hidden=32, seed=1)
    s2 = Stage2Model(256, hidden=32, seed=2)
    m = conditioning_metrics(s1, s2, ds, seed=0)
    assert m[1] == m[2]
    assert m == conditioning_metrics(s1, s2, ds, seed=0)
    assert all(0 <= v <= 1 for v in m)
