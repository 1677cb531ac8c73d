import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from msgen.errors import ContractError, DomainError, ShapeError
from msgen.pendulum import (G, PendulumConfig, PendulumData, PendulumHierarchy, dominant_period, energy,
                            integrate, load_pendulum_dataset, pearson, sample_pendulum_dataset,
                            save_pendulum_dataset, simulate, PendulumParams, train_hierarchy, train_step3,
                            traverse, wrap, z_mass_correlation)


def crossings(traj, dt):
    # linearly interpolated sign-change times
    i = np.nonzero(np.signbit(traj[1:]) != np.signbit(traj[:-1]))[0]
    return dt * (i + traj[i] / (traj[i] - traj[i + 1]))


def test_equilibrium_stays_put():
    np.testing.assert_array_equal(simulate(PendulumParams(2.0, 1.0, 0.5, theta0=0.0, omega0=0.0)), 0.0)


@pytest.mark.parametrize("L", [1.0, 2.0, 3.0])
def test_small_angle_half_period(L):
    th, _ = integrate(L, 1.0, 0.0, theta0=0.05, T=10_000)
    spacing = np.diff(crossings(th[0], 1e-3))
    assert np.mean(spacing) == pytest.approx(np.pi * np.sqrt(L / G), rel=0.02)


@pytest.mark.parametrize("L, M", [(1.0, 0.1), (2.5, 1.7)])
def test_energy_conserved_without_damping(L, M):
    th, om = integrate(L, M, 0.0, T=1000)
    e = energy(th[0], om[0], L, M)
    assert np.max(np.abs(e / e[0] - 1)) < 1e-3


def test_damping_dissipates_energy():
    th, om = integrate(2.0, 1.0, 0.5, T=1000)
    e = energy(th[0], om[0], 2.0, 1.0)
    assert np.all(np.diff(e) <= 1e-12) and e[-1] < 0.5 * e[0]


def test_step_halving_agrees():
    a, _ = integrate([1.0, 2.7], [0.3, 1.5], [0.0, 1.2])
    b, _ = integrate([1.0, 2.7], [0.3, 1.5], [0.0, 1.2], dt=5e-4)
    assert np.max(np.abs(a - b)) < 1e-6


@pytest.mark.parametrize("kw", [{"dt": 0.0}, {"dt": -1e-3}, {"dt": 3e-2}])
def test_bad_step_rejected(kw):
    with pytest.raises(DomainError):
        integrate(1.0, 1.0, 0.1, **kw)


@pytest.mark.parametrize("p", [PendulumParams(0.0, 1.0, 0.1), PendulumParams(1.0, -1.0, 0.1),
                               PendulumParams(1.0, 1.0, -0.1), PendulumParams(1.0, 1.0, 0.1, dt=0.0)])
def test_invalid_params(p):
    with pytest.raises(DomainError):
        simulate(p)


@given(st.floats(-1e4, 1e4))
def test_wrap_range_and_angle(x):
    w = wrap(x)
    assert -np.pi <= w < np.pi
    assert np.cos(w) == pytest.approx(np.cos(x), abs=1e-9)
    assert np.sin(w) == pytest.approx(np.sin(x), abs=1e-9)


def test_trajectory_is_wrapped_with_length_T():
    th = simulate(PendulumParams(1.0, 0.2, 0.0, theta0=3.0, omega0=5.0))
    assert th.shape == (100,) and np.all(np.abs(th) <= np.pi)


@pytest.fixture(scope="module")
def data():
    return sample_pendulum_dataset(400, seed=3)


def test_dataset_ranges_and_determinism(data):
    assert 1 <= data.L.min() and data.L.max() <= 3
    assert 0.1 <= data.B.min() and data.B.max() <= 2
    assert 0.1 <= data.M.min() and data.M.max() <= 2
    assert data.theta.shape == data.y0.shape == data.y1.shape == (400, 100)
    again = sample_pendulum_dataset(400, seed=3)
    assert again.theta.tobytes() == data.theta.tobytes()
    assert sample_pendulum_dataset(400, seed=4).theta.tobytes() != data.theta.tobytes()


def test_y0_depends_only_on_length():
    th, _ = integrate([2.0, 2.0], [1.0, 1.0], [0.0, 0.0])
    assert th[0].tobytes() == th[1].tobytes()
    np.testing.assert_array_equal(simulate(PendulumParams(2.0, 1.0, 0.0)), wrap(th[0]))


def test_y0_consistent_with_simulator(data):
    i = 7
    np.testing.assert_allclose(data.y0[i], simulate(PendulumParams(float(data.L[i]), 1.0, 0.0)), atol=1e-6)
    np.testing.assert_allclose(data.theta[i], simulate(PendulumParams(*map(float, (data.L[i], data.M[i], data.B[i])))),
                               atol=1e-6)


def test_y1_approaches_y0_as_damping_vanishes():
    y0 = simulate(PendulumParams(1.7, 1.0, 0.0))
    y1 = simulate(PendulumParams(1.7, 1.0, 1e-4))
    assert np.max(np.abs(y1 - y0)) < 1e-3


def test_dataset_io_roundtrip(data, tmp_path):
    save_pendulum_dataset(data, tmp_path / "p")
    back = load_pendulum_dataset(tmp_path / "p")
    for k in ("L", "M", "B", "theta", "y0", "y1"):
        assert getattr(back, k).tobytes() == getattr(data, k).tobytes()
    assert len(data.split()[0]) == 320


def test_empty_dataset_rejected():
    with pytest.raises(DomainError):
        sample_pendulum_dataset(0)


def test_dominant_period_cases():
    t = np.arange(1000) * 0.01
    assert dominant_period(np.sin(2 * np.pi * t / 2.0 + 0.1), 0.01) == pytest.approx(2.0, rel=0.02)
    assert dominant_period(np.ones(10), 0.1) == np.inf


def test_pearson_cases():
    r = np.random.default_rng(0)
    a = r.normal(size=200)
    assert pearson(a, a) == pytest.approx((1.0, False))
    assert pearson(a, -a)[0] == pytest.approx(-1.0)
    assert pearson(np.ones(5), np.arange(5)) == (0.0, True)
    with pytest.raises(ShapeError):
        pearson(np.ones(3), np.ones(4))


@given(st.floats(0.1, 100), st.floats(-100, 100))
def test_pearson_affine_invariance(scale, shift):
    r = np.random.default_rng(1)
    a, b = r.normal(size=50), r.normal(size=50)
    assert pearson(a, scale * b + shift)[0] == pytest.approx(pearson(a, b)[0], abs=1e-9)


def test_step_three_needs_earlier_steps(data):
    with pytest.raises(ContractError):
        train_step3(PendulumHierarchy(hidden=8), data, PendulumConfig(epochs3=1))


CFG = PendulumConfig(hidden=32, epochs1=20, epochs2=10, epochs3=10)


@pytest.fixture(scope="module")
def trained(data):
    train, test = data.split()
    return train_hierarchy(CFG, train), train, test


def test_net1_learns_y0(trained):
    h, _, test = trained
    y0 = traverse(h, "L", test.L)["y0"]
    assert np.mean((y0 - test.y0) ** 2) < np.var(test.y0)


def test_correlation_needs_training_and_rows(trained, data):
    h, _, test = trained
    with pytest.raises(ContractError):
        z_mass_correlation(PendulumHierarchy(hidden=8), data)
    with pytest.raises(ContractError):
        z_mass_correlation(h, test.subset(slice(0, 50)))
    r, degenerate = z_mass_correlation(h, data)
    assert -1 <= r <= 1 and not degenerate
    m = data.M.astype(np.float64)
    assert z_mass_correlation(h, data, 3.0 * m + 1.0)[0] == pytest.approx(z_mass_correlation(h, data, m)[0], abs=1e-9)


def test_z_sweep_leaves_upper_levels_bitwise(trained):
    h = trained[0]
    out = traverse(h, "Z", np.linspace(-3, 3, 7))
    assert all(row.tobytes() == out["y0"][0].tobytes() for row in out["y0"])
    assert all(row.tobytes() == out["y1"][0].tobytes() for row in out["y1"])
    assert not np.allclose(out["theta"][0], out["theta"][-1])


def test_grid_of_one(trained):
    out = traverse(trained[0], "B", [0.5])
    assert all(v.shape == (1, 100) for v in out.values())
    with pytest.raises(DomainError):
        traverse(trained[0], "M", [1.0])


def test_length_sweep_changes_period_monotonically():
    h = train_hierarchy(PendulumConfig(hidden=64, epochs1=60, epochs2=1, epochs3=1),
                        sample_pendulum_dataset(1000, seed=0))
    y0 = traverse(h, "L", np.linspace(1.0, 3.0, 5))["y0"]
    periods = [dominant_period(row, 0.1) for row in y0]
    assert np.all(np.diff(periods) > 0)


def test_training_is_seed_deterministic(data):
    cfg = PendulumConfig(hidden=8, epochs1=1, epochs2=1, epochs3=1)
    sub = data.subset(slice(0, 100))
    a, b = train_hierarchy(cfg, sub), train_hierarchy(cfg, sub)
    for k, v in a.state_dict().items():
        assert v.tobytes() == b.state_dict()[k].tobytes()


def test_hierarchy_container_roundtrip(trained):
    h, _, test = trained
    back = PendulumHierarchy.from_entries(h.to_entries())
    assert back.steps_done == {1, 2, 3}
    assert back.medians == pytest.approx(h.medians)
    a, b = traverse(h, "Z", [0.0, 1.0]), traverse(back, "Z", [0.0, 1.0])
    assert a["theta"].tobytes() == b["theta"].tobytes()


def test_data_subset_type(data):
    assert isinstance(data.subset([0, 2]), PendulumData)
