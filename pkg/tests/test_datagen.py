import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from switchssm import datagen
from switchssm.datagen import (gen_bouncing_ball, gen_lorenz, gen_switching_gaussian,
                               gen_switching_linear, integrate_lorenz, lorenz_derivative,
                               reflect, simulate_ball, two_regime_blocks, velocity_label)


def test_zero_variance_block():
    s = gen_switching_gaussian([(0, 0, 3)])
    np.testing.assert_array_equal(s.values[:, 0], 0)
    np.testing.assert_array_equal(s.labels, 0)


def test_block_means():
    s = gen_switching_gaussian([(0, 1, 1000), (5, 1, 1000)], seed=3)
    assert abs(s.values[:1000].mean()) < 0.1 and abs(s.values[1000:].mean() - 5) < 0.1
    np.testing.assert_array_equal(np.unique(s.labels), [0, 1])


@pytest.mark.parametrize("blocks", [[], [(0, -1, 5)], [(0, 1, 0)]])
def test_bad_blocks(blocks):
    with pytest.raises(ValueError):
        gen_switching_gaussian(blocks)


def test_two_regime_plan():
    plan = two_regime_blocks(4)
    assert len(plan["blocks"]) == 6
    r = plan["regime_of_block"]
    assert all(a != b for a, b in zip(r, r[1:]))
    assert all(600 <= n <= 1200 for _, _, n in plan["blocks"])


def test_lorenz_derivative():
    np.testing.assert_allclose(lorenz_derivative(np.ones(3)), [0, 26, -5 / 3], atol=1e-14)
    np.testing.assert_array_equal(lorenz_derivative(np.zeros(3)), 0)
    np.testing.assert_array_equal(integrate_lorenz(np.zeros(3), 50, 0.01), 0)


def test_lorenz_visits_both_lobes():
    s = gen_lorenz(T=500, dt=0.01, seed=0)
    assert set(np.unique(s.labels)) == {0, 1}
    assert s.values.shape == (500, 1)
    assert abs(s.values.mean()) < 1e-12 and abs(s.values.std() - 1) < 1e-12
    both = [len(np.unique(gen_lorenz(T=500, seed=k).labels)) == 2 for k in range(30)]
    assert np.mean(both) >= 0.8


def test_lorenz_full_and_bounded():
    s = gen_lorenz(T=10_000, dt=0.01, seed=1, obs="full")
    assert s.values.shape == (10_000, 3)
    assert np.max(np.linalg.norm(s.values, axis=1)) < 1e3
    assert s.meta["params"] == datagen.LORENZ_DEFAULTS


def test_lorenz_divergence_reported():
    with pytest.raises(datagen.IntegrationError):
        integrate_lorenz(np.array([1e150, 1e150, 1e150]), 10, 0.01)


def test_ball_free_flight():
    P, V = simulate_ball([128.0, 128.0], [5.0, 0.0], 2, 256.0)
    np.testing.assert_allclose(P[1] - P[0], [5, 0])
    assert velocity_label(V[0]) == velocity_label(V[1])


def test_ball_reflection():
    p, v = reflect(254.0 + 5.0, 5.0, 256.0)
    assert (p, v) == (253.0, -5.0)


def test_ball_defaults():
    balls = gen_bouncing_ball(n_traj=3, seed=0)
    assert len(balls) == 3 and all(len(b) == 200 for b in balls)
    m = balls[0].meta
    assert m["board"] == 256.0 and m["vel_range"] == [-5.0, 5.0] and m["T"] == 200


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(1.0, 50.0), st.floats(0.5, 200.0))
def test_ball_containment_and_labels(seed, board, speed):
    rng = np.random.default_rng(seed)
    P, V = simulate_ball(rng.uniform(0, board, 2), rng.uniform(-speed, speed, 2), 100, board)
    assert np.all(P >= 0) and np.all(P <= board)
    lab = velocity_label(V)
    flips = np.any(np.sign(V[1:]) != np.sign(V[:-1]), axis=1)
    np.testing.assert_array_equal(lab[1:] != lab[:-1], flips)


@pytest.mark.parametrize("gen", [
    lambda s: [gen_switching_gaussian([(0, 1, 50), (2, 3, 50)], seed=s)],
    lambda s: [gen_lorenz(T=100, seed=s, noise_std=0.1)],
    lambda s: gen_bouncing_ball(n_traj=2, T=50, seed=s, noise_std=0.5),
    lambda s: gen_switching_linear(T=50, seed=s, n_traj=2),
])
def test_determinism(gen):
    for a, b in zip(gen(7), gen(7)):
        np.testing.assert_array_equal(a.values, b.values)
        np.testing.assert_array_equal(a.labels, b.labels)
    assert not np.array_equal(gen(7)[0].values, gen(8)[0].values)


def test_switching_linear_labels_are_modes():
    s = gen_switching_linear(T=300, seed=0)[0]
    assert s.values.shape == (300, 2) and set(np.unique(s.labels)) <= {0, 1}
