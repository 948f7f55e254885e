import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from switchssm import changefinder as cf
from switchssm.changefinder import (SdarConfig, SdarState, change_scores, extract_change_points,
                                    outlier_scores, sdar_step, smooth, threshold_value)


def shifted(seed, delta=5.0, scale_after=1.0, L=5000, at=2500):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(L)
    x[at:] = delta + scale_after * x[at:]
    return x


# ---------------------------------------------------------------- sdar_step

def test_log_density_at_prediction():
    cfg = SdarConfig(order=1)
    st0 = SdarState.initial(1, cfg, mean=[2.0], var=1.0 - cfg.variance_floor)
    # warm-up: scored against the prior model, here exactly at its mean
    _, logp = sdar_step(st0, [2.0], cfg)
    assert logp == pytest.approx(-0.5 * np.log(2 * np.pi), abs=1e-12)


def test_warmup_uses_prior():
    cfg = SdarConfig(order=3)
    state = SdarState.initial(1, cfg, mean=[0.0], var=4.0)
    for x in (1.0, -2.0, 0.5):
        expect = -0.5 * np.log(2 * np.pi * (state.noise_var[0] + cfg.variance_floor)) \
            - 0.5 * (x - state.mean[0]) ** 2 / (state.noise_var[0] + cfg.variance_floor)
        state, logp = sdar_step(state, [x], cfg)
        assert logp == pytest.approx(expect, rel=1e-12)


def test_white_noise_ar_coefficient_small():
    cfg = SdarConfig(order=1, discount=0.01)
    state = SdarState.initial(1, cfg)
    for x in np.random.default_rng(0).standard_normal(10_000):
        state, _ = sdar_step(state, [x], cfg)
    assert abs(state.ar_coeffs[0, 0, 0]) < 0.1


def test_scalar_fast_path_matches_generic():
    x = np.random.default_rng(3).standard_normal(400) + np.linspace(0, 3, 400)
    cfg = SdarConfig()
    state = SdarState.initial(1, cfg, mean=x[:1])
    ref = []
    for v in x:
        state, lp = sdar_step(state, [v], cfg)
        ref.append(-lp)
    np.testing.assert_allclose(outlier_scores(x, cfg), ref, rtol=1e-10)


def test_rejects_non_finite():
    cfg = SdarConfig()
    with pytest.raises(ValueError):
        sdar_step(SdarState.initial(1, cfg), [np.nan], cfg)
    with pytest.raises(ValueError):
        outlier_scores([0.0, np.inf])


@pytest.mark.parametrize("kw", [{"order": 0}, {"discount": 0.0}, {"discount": 1.0},
                                {"variance_floor": 0.0}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SdarConfig(**kw)


# ---------------------------------------------------------------- outlier_scores

def test_constant_series_converges():
    s = outlier_scores(np.full(10_000, 3.0))
    assert np.all(np.isfinite(s))
    assert np.std(s[-2500:]) <= 0.1


def test_iid_mean_score():
    s = outlier_scores(np.random.default_rng(1).standard_normal(5000))
    assert 0.8 <= s[2500:].mean() <= 1.6


def test_spike_is_maximum():
    x = np.random.default_rng(2).standard_normal(3000)
    x[1700] += 8.0
    assert int(np.argmax(outlier_scores(x))) == 1700


def test_multivariate_scores():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((2000, 3))
    X[1000:, 1] += 6.0
    s = outlier_scores(X)
    assert s.shape == (2000,) and np.all(np.isfinite(s))
    assert int(np.argmax(s[500:])) + 500 in range(1000, 1010)


# ---------------------------------------------------------------- smoothing

def test_smooth_examples():
    np.testing.assert_array_equal(smooth([0.0, 2.0, 4.0], 2), [0.0, 1.0, 3.0])
    x = np.random.default_rng(0).normal(size=50)
    np.testing.assert_array_equal(smooth(x, 1), x)
    np.testing.assert_allclose(smooth(np.full(30, 2.5), 7), 2.5)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=200), st.integers(1, 60))
def test_smooth_contraction(values, T):
    s = np.array(values)
    y = smooth(s, T)
    tol = 1e-9 * max(1.0, np.max(np.abs(s)))
    assert y.max() <= s.max() + tol and y.min() >= s.min() - tol


def test_smooth_bad_window():
    with pytest.raises(ValueError):
        smooth([1.0, 2.0], 0)


# ---------------------------------------------------------------- change scores

def test_iid_no_false_alarm():
    sc = change_scores(np.random.default_rng(11).standard_normal(5000))
    assert sc.change[1000:].max() < threshold_value(sc.change)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_mean_shift_located(seed):
    sc = change_scores(shifted(seed))
    assert 2500 <= int(np.argmax(sc.change)) <= 2550


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_variance_shift_located(seed):
    sc = change_scores(shifted(seed, delta=0.0, scale_after=4.0))
    assert 2500 <= int(np.argmax(sc.change)) <= 2550


def test_monotone_shift_response():
    peaks = [change_scores(shifted(5, d)).change[cf.DEFAULT_WARMUP:].max() for d in (1, 2, 5)]
    assert peaks[0] <= peaks[1] <= peaks[2]


def test_deterministic():
    x = shifted(8)
    a, b = change_scores(x), change_scores(x)
    for f in ("outlier", "smoothed", "stage2", "change"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))


def test_table_columns():
    sc = change_scores(shifted(0, L=600, at=300))
    tab = sc.table()
    assert tab.shape == (600, 4)
    np.testing.assert_array_equal(tab[:, 0], np.arange(600))
    np.testing.assert_array_equal(tab[:, 3], sc.change)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=300))
def test_finite_for_finite_input(values):
    sc = change_scores(np.array(values))
    assert np.all(np.isfinite(sc.change)) and np.all(np.isfinite(sc.outlier))


def test_constant_series_finite():
    sc = change_scores(np.zeros(3000))
    assert np.all(np.isfinite(sc.change))


# ---------------------------------------------------------------- extraction

def test_single_peak():
    assert extract_change_points([0, 0, 10, 0, 0], threshold=5, warmup=0) == [2]


def test_all_zero():
    assert extract_change_points(np.zeros(100), warmup=0) == []


def test_separation_rule():
    s = np.zeros(300)
    s[100], s[105] = 10.0, 9.0
    assert extract_change_points(s, threshold=5, min_separation=10, warmup=0) == [100]


def test_peaks_inside_warmup_ignored():
    s = np.zeros(500)
    s[10], s[400] = 50.0, 20.0
    assert extract_change_points(s, threshold=5, warmup=250) == [400]


def test_quantile_policy():
    s = np.zeros(400)
    s[300] = 3.0
    assert threshold_value(s, quantile=0.5, warmup=0) == 0.0
    assert extract_change_points(s, quantile=0.99, warmup=0) == [300]


def test_short_series_threshold_infinite():
    assert threshold_value(np.ones(10), warmup=250) == np.inf


@pytest.mark.parametrize("kw", [{"min_separation": 0}, {"min_separation": 2.5},
                                {"warmup": -1}])
def test_extraction_validation(kw):
    with pytest.raises(ValueError):
        extract_change_points(np.zeros(10), threshold=1.0, **kw)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 100), min_size=1, max_size=300), st.integers(1, 40))
def test_extraction_sorted_and_separated(values, sep):
    cps = extract_change_points(np.array(values), threshold=10.0, min_separation=sep,
                                warmup=0)
    assert cps == sorted(cps)
    assert all(b - a >= sep for a, b in zip(cps, cps[1:]))
    assert all(values[c] > 10.0 for c in cps)
