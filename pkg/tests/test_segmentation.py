import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from switchssm import datagen
from switchssm.segmentation import (MergedDataset, ReadoutConfig, ReadoutModel, Segment,
                                    SegmentFeatures, SplitConfig, build_ssm_stack,
                                    channel_states, fit_readout, forward, group_segments,
                                    match_group_to_recent, merge_group, predict_masked,
                                    s4_split_pipeline, segment_features,
                                    split_at_change_points)


def feats(*pairs):
    return [SegmentFeatures(m, s) for m, s in pairs]


# ---------------------------------------------------------------- splitting and features

def test_split_examples():
    x = np.arange(10.0)
    assert [(s.start, s.end) for s in split_at_change_points(x, [4])] == [(0, 4), (4, 10)]
    assert [(s.start, s.end) for s in split_at_change_points(x, [])] == [(0, 10)]
    assert [(s.start, s.end) for s in split_at_change_points(x[:6], [2, 4])] == \
        [(0, 2), (2, 4), (4, 6)]


@pytest.mark.parametrize("cps", [[4, 2], [0], [10], [3, 3]])
def test_split_rejects_bad_cuts(cps):
    with pytest.raises(ValueError):
        split_at_change_points(np.arange(10.0), cps)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 300), st.data())
def test_split_partitions(L, data):
    cps = sorted(data.draw(st.sets(st.integers(1, max(L - 1, 1)), max_size=10))) if L > 1 else []
    x = np.arange(L, dtype=float)
    segs = split_at_change_points(x, cps)
    assert segs[0].start == 0 and segs[-1].end == L
    assert all(a.end == b.start for a, b in zip(segs, segs[1:]))
    np.testing.assert_array_equal(np.concatenate([s.values for s in segs]), x)


def test_feature_examples():
    def f(v):
        return segment_features(Segment(0, len(v), np.array(v, dtype=float)))

    assert (f([1, 1, 1]).mean, f([1, 1, 1]).std) == (1.0, 0.0)
    assert (f([0, 2]).mean, f([0, 2]).std) == (1.0, 1.0)
    assert (f([-3, 3]).mean, f([-3, 3]).std) == (0.0, 3.0)


# ---------------------------------------------------------------- grouping

def test_identical_features_one_group():
    assert group_segments(feats((1, 1), (1, 1), (1, 1))) == [0, 0, 0]


def test_distant_means_split():
    assert group_segments(feats((0, 1), (100, 1)), alpha=0.5) == [0, 1]


def test_alternating_regimes():
    assert group_segments(feats((0, 1), (5, 1), (0, 1)), alpha=0.5, rho=1.5) == [0, 1, 0]


def test_std_ratio_splits():
    assert group_segments(feats((0, 1), (0, 3)), alpha=0.5, rho=1.5) == [0, 1]


# ---------------------------------------------------------------- merging

def seg(start, values):
    v = np.array(values, dtype=float)
    return Segment(start, start + len(v), v)


def test_bridge_midpoint():
    m = merge_group([seg(0, [0.0, 1.0]), seg(5, [3.0, 4.0])], gap=1)
    np.testing.assert_allclose(m.values, [0, 1, 2, 3, 4])
    assert m.bridge_spans == ((2, 3),)


def test_no_gap_is_concatenation():
    m = merge_group([seg(0, [0.0, 1.0]), seg(5, [3.0])], gap=0)
    np.testing.assert_array_equal(m.values, [0, 1, 3])
    assert not m.bridge_mask().any()


def test_bridge_linear_spacing():
    m = merge_group([seg(0, [0.0]), seg(3, [1.0])], gap=3)
    np.testing.assert_allclose(m.values, [0, 0.25, 0.5, 0.75, 1.0])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(st.floats(-100, 100), min_size=1, max_size=20), min_size=1,
                max_size=6), st.integers(0, 12))
def test_merge_cover_and_affine_bridges(parts, gap):
    segs, pos = [], 0
    for p in parts:
        segs.append(seg(pos, p))
        pos += len(p) + 3
    m = merge_group(segs, gap=gap)
    np.testing.assert_array_equal(np.sort(m.source_values()), np.sort(np.concatenate(parts)))
    assert m.values.shape[0] == sum(map(len, parts)) + gap * (len(parts) - 1)
    for a, b in m.bridge_spans:
        # the two neighbours plus the bridge lie on one line
        w = m.values[a - 1:b + 1]
        if w.shape[0] >= 3:
            assert np.max(np.abs(np.diff(w, 2))) <= 1e-9 * max(1.0, np.max(np.abs(w)))


# ---------------------------------------------------------------- matching

def test_match_tail_from_group():
    rng = np.random.default_rng(0)
    A = MergedDataset(rng.normal(0, 1, 800), (0,))
    B = MergedDataset(rng.normal(4, 0.5, 800), (1,))
    tail = rng.normal(4, 0.5, 100)
    series = np.concatenate([rng.normal(0, 1, 500), tail])
    assert match_group_to_recent([A, B], series, 100) == 1
    assert match_group_to_recent([B, A], series, 100) == 0


def test_match_single_group():
    assert match_group_to_recent([MergedDataset(np.zeros(5), (0,))], np.ones(10), 3) == 0


def test_match_tie_lowest_id():
    d = MergedDataset(np.array([0.0, 2.0]), (0,))
    assert match_group_to_recent([d, d], np.array([1.0, 1.0]), 2) == 0


# ---------------------------------------------------------------- readout

def test_planted_single_mode_kernel():
    cfg = ReadoutConfig(state_dim=1, channels=1, dt_min=0.5, dt_max=0.5, standardize=False)
    u = np.random.default_rng(0).standard_normal(2000)
    S = channel_states(build_ssm_stack(cfg), u)
    y = 0.7 * S[:, 0].real + 0.3 * u - 0.2
    m = fit_readout(u, cfg, target=y)
    assert abs(m.C[0, 0].real - 0.7) <= 1e-6
    assert abs(m.D.sum() - 0.3) <= 1e-6 and abs(m.bias + 0.2) <= 1e-6
    np.testing.assert_allclose(forward(m, u), y, atol=1e-5)


def test_zero_target():
    u = np.random.default_rng(1).standard_normal(500)
    m = fit_readout(u, ReadoutConfig(), target=np.zeros(500))
    assert m.train_mse <= 1e-12
    y = forward(m, (u - m.input_mean) / m.input_scale) * m.input_scale + m.input_mean
    assert np.max(np.abs(y)) <= 1e-6


def test_zero_series_forecast_mode():
    m = fit_readout(np.zeros(300), ReadoutConfig(horizon=5))
    assert m.train_mse <= 1e-12
    np.testing.assert_allclose(predict_masked(m, np.zeros(50), 5), 0, atol=1e-12)


def test_white_noise_target_bounded_by_variance():
    rng = np.random.default_rng(2)
    u, y = rng.standard_normal((2, 1000))
    m = fit_readout(u, ReadoutConfig(), target=y)
    assert m.train_mse <= np.var(y)


def test_forecast_mse_bounded_by_variance():
    x = np.random.default_rng(3).standard_normal(1500)
    m = fit_readout(x, ReadoutConfig(horizon=20))
    assert m.train_mse <= np.var(x) * (1 + 1e-9)


def zero_model():
    stack = build_ssm_stack(ReadoutConfig())
    return ReadoutModel(stack, np.zeros((4, 16), complex), np.zeros(4), 0.0, 0.0, 1.0,
                        ReadoutConfig())


def test_zero_model_forecast():
    np.testing.assert_array_equal(predict_masked(zero_model(), np.arange(30.0), 7), 0)


def test_horizon_validation_and_single_step():
    rng = np.random.default_rng(4)
    x = np.sin(np.arange(600) * 0.1) + 0.1 * rng.standard_normal(600)
    m = fit_readout(x, ReadoutConfig(horizon=3))
    with pytest.raises(ValueError):
        predict_masked(m, x, 0)
    past = x[-80:]
    u = np.concatenate([(past - m.input_mean) / m.input_scale, [0.0]])
    expect = forward(m, u)[80] * m.input_scale + m.input_mean
    assert predict_masked(m, past, 1)[0] == pytest.approx(expect, rel=1e-12)


def test_sinusoid_continuation():
    t = np.arange(1000)
    x = np.sin(2 * np.pi * t / 50)
    m = fit_readout(x[:900], ReadoutConfig(horizon=20))
    f = predict_masked(m, x[:900], 20)
    assert np.mean((f - x[900:920]) ** 2) <= 0.1 * np.mean(x ** 2)


def test_frozen_core():
    cfg = ReadoutConfig()
    before = build_ssm_stack(cfg)
    m = fit_readout(np.random.default_rng(5).standard_normal(400), cfg)
    for a, b in zip(before, m.ssm_stack):
        np.testing.assert_array_equal(a.Abar, b.Abar)
        np.testing.assert_array_equal(a.Bbar, b.Bbar)


def test_exclude_bridges_changes_rows():
    segs = [seg(0, np.sin(np.arange(200) * 0.2)), seg(400, 3 + np.sin(np.arange(200) * 0.2))]
    m = merge_group(segs, gap=10)
    a = fit_readout(m, ReadoutConfig(horizon=4))
    b = fit_readout(m, ReadoutConfig(horizon=4, exclude_bridges=True))
    assert a.train_mse != b.train_mse


@pytest.mark.parametrize("kw", [{"depth": 2}, {"state_dim": 0}, {"dt_min": 2.0},
                                {"horizon": 0}])
def test_readout_config_validation(kw):
    with pytest.raises(ValueError):
        ReadoutConfig(**kw)


def test_readout_needs_enough_points():
    with pytest.raises(ValueError):
        fit_readout(np.zeros(10), ReadoutConfig())


# ---------------------------------------------------------------- pipeline

def test_stationary_series_degrades_to_plain_fit():
    x = np.random.default_rng(6).standard_normal(3000)
    f_split, r_split = s4_split_pipeline(x, 50)
    f_plain, _ = s4_split_pipeline(x, 50, split=False)
    assert r_split.change_points == []
    np.testing.assert_array_equal(f_split, f_plain)


def two_regime(seed):
    plan = datagen.two_regime_blocks(seed)
    return datagen.gen_switching_gaussian(plan["blocks"], seed=seed).values[:, 0]


def test_two_regime_split_not_worse():
    x = two_regime(0)
    train, test = x[:-200], x[-200:]
    _, rs = s4_split_pipeline(train, 200, test=test)
    _, rn = s4_split_pipeline(train, 200, test=test, split=False)
    assert rs.mse_test <= rn.mse_test


def test_pipeline_deterministic():
    x = two_regime(1)
    a = s4_split_pipeline(x[:-100], 100, test=x[-100:])
    b = s4_split_pipeline(x[:-100], 100, test=x[-100:])
    np.testing.assert_array_equal(a[0], b[0])
    assert a[1].to_dict() == b[1].to_dict()


def test_report_fields():
    x = two_regime(2)
    _, r = s4_split_pipeline(x[:-100], 100, SplitConfig(), test=x[-100:])
    d = r.to_dict()
    for key in ("change_points", "groups", "chosen_group", "mse_train", "mse_test"):
        assert key in d
    assert all({"segments", "features"} <= set(g) for g in d["groups"])
