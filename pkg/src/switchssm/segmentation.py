"""Split-and-regroup forecasting on top of a frozen diagonal SSM readout.

The series is cut at ChangeFinder change points, segments with similar mean
and spread are grouped, each group is stitched into one training set with short
linear bridges, and the group closest to the most recent data is used to fit a
least-squares readout over frozen S4D-Inv features.  Forecasts are produced by
masking the future with zeros and running one forward pass.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg

from . import changefinder as cf
from .fftconv import fft_convolve
from .ssm import ZOH, DiscretizedSSM, discretize, s4d_inv_ssm, vandermonde

FEATURE_EPS = 1e-9
READOUT_RIDGE = 1e-6


@dataclass(frozen=True)
class Segment:
    start: int
    end: int
    values: np.ndarray

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ValueError(f"bad segment bounds [{self.start}, {self.end})")
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.shape[0] != self.end - self.start:
            raise ValueError("segment values do not match its bounds")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.end - self.start


@dataclass(frozen=True)
class SegmentFeatures:
    mean: float
    std: float


@dataclass(frozen=True)
class MergedDataset:
    values: np.ndarray
    source_segments: tuple
    # half-open (start, end) index ranges of interpolated points
    bridge_spans: tuple = ()

    def bridge_mask(self):
        m = np.zeros(self.values.shape[0], dtype=bool)
        for a, b in self.bridge_spans:
            m[a:b] = True
        return m

    def source_values(self):
        return self.values[~self.bridge_mask()]


def split_at_change_points(series, cps):
    """Contiguous segments between consecutive change points."""
    x = np.asarray(series, dtype=float).reshape(-1)
    L = x.shape[0]
    cps = [int(c) for c in cps]
    if any(b <= a for a, b in zip(cps, cps[1:])):
        raise ValueError("change points must be strictly increasing")
    if cps and (cps[0] <= 0 or cps[-1] >= L):
        raise ValueError(f"change points must lie strictly inside (0, {L})")
    edges = [0] + cps + [L]
    return [Segment(a, b, x[a:b]) for a, b in zip(edges, edges[1:])]


def features_of(values):
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.size == 0:
        raise ValueError("empty segment")
    return SegmentFeatures(float(v.mean()), float(v.std()))


def segment_features(seg):
    """Population mean and standard deviation."""
    return features_of(seg.values if isinstance(seg, Segment) else seg)


def _similar(f, g, alpha, rho):
    pooled = np.sqrt(0.5 * (f.std ** 2 + g.std ** 2))
    if abs(f.mean - g.mean) > alpha * max(pooled, FEATURE_EPS):
        return False
    lo, hi = sorted((f.std, g.std))
    return hi / max(lo, FEATURE_EPS) <= rho


def group_segments(features, alpha=0.5, rho=1.5):
    """Greedy single pass: join the first compatible group, else start a new one.

    A group's representative is the running mean of its members' features.
    Returns the group id of every segment, ids numbered in order of creation.
    """
    if not alpha > 0 or not rho >= 1:
        raise ValueError("need alpha > 0 and rho >= 1")
    reps, counts, assign = [], [], []
    for f in features:
        for g, rep in enumerate(reps):
            if _similar(f, rep, alpha, rho):
                n = counts[g]
                reps[g] = SegmentFeatures((rep.mean * n + f.mean) / (n + 1),
                                          (rep.std * n + f.std) / (n + 1))
                counts[g] += 1
                assign.append(g)
                break
        else:
            reps.append(f)
            counts.append(1)
            assign.append(len(reps) - 1)
    return assign


def merge_group(segments, gap=10, ids=None):
    """Concatenate segments with ``gap`` interpolated points between neighbours.

    Bridge values are evenly spaced strictly between the last value of one
    segment and the first value of the next.
    """
    gap = int(gap)
    if gap < 0:
        raise ValueError("gap must be >= 0")
    if not segments:
        raise ValueError("nothing to merge")
    starts = [s.start for s in segments]
    if starts != sorted(starts):
        raise ValueError("segments must be ordered by start index")
    ids = tuple(range(len(segments))) if ids is None else tuple(int(i) for i in ids)
    parts, spans, pos = [], [], 0
    for i, seg in enumerate(segments):
        if i and gap:
            lo, hi = segments[i - 1].values[-1], seg.values[0]
            parts.append(np.linspace(lo, hi, gap + 2)[1:-1])
            spans.append((pos, pos + gap))
            pos += gap
        parts.append(seg.values)
        pos += len(seg)
    return MergedDataset(np.concatenate(parts), ids, tuple(spans))


def match_group_to_recent(groups, series, window):
    """Group whose (mean, std) is nearest to that of the last ``window`` points.

    Group features ignore bridge points.  Ties go to the lowest group id.
    """
    x = np.asarray(series, dtype=float).reshape(-1)
    window = int(window)
    if not 1 <= window <= x.shape[0]:
        raise ValueError(f"window must be in [1, {x.shape[0]}]")
    tail = features_of(x[-window:])
    best, best_d = 0, np.inf
    for g, data in enumerate(groups):
        f = features_of(data.source_values())
        d = np.hypot(f.mean - tail.mean, f.std - tail.std)
        if d < best_d:
            best, best_d = g, d
    return best


@dataclass(frozen=True)
class ReadoutConfig:
    state_dim: int = 16
    channels: int = 4
    dt_min: float = 0.03
    dt_max: float = 1.0
    depth: int = 1
    # number of masked future steps each training prefix is scored on
    horizon: int = 1
    standardize: bool = True
    exclude_bridges: bool = False

    def __post_init__(self):
        if self.depth != 1:
            raise ValueError("only single-layer readouts are supported")
        if self.state_dim < 1 or self.channels < 1 or self.horizon < 1:
            raise ValueError("state_dim, channels and horizon must be positive")
        if not 0 < self.dt_min <= self.dt_max:
            raise ValueError("need 0 < dt_min <= dt_max")


@dataclass(frozen=True)
class ReadoutModel:
    """Frozen per-channel SSMs with a learned linear readout.

    The output is ``sum_h Re(C_h x_h) + D_h u + bias`` on the standardized
    input ``u``; the decoder weights over channels are absorbed into ``C``.
    """

    ssm_stack: tuple
    C: np.ndarray  # (H, N) complex
    D: np.ndarray  # (H,)
    bias: float
    input_mean: float
    input_scale: float
    config: ReadoutConfig
    train_mse: float = float("nan")

    @property
    def feature_dim(self):
        return len(self.ssm_stack)

    @property
    def depth(self):
        return self.config.depth


def build_ssm_stack(config: ReadoutConfig):
    """One S4D-Inv system per channel with ZOH steps log-spaced over the range."""
    steps = np.geomspace(config.dt_min, config.dt_max, config.channels)
    base = s4d_inv_ssm(config.state_dim, C=np.ones(config.state_dim, dtype=complex))
    return tuple(discretize(base, dt, ZOH) for dt in steps)


def channel_states(stack, u):
    """``(L, H*N)`` complex states of every channel driven by ``u``.

    Each mode's state is the causal convolution of ``u`` with ``Abar^i Bbar``.
    """
    u = np.asarray(u, dtype=float).reshape(-1)
    L = u.shape[0]
    kernels = np.concatenate([(d.Bbar[:, None] * vandermonde(d.Abar, L)) for d in stack])
    return fft_convolve(kernels, u[None, :]).T


def _stack_powers(stack):
    return np.concatenate([d.Abar for d in stack])


def _real_features(Z):
    return np.concatenate([Z.real, Z.imag, np.ones((Z.shape[0], 1))], axis=1)


def _solve_ridge(G, r, n):
    # Mean squared loss plus a ridge on every coefficient but the bias (last).
    # Columns are scaled to unit second moment first so the ridge is scale free.
    d = np.sqrt(np.diag(G) / n)
    # numerically empty columns (imaginary part of a real mode) stay unscaled
    d[d <= 1e-12 * max(d.max(), 1.0)] = 1.0
    A = G / n / np.outer(d, d)
    reg = np.full(G.shape[0], READOUT_RIDGE)
    reg[-1] = 0.0
    A = A + np.diag(reg)
    b = r / n / d
    try:
        z = linalg.solve(A, b, assume_a="pos")
    except linalg.LinAlgError:
        z = linalg.lstsq(A, b)[0]
    return z / d


def _unpack(theta, stack, config):
    H, N = len(stack), config.state_dim
    M = H * N
    c = theta[:M] - 1j * theta[M:2 * M]
    return c.reshape(H, N), float(theta[-1])


def fit_readout(data, config: ReadoutConfig = ReadoutConfig(), target=None):
    """Least-squares readout over frozen S4D-Inv features.

    Without ``target`` the model is trained to forecast: for every prefix end
    ``t`` and masked step ``j = 1..horizon`` the output at ``t + j`` (inputs
    after ``t`` set to zero) is regressed on the value at ``t + j``.  With
    ``target`` the unmasked output at every step is regressed on ``target``,
    which also fits the skip term ``D``.
    """
    is_merged = isinstance(data, MergedDataset)
    x = np.asarray(data.values if is_merged else data, dtype=float).reshape(-1)
    N = config.state_dim
    if x.shape[0] < 2 * N:
        raise ValueError(f"need at least {2 * N} points, got {x.shape[0]}")
    mu, scale = 0.0, 1.0
    if config.standardize:
        mu = float(x.mean())
        sd = float(x.std())
        scale = sd if sd > 0 else 1.0
    u = (x - mu) / scale
    stack = build_ssm_stack(config)
    S = channel_states(stack, u)
    H, L = len(stack), u.shape[0]

    if target is not None:
        y = (np.asarray(target, dtype=float).reshape(-1) - mu) / scale
        if y.shape[0] != L:
            raise ValueError("target length must match data length")
        # columns: Re x, Im x, skip, bias
        F = np.concatenate([S.real, S.imag, u[:, None], np.ones((L, 1))], axis=1)
        theta = _solve_ridge(F.T @ F, F.T @ y, L)
        resid = F @ theta - y
        C, bias = _unpack(np.delete(theta, -2), stack, config)
        D = np.full(H, theta[-2] / H)
        mse = float(np.mean(resid ** 2)) * scale ** 2
        return ReadoutModel(stack, C, D, bias, mu, scale, config, mse)

    keep = np.ones(L, dtype=bool)
    if is_merged and config.exclude_bridges:
        keep = ~data.bridge_mask()
    lam = _stack_powers(stack)
    dim = 2 * lam.shape[0] + 1
    G = np.zeros((dim, dim))
    r = np.zeros(dim)
    yy, n = 0.0, 0
    P = np.ones_like(lam)
    for j in range(1, min(config.horizon, L - 1) + 1):
        P = P * lam
        rows = keep[j:]
        Fj = _real_features(S[:L - j][rows] * P)
        yj = u[j:][rows]
        G += Fj.T @ Fj
        r += Fj.T @ yj
        yy += float(yj @ yj)
        n += yj.shape[0]
    if n == 0:
        raise ValueError("no training rows left after excluding bridges")
    theta = _solve_ridge(G, r, n)
    sse = max(yy - 2.0 * theta @ r + theta @ G @ theta, 0.0)
    C, bias = _unpack(theta, stack, config)
    return ReadoutModel(stack, C, np.zeros(H), bias, mu, scale, config, sse / n * scale ** 2)


def forward(model: ReadoutModel, u_std):
    """Model output (standardized units) for a standardized input sequence."""
    u = np.asarray(u_std, dtype=float).reshape(-1)
    S = channel_states(model.ssm_stack, u)
    y = np.real(S @ model.C.reshape(-1)) + model.D.sum() * u + model.bias
    return y


def predict_masked(model: ReadoutModel, past, horizon):
    """Forecast ``horizon`` steps: feed ``past`` then zeros, keep the last outputs.

    The zeros are placed in the standardized input space, so the mask reads as
    "no information" rather than as an observed value of 0.
    """
    horizon = int(horizon)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    past = np.asarray(past, dtype=float).reshape(-1)
    if past.shape[0] < 1:
        raise ValueError("need at least one past value")
    u = np.concatenate([(past - model.input_mean) / model.input_scale, np.zeros(horizon)])
    y = forward(model, u)[-horizon:]
    return y * model.input_scale + model.input_mean


@dataclass(frozen=True)
class SplitConfig:
    stage1: cf.SdarConfig = cf.SdarConfig()
    stage2: cf.SdarConfig = cf.SdarConfig()
    window: int = 25
    kappa: float = cf.DEFAULT_KAPPA
    quantile: float | None = None
    warmup: int = cf.DEFAULT_WARMUP
    min_separation: int = 50
    alpha: float = 0.5
    rho: float = 1.5
    gap: int = 10
    # tail window for matching; None means the last segment
    recent_window: int | None = None
    readout: ReadoutConfig = ReadoutConfig()

    def to_dict(self):
        return asdict(self)


@dataclass
class PipelineReport:
    change_points: list
    groups: list
    chosen_group: int
    mse_train: float
    mse_test: float | None = None
    split: bool = True
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d.update(d.pop("extra"))
        return d


def s4_split_pipeline(series, horizon, cfg: SplitConfig = SplitConfig(), test=None,
                      split=True):
    """Forecast ``horizon`` steps past the end of ``series``.

    With ``split`` the readout is fit on the group of segments most similar to
    the recent data and conditioned on that recent window.  Without it (the
    baseline) the readout is fit on, and conditioned on, the whole series.  If
    ``test`` is given its MSE against the forecast is reported.
    """
    x = np.asarray(series, dtype=float).reshape(-1)
    rcfg = ReadoutConfig(**{**asdict(cfg.readout), "horizon": int(horizon)})
    cps = []
    if split:
        scores = cf.change_scores(x, cfg.stage1, cfg.stage2, cfg.window)
        cps = cf.extract_change_points(scores, kappa=cfg.kappa, quantile=cfg.quantile,
                                       min_separation=cfg.min_separation,
                                       warmup=cfg.warmup)
    segments = split_at_change_points(x, cps)
    feats = [segment_features(s) for s in segments]
    assign = group_segments(feats, cfg.alpha, cfg.rho) if split else [0] * len(segments)
    n_groups = max(assign) + 1
    members = [[i for i, g in enumerate(assign) if g == k] for k in range(n_groups)]
    merged = [merge_group([segments[i] for i in m], cfg.gap, ids=m) for m in members]

    window = cfg.recent_window or len(segments[-1])
    window = min(window, x.shape[0])
    chosen = match_group_to_recent(merged, x, window) if split else 0
    model = fit_readout(merged[chosen], rcfg)
    past = x[-window:] if split else x
    forecast = predict_masked(model, past, horizon)

    mse_test = None
    if test is not None:
        test = np.asarray(test, dtype=float).reshape(-1)[:horizon]
        mse_test = float(np.mean((forecast[:test.shape[0]] - test) ** 2))
    groups = [{"segments": list(m), "features": asdict(features_of(d.source_values())),
               "length": int(d.values.shape[0])} for m, d in zip(members, merged)]
    report = PipelineReport(cps, groups, int(chosen), float(model.train_mse), mse_test,
                            bool(split), {"recent_window": int(window),
                                          "segments": [[s.start, s.end] for s in segments]})
    return forecast, report
