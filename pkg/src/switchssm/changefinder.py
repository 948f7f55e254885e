"""Online SDAR estimation and two-stage ChangeFinder scoring.

SDAR keeps exponentially discounted moments (mean and lag autocovariances
``0..k``) and re-solves the Yule-Walker equations after every observation.
Stage one scores each point by its negative predictive log density, the scores
are averaged over a window, a second SDAR is run on the averaged stream and its
scores averaged again to give the change score.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LOG_2PI = np.log(2.0 * np.pi)
YULE_WALKER_RIDGE = 1e-8
DEFAULT_DISCOUNT = 0.005
DEFAULT_KAPPA = 5.0
# leading steps excluded from threshold statistics and peak candidates
DEFAULT_WARMUP = 250


@dataclass(frozen=True)
class SdarConfig:
    order: int = 2
    discount: float = DEFAULT_DISCOUNT
    variance_floor: float = 1e-6

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 1:
            raise ValueError("AR order must be a positive integer")
        if not 0.0 < self.discount < 1.0:
            raise ValueError("discount must lie in (0, 1)")
        if not self.variance_floor > 0:
            raise ValueError("variance floor must be positive")


@dataclass(frozen=True)
class SdarState:
    """Value-type SDAR state for a ``d``-dimensional stream.

    ``autocov[j]`` is the discounted estimate of ``E[(x_t - mu)(x_{t-j} - mu)^T]``
    and ``ar_coeffs[i]`` is ``A_{i+1}``.  ``noise_var`` holds the diagonal of the
    innovation covariance.  ``history`` keeps the last ``k`` observations, most
    recent first.
    """

    mean: np.ndarray
    ar_coeffs: np.ndarray
    noise_var: np.ndarray
    autocov: np.ndarray
    history: tuple = ()
    n_seen: int = 0

    @classmethod
    def initial(cls, dim, config: SdarConfig, mean=None, var=1.0):
        """Prior model ``N(mean, var I)`` with zero AR coefficients."""
        k = config.order
        mean = np.zeros(dim) if mean is None else np.asarray(mean, float).reshape(dim)
        return cls(
            mean=mean.copy(),
            ar_coeffs=np.zeros((k, dim, dim)),
            noise_var=np.full(dim, float(var)),
            autocov=np.zeros((k + 1, dim, dim)),
        )

    @property
    def noise_cov(self):
        return np.diag(self.noise_var)

    def predict(self):
        """Predictive mean ``w_t`` given the stored history."""
        w = self.mean.copy()
        for A, past in zip(self.ar_coeffs, self.history):
            w += A @ (past - self.mean)
        return w


def _gaussian_logpdf_diag(x, mean, var):
    r = x - mean
    return -0.5 * float(np.sum(LOG_2PI + np.log(var) + r * r / var))


def _solve_yule_walker(autocov, k, dim):
    # Gamma block (i, j) = C_{j-i}, with C_{-m} = C_m^T; solve W Gamma = [C_1 .. C_k]
    G = np.empty((k * dim, k * dim))
    for i in range(k):
        for j in range(k):
            m = j - i
            blk = autocov[m] if m >= 0 else autocov[-m].T
            G[i * dim:(i + 1) * dim, j * dim:(j + 1) * dim] = blk
    rhs = np.concatenate([autocov[i + 1] for i in range(k)], axis=1)
    G = G + YULE_WALKER_RIDGE * np.eye(k * dim)
    W = np.linalg.solve(G.T, rhs.T).T
    return W.reshape(dim, k, dim).transpose(1, 0, 2)


def sdar_step(state: SdarState, x, config: SdarConfig):
    """Score ``x`` under the current model, then update the model.

    Returns ``(new_state, log_density)``.  Until ``k`` observations have been
    seen the density is the model's marginal ``N(mean, noise_var)``.  The
    noise variance is tracked from the predictive residual ``x - w_t``, which
    keeps it calibrated to what the score actually measures.
    """
    x = np.asarray(x, dtype=float).reshape(state.mean.shape)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite observation")
    k, floor = config.order, config.variance_floor
    r = config.discount
    dim = x.shape[0]

    warm = len(state.history) < k
    w_prior = state.mean if warm else state.predict()
    logp = _gaussian_logpdf_diag(x, w_prior, state.noise_var + floor)

    mean = (1.0 - r) * state.mean + r * x
    dx = x - mean
    autocov = state.autocov.copy()
    autocov[0] = (1.0 - r) * autocov[0] + r * np.outer(dx, dx)
    for j, past in enumerate(state.history[:k], start=1):
        autocov[j] = (1.0 - r) * autocov[j] + r * np.outer(dx, past - mean)

    ar = state.ar_coeffs
    if len(state.history) >= k:
        ar = _solve_yule_walker(autocov, k, dim)
    resid = x - w_prior
    noise_var = (1.0 - r) * state.noise_var + r * resid * resid

    history = (x,) + state.history[: k - 1]
    new = SdarState(mean, ar, noise_var, autocov, history, state.n_seen + 1)
    return new, logp


def _as_2d(series):
    a = np.asarray(series, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[0] < 1:
        raise ValueError("series must be a non-empty (L,) or (L, d) array")
    return a


def outlier_scores(series, config: SdarConfig = SdarConfig(), state=None):
    """Per-step ``-log p_{t-1}(x_t | x^{t-1})``.

    The prior model is centred on the first observation with unit variance
    unless an initial ``state`` is given.
    """
    X = _as_2d(series)
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite observation")
    if state is None:
        state = SdarState.initial(X.shape[1], config, mean=X[0])
    if X.shape[1] == 1:
        return _scalar_scores(X[:, 0], config, state)
    out = np.empty(X.shape[0])
    for t, x in enumerate(X):
        state, logp = sdar_step(state, x, config)
        out[t] = -logp
    return out


def _scalar_scores(x, config, state):
    # same arithmetic as sdar_step, specialised to d = 1 with python floats
    k, r, floor = config.order, config.discount, config.variance_floor
    q = 1.0 - r
    mu = float(state.mean[0])
    var = float(state.noise_var[0])
    C = [float(c) for c in state.autocov[:, 0, 0]]
    a = [float(v) for v in state.ar_coeffs[:, 0, 0]]
    hist = [float(h[0]) for h in state.history]
    lags = np.arange(k)
    toeplitz_idx = np.abs(lags[:, None] - lags[None, :])
    ridge = YULE_WALKER_RIDGE * np.eye(k)
    out = np.empty(x.shape[0])
    for t in range(x.shape[0]):
        xt = float(x[t])
        if len(hist) < k:
            w = mu
        else:
            w = mu
            for i in range(k):
                w += a[i] * (hist[i] - mu)
        v = var + floor
        e = xt - w
        out[t] = 0.5 * (LOG_2PI + np.log(v) + e * e / v)

        mu = q * mu + r * xt
        dx = xt - mu
        C[0] = q * C[0] + r * dx * dx
        for j in range(min(len(hist), k)):
            C[j + 1] = q * C[j + 1] + r * dx * (hist[j] - mu)
        if len(hist) >= k:
            Carr = np.asarray(C)
            a = list(np.linalg.solve(Carr[toeplitz_idx] + ridge, Carr[1:]))
        var = q * var + r * e * e
        hist.insert(0, xt)
        del hist[k:]
    return out


def smooth(scores, T):
    """Trailing mean over ``T`` points; the first ``T-1`` use the available prefix."""
    T = int(T)
    if T < 1:
        raise ValueError("window must be >= 1")
    s = np.asarray(scores, dtype=float)
    if T == 1:
        return s.copy()
    c = np.concatenate([[0.0], np.cumsum(s)])
    idx = np.arange(1, s.shape[0] + 1)
    lo = np.maximum(idx - T, 0)
    return (c[idx] - c[lo]) / (idx - lo)


@dataclass(frozen=True)
class ScoreSeries:
    outlier: np.ndarray
    smoothed: np.ndarray
    stage2: np.ndarray
    change: np.ndarray
    window: int
    config: dict = field(default_factory=dict)

    def __len__(self):
        return self.change.shape[0]

    def table(self):
        """Columns ``(t, outlier, smoothed, change)`` as an ``(L, 4)`` array."""
        t = np.arange(len(self), dtype=float)
        return np.column_stack([t, self.outlier, self.smoothed, self.change])


def change_scores(series, stage1=SdarConfig(), stage2=SdarConfig(), T=25):
    """Two-stage ChangeFinder scores for an ``(L,)`` or ``(L, d)`` series."""
    s1 = outlier_scores(series, stage1)
    y = smooth(s1, T)
    s2 = outlier_scores(y, stage2)
    change = smooth(s2, T)
    cfg = {
        "stage1": _config_dict(stage1),
        "stage2": _config_dict(stage2),
        "window": int(T),
    }
    return ScoreSeries(s1, y, s2, change, int(T), cfg)


def _config_dict(c: SdarConfig):
    return {"order": c.order, "discount": c.discount, "variance_floor": c.variance_floor}


def threshold_value(score, kappa=DEFAULT_KAPPA, quantile=None, warmup=DEFAULT_WARMUP):
    """Threshold ``mean + kappa * std`` (or an empirical quantile) of the score.

    Statistics use the score after the first ``warmup`` steps, where the online
    estimates are still settling.  Returns ``inf`` when nothing is left.
    """
    s = np.asarray(score, dtype=float)[int(warmup):]
    if s.size == 0:
        return float("inf")
    if quantile is not None:
        return float(np.quantile(s, quantile))
    return float(s.mean() + kappa * s.std())


def local_maxima(s):
    """Indices where ``s`` rises into and does not rise out of a point.

    On a plateau the first index is kept.
    """
    s = np.asarray(s, dtype=float)
    if s.size == 0:
        return np.array([], dtype=int)
    left = np.concatenate([[-np.inf], s[:-1]])
    right = np.concatenate([s[1:], [-np.inf]])
    return np.flatnonzero((s > left) & (s >= right))


def extract_change_points(scores, threshold=None, kappa=DEFAULT_KAPPA, quantile=None,
                          min_separation=50, warmup=DEFAULT_WARMUP):
    """Greedy peak picking on the change score.

    Local maxima at or after ``warmup`` and strictly above the threshold are
    taken in descending order of score, skipping any closer than
    ``min_separation`` to one already chosen.
    """
    s = scores.change if isinstance(scores, ScoreSeries) else np.asarray(scores, float)
    if int(min_separation) != min_separation or min_separation < 1:
        raise ValueError("min_separation must be a positive integer")
    warmup = int(warmup)
    if warmup < 0:
        raise ValueError("warmup must be >= 0")
    if threshold is None:
        threshold = threshold_value(s, kappa=kappa, quantile=quantile, warmup=warmup)
    peaks = local_maxima(s)
    peaks = peaks[(peaks >= warmup) & (s[peaks] > threshold)]
    # stable sort keeps earlier index first among equal scores
    order = peaks[np.argsort(-s[peaks], kind="stable")]
    chosen = []
    for p in order:
        if all(abs(int(p) - c) >= min_separation for c in chosen):
            chosen.append(int(p))
    return sorted(chosen)
