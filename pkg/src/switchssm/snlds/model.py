"""Switching linear dynamical system with input-dependent mode transitions.

Generative model, for ``t = 1..T``::

    s_1 ~ Cat(pi),          s_t | s_{t-1}=j, x_{t-1} ~ Cat(softmax(W_j x_{t-1} + b_j))
    z_1 | s_1=k ~ N(mu0_k, S0_k),  z_t | z_{t-1}, s_t=k ~ N(A_k z_{t-1} + d_k, Q)
    x_t | z_t ~ N(C z_t + e, R)

Every covariance is stored as a lower-triangular factor and used as
``L L^T + floor I``.  The dynamics and emission means can be replaced by fixed
callables for evaluation and sampling; gradients are then not analytic.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Callable

import numpy as np
from scipy.special import log_softmax, softmax

COV_FLOOR = 1e-6
LOG_2PI = np.log(2.0 * np.pi)

# array-valued parameters, in a fixed order
PARAM_NAMES = ("pi_logits", "init_mean", "init_chol", "A", "dyn_bias", "Q_chol",
               "C", "emission_bias", "R_chol", "trans_W", "trans_b")


def covariance(chol):
    """``tril(L) tril(L)^T + floor I`` along the last two axes."""
    L = np.tril(chol)
    d = L.shape[-1]
    return L @ np.swapaxes(L, -1, -2) + COV_FLOOR * np.eye(d)


@dataclass(frozen=True)
class SnldsModel:
    pi_logits: np.ndarray      # (K,)
    init_mean: np.ndarray      # (K, Lz)
    init_chol: np.ndarray      # (K, Lz, Lz)
    A: np.ndarray              # (K, Lz, Lz)
    dyn_bias: np.ndarray       # (K, Lz)
    Q_chol: np.ndarray         # (Lz, Lz)
    C: np.ndarray              # (D, Lz)
    emission_bias: np.ndarray  # (D,)
    R_chol: np.ndarray         # (D, D)
    trans_W: np.ndarray        # (K, K, D)
    trans_b: np.ndarray        # (K, K)
    dynamics_fn: Callable | None = None  # (z_prev (..., Lz), k) -> mean
    emission_fn: Callable | None = None  # z (..., Lz) -> mean

    def __post_init__(self):
        for name in PARAM_NAMES:
            a = np.array(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, a)
        K, Lz, D = self.num_modes, self.state_dim, self.obs_dim
        expect = {
            "pi_logits": (K,), "init_mean": (K, Lz), "init_chol": (K, Lz, Lz),
            "A": (K, Lz, Lz), "dyn_bias": (K, Lz), "Q_chol": (Lz, Lz), "C": (D, Lz),
            "emission_bias": (D,), "R_chol": (D, D), "trans_W": (K, K, D),
            "trans_b": (K, K),
        }
        for name, shape in expect.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, "
                                 f"expected {shape}")

    @property
    def num_modes(self):
        return self.pi_logits.shape[0]

    @property
    def state_dim(self):
        return self.Q_chol.shape[0]

    @property
    def obs_dim(self):
        return self.C.shape[0]

    @property
    def is_linear(self):
        return self.dynamics_fn is None and self.emission_fn is None

    @property
    def Q(self):
        return covariance(self.Q_chol)

    @property
    def R(self):
        return covariance(self.R_chol)

    @property
    def init_cov(self):
        return covariance(self.init_chol)

    @property
    def pi(self):
        return softmax(self.pi_logits)

    def arrays(self):
        return {n: getattr(self, n) for n in PARAM_NAMES}

    def with_arrays(self, **arrays):
        return replace(self, **arrays)

    def dynamics_mean(self, z_prev):
        """``(..., K, Lz)`` per-mode predicted mean of the next state."""
        if self.dynamics_fn is not None:
            return np.stack([self.dynamics_fn(z_prev, k) for k in range(self.num_modes)],
                            axis=-2)
        return np.einsum("kij,...j->...ki", self.A, z_prev) + self.dyn_bias

    def emission_mean(self, z):
        if self.emission_fn is not None:
            return self.emission_fn(z)
        return z @ self.C.T + self.emission_bias


def random_model(K, Lz, D, rng=None, scale=0.3):
    """Small random model with stable dynamics, for tests and demos."""
    rng = np.random.default_rng(rng)
    A = np.empty((K, Lz, Lz))
    for k in range(K):
        M = rng.normal(size=(Lz, Lz))
        A[k] = 0.9 * M / max(np.max(np.abs(np.linalg.eigvals(M))), 1e-9)
    chol = lambda *s: np.tril(scale * rng.normal(size=s)) + np.eye(s[-1]) * 0.5  # noqa: E731
    return SnldsModel(
        pi_logits=rng.normal(size=K),
        init_mean=rng.normal(size=(K, Lz)),
        init_chol=chol(K, Lz, Lz),
        A=A,
        dyn_bias=scale * rng.normal(size=(K, Lz)),
        Q_chol=chol(Lz, Lz),
        C=rng.normal(size=(D, Lz)),
        emission_bias=scale * rng.normal(size=D),
        R_chol=chol(D, D),
        trans_W=scale * rng.normal(size=(K, K, D)),
        trans_b=rng.normal(size=(K, K)),
    )


def mode_transition_logits(model, x_prev):
    """``(..., K, K)`` logits; row ``j`` is ``W_j x_prev + b_j``."""
    return np.einsum("jkd,...d->...jk", model.trans_W, x_prev) + model.trans_b


def mode_transition_matrix(model, x_prev):
    """Row-stochastic ``K x K`` matrix with row ``j`` = softmax of mode ``j``'s logits."""
    x_prev = np.asarray(x_prev, dtype=float)
    if not np.all(np.isfinite(x_prev)):
        raise ValueError("x_prev must be finite")
    return softmax(mode_transition_logits(model, x_prev), axis=-1)


def transition_matrices(model, x):
    """``(T-1, K, K)`` transition matrices driven by ``x_1..x_{T-1}``."""
    x = np.asarray(x, dtype=float)
    return np.exp(log_softmax(mode_transition_logits(model, x[:-1]), axis=-1))


def gaussian_logpdf(y, mean, cov):
    """Log density of ``N(mean, cov)`` at ``y``, broadcasting over leading axes.

    ``cov`` may carry its own leading axes as long as they broadcast against
    ``y - mean``.
    """
    r = y - mean
    Lc = np.linalg.cholesky(cov)
    d = r.shape[-1]
    # the covariances are few and small, invert their factors once
    w = np.einsum("...ij,...j->...i", np.linalg.inv(Lc), r)
    logdet = 2.0 * np.sum(np.log(np.diagonal(Lc, axis1=-2, axis2=-1)), axis=-1)
    return -0.5 * (d * LOG_2PI + logdet + np.sum(w * w, axis=-1))


def local_evidence(model: SnldsModel, x, z):
    """``(..., T, K)`` table of ``log p(z_t | z_{t-1}, s_t=k) + log p(x_t | z_t)``.

    At ``t = 1`` the dynamics term is the initial density of mode ``k``.
    Leading axes of ``z`` (e.g. Monte-Carlo samples) broadcast against ``x``.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if x.shape[-1] != model.obs_dim or z.shape[-1] != model.state_dim:
        raise ValueError("x or z has the wrong trailing dimension")
    if x.shape[-2] != z.shape[-2]:
        raise ValueError("x and z differ in length")
    emis = gaussian_logpdf(x, model.emission_mean(z), model.R)  # (..., T)
    init = gaussian_logpdf(z[..., :1, None, :], model.init_mean, model.init_cov)
    mean = model.dynamics_mean(z[..., :-1, :])                   # (..., T-1, K, Lz)
    dyn = gaussian_logpdf(z[..., 1:, None, :], mean, model.Q)    # (..., T-1, K)
    return np.concatenate([init, dyn], axis=-2) + emis[..., None]


def generate(model: SnldsModel, T, seed=0, x_feedback=True):
    """Ancestral sample ``(x, z, s)`` of length ``T``.

    With ``x_feedback=False`` every transition uses ``x_prev = 0``, so the mode
    chain is homogeneous with matrix ``mode_transition_matrix(model, 0)``.
    """
    T = int(T)
    if T < 1:
        raise ValueError("T must be >= 1")
    rng = np.random.default_rng(seed)
    K, Lz, D = model.num_modes, model.state_dim, model.obs_dim
    LQ = np.linalg.cholesky(model.Q)
    LR = np.linalg.cholesky(model.R)
    L0 = np.linalg.cholesky(model.init_cov)
    x = np.empty((T, D))
    z = np.empty((T, Lz))
    s = np.empty(T, dtype=int)
    zero = np.zeros(D)
    s[0] = rng.choice(K, p=model.pi)
    z[0] = model.init_mean[s[0]] + L0[s[0]] @ rng.standard_normal(Lz)
    x[0] = model.emission_mean(z[0]) + LR @ rng.standard_normal(D)
    for t in range(1, T):
        P = mode_transition_matrix(model, x[t - 1] if x_feedback else zero)
        s[t] = rng.choice(K, p=P[s[t - 1]])
        z[t] = model.dynamics_mean(z[t - 1])[s[t]] + LQ @ rng.standard_normal(Lz)
        x[t] = model.emission_mean(z[t]) + LR @ rng.standard_normal(D)
    return x, z, s


def model_fields():
    return [f.name for f in fields(SnldsModel)]


def rotation_model(theta=0.25, q_std=0.05, r_std=0.05, stay_logit=4.0, radius=4.0):
    """Two modes rotating a planar state in opposite directions.

    Both modes see the same isotropic noise; transitions are sticky with
    self-transition logit ``stay_logit`` and do not depend on ``x``.  The state
    starts on the circle of the given radius.
    """
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    noise = lambda sd: np.eye(2) * np.sqrt(max(sd * sd - COV_FLOOR, 0.0))  # noqa: E731
    return SnldsModel(
        pi_logits=np.zeros(2),
        init_mean=np.tile([radius, 0.0], (2, 1)),
        init_chol=np.tile(noise(0.1), (2, 1, 1)),
        A=np.stack([rot, rot.T]),
        dyn_bias=np.zeros((2, 2)),
        Q_chol=noise(q_std),
        C=np.eye(2),
        emission_bias=np.zeros(2),
        R_chol=noise(r_std),
        trans_W=np.zeros((2, 2, 2)),
        trans_b=np.eye(2) * stay_logit,
    )
