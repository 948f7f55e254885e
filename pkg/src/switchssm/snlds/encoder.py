"""Recurrent Gaussian inference network ``q(z_t | x)``.

Two linear recurrences: an S4-style state ``s_t = Ax s_{t-1} + Bx x_t`` read out
through ``Cx`` and an elementwise activation to give ``h^x_t``, then
``h^z_t = Az h^z_{t-1} + Bz h^x_t``.  Linear heads on ``h^z_t`` give the mean and
log-variance of a diagonal Gaussian.  ``Ax, Bx`` start from the bilinear
discretization of HiPPO-LegS.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..ssm import BILINEAR, ContinuousSSM, discretize, hippo_legs

LOGVAR_CLAMP = 20.0
ENCODER_PARAMS = ("Ax", "Bx", "Cx", "Az", "Bz", "Wm", "bm", "Wv", "bv")
ACTIVATIONS = ("tanh", "identity")


@dataclass(frozen=True)
class Encoder:
    Ax: np.ndarray  # (Nx, Nx)
    Bx: np.ndarray  # (Nx, D)
    Cx: np.ndarray  # (Hx, Nx)
    Az: np.ndarray  # (Hz, Hz)
    Bz: np.ndarray  # (Hz, Hx)
    Wm: np.ndarray  # (Lz, Hz)
    bm: np.ndarray  # (Lz,)
    Wv: np.ndarray  # (Lz, Hz)
    bv: np.ndarray  # (Lz,)
    activation: str = "tanh"
    # also apply the activation to h^z
    hz_activation: bool = False

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        for name in ENCODER_PARAMS:
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float))
        Nx, Hx, Hz = self.Ax.shape[0], self.Cx.shape[0], self.Az.shape[0]
        Lz = self.bm.shape[0]
        ok = (self.Ax.shape == (Nx, Nx) and self.Bx.shape[0] == Nx
              and self.Cx.shape == (Hx, Nx) and self.Az.shape == (Hz, Hz)
              and self.Bz.shape == (Hz, Hx) and self.Wm.shape == (Lz, Hz)
              and self.Wv.shape == (Lz, Hz) and self.bv.shape == (Lz,))
        if not ok:
            raise ValueError("inconsistent encoder parameter shapes")

    @property
    def obs_dim(self):
        return self.Bx.shape[1]

    @property
    def latent_dim(self):
        return self.bm.shape[0]

    def arrays(self):
        return {n: getattr(self, n) for n in ENCODER_PARAMS}

    def with_arrays(self, **arrays):
        return replace(self, **arrays)


def init_encoder(obs_dim, latent_dim, state_dim=8, hidden_x=8, hidden_z=8, step=0.1,
                 rng=None, logvar0=-2.0):
    """Encoder with HiPPO-initialized input recurrence and small random maps."""
    rng = np.random.default_rng(rng)
    A = hippo_legs(state_dim)
    b = np.sqrt(2 * np.arange(state_dim) + 1.0)
    d = discretize(ContinuousSSM.dense(A, b, np.zeros(state_dim)), step, BILINEAR)
    Bx = np.repeat(d.Bbar[:, None], obs_dim, axis=1) / np.sqrt(obs_dim)
    return Encoder(
        Ax=d.Abar, Bx=Bx,
        Cx=rng.normal(size=(hidden_x, state_dim)) / np.sqrt(state_dim),
        Az=0.5 * np.eye(hidden_z),
        Bz=rng.normal(size=(hidden_z, hidden_x)) / np.sqrt(hidden_x),
        Wm=rng.normal(size=(latent_dim, hidden_z)) / np.sqrt(hidden_z),
        bm=np.zeros(latent_dim),
        Wv=np.zeros((latent_dim, hidden_z)),
        bv=np.full(latent_dim, float(logvar0)),
    )


def pinv_encoder(model, logvar=-8.0):
    """Memoryless encoder ``mean_t = C^+ (x_t - e)`` for a linear emission.

    Useful when the generating model is known: with little emission noise it
    recovers ``z`` almost exactly.
    """
    D, Lz = model.obs_dim, model.state_dim
    Cp = np.linalg.pinv(model.C)
    I = np.eye(D)
    return Encoder(
        Ax=np.zeros((D, D)), Bx=I, Cx=I, Az=np.zeros((D, D)), Bz=I,
        Wm=Cp, bm=-Cp @ model.emission_bias,
        Wv=np.zeros((Lz, D)), bv=np.full(Lz, float(logvar)),
        activation="identity",
    )


def _act(name, a):
    return np.tanh(a) if name == "tanh" else a


def _act_grad(name, out):
    return 1.0 - out * out if name == "tanh" else np.ones_like(out)


@dataclass(frozen=True)
class Encoded:
    mean: np.ndarray      # (T, Lz)
    logvar: np.ndarray    # (T, Lz), clamped
    z: np.ndarray         # (S, T, Lz)
    eps: np.ndarray       # (S, T, Lz)
    # intermediate values for the backward pass
    s: np.ndarray
    hx_pre: np.ndarray
    hx: np.ndarray
    hz: np.ndarray
    logvar_raw: np.ndarray


def _recurrence(A, B, u):
    out = np.empty((u.shape[0], A.shape[0]))
    h = np.zeros(A.shape[0])
    for t in range(u.shape[0]):
        h = A @ h + B @ u[t]
        out[t] = h
    return out


def encode(enc: Encoder, x, seed=0, num_samples=1, eps=None):
    """Gaussian parameters per step and reparameterized samples.

    ``eps`` (``(S, T, Lz)`` standard normal) overrides ``seed``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != enc.obs_dim:
        raise ValueError(f"x must be (T, {enc.obs_dim})")
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    T = x.shape[0]
    s = _recurrence(enc.Ax, enc.Bx, x)
    hx_pre = s @ enc.Cx.T
    hx = _act(enc.activation, hx_pre)
    if enc.hz_activation:
        hz = np.empty((T, enc.Az.shape[0]))
        h = np.zeros(enc.Az.shape[0])
        for t in range(T):
            h = _act(enc.activation, enc.Az @ h + enc.Bz @ hx[t])
            hz[t] = h
    else:
        hz = _recurrence(enc.Az, enc.Bz, hx)
    mean = hz @ enc.Wm.T + enc.bm
    logvar_raw = hz @ enc.Wv.T + enc.bv
    logvar = np.clip(logvar_raw, -LOGVAR_CLAMP, LOGVAR_CLAMP)
    if eps is None:
        eps = np.random.default_rng(seed).standard_normal((int(num_samples), T, enc.latent_dim))
    eps = np.asarray(eps, dtype=float)
    z = mean + np.exp(0.5 * logvar) * eps
    return Encoded(mean, logvar, z, eps, s, hx_pre, hx, hz, logvar_raw)


def gaussian_entropy(logvar):
    """Closed-form entropy of a diagonal Gaussian, summed over all entries."""
    return float(np.sum(0.5 * (np.log(2.0 * np.pi * np.e) + logvar)))


def encoder_backward(enc: Encoder, x, out: Encoded, g_mean, g_logvar):
    """Backpropagate ``dL/dmean`` and ``dL/dlogvar`` (post-clamp) to the parameters."""
    x = np.asarray(x, dtype=float)
    T = x.shape[0]
    inside = np.abs(out.logvar_raw) < LOGVAR_CLAMP
    g_lv = np.where(inside, g_logvar, 0.0)
    grads = {"Wm": g_mean.T @ out.hz, "bm": g_mean.sum(0),
             "Wv": g_lv.T @ out.hz, "bv": g_lv.sum(0)}
    g_hz = g_mean @ enc.Wm + g_lv @ enc.Wv

    gAz = np.zeros_like(enc.Az)
    gBz = np.zeros_like(enc.Bz)
    g_hx = np.empty_like(out.hx)
    carry = np.zeros(enc.Az.shape[0])
    for t in range(T - 1, -1, -1):
        # d: adjoint of the pre-activation (or of h^z itself when linear)
        d = g_hz[t] + carry
        if enc.hz_activation:
            d = d * _act_grad(enc.activation, out.hz[t])
        prev = out.hz[t - 1] if t else np.zeros_like(d)
        gAz += np.outer(d, prev)
        gBz += np.outer(d, out.hx[t])
        g_hx[t] = enc.Bz.T @ d
        carry = enc.Az.T @ d
    grads["Az"], grads["Bz"] = gAz, gBz

    g_pre = g_hx * _act_grad(enc.activation, out.hx)
    grads["Cx"] = g_pre.T @ out.s
    g_s = g_pre @ enc.Cx
    gAx = np.zeros_like(enc.Ax)
    gBx = np.zeros_like(enc.Bx)
    lam = np.zeros(enc.Ax.shape[0])
    for t in range(T - 1, -1, -1):
        lam = g_s[t] + enc.Ax.T @ lam
        prev = out.s[t - 1] if t else np.zeros_like(lam)
        gAx += np.outer(lam, prev)
        gBx += np.outer(lam, x[t])
    grads["Ax"], grads["Bx"] = gAx, gBx
    return grads
