"""ELBO, cross-entropy regularizer and their gradients.

The likelihood term is the Monte-Carlo mean of ``log p(x, z)`` over
reparameterized draws of ``z``, with the modes summed out exactly.  Gradients
w.r.t. the generative parameters use the Fisher identity: the gradient of
``log p(x, z)`` is the posterior expectation of the gradient of the complete
log-joint, i.e. ``gamma``/``xi``-weighted sums of per-factor gradients.  The same
weights, pushed through ``z``, give the encoder gradient.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .encoder import Encoder, encode, encoder_backward, gaussian_entropy
from .inference import (GAMMA_FLOOR, marginals_from, scaled_messages,
                        weighted_log_gamma_adjoint)
from .model import SnldsModel, covariance, local_evidence, transition_matrices


class UnsupportedModelError(ValueError):
    """Analytic gradients need linear-Gaussian dynamics and emission."""


@dataclass(frozen=True)
class LossReport:
    elbo: float
    likelihood_term: float
    entropy_term: float
    ce_term: float
    eta: float
    total: float
    # Monte-Carlo standard error of the ELBO (0 for a single sample)
    stderr: float = 0.0

    def to_dict(self):
        return asdict(self)


def ce_regularizer(gamma):
    """``sum_t KL(uniform || gamma_t)`` with ``gamma`` floored at 1e-12."""
    g = np.asarray(gamma, dtype=float)
    K = g.shape[-1]
    return np.sum((np.log(1.0 / K) - np.log(np.maximum(g, GAMMA_FLOOR))) / K, axis=(-2, -1))


def _sym(G):
    return 0.5 * (G + np.swapaxes(G, -1, -2))


def _chol_grad(chol, G):
    # d/dL of <G, L L^T> for lower-triangular L, G symmetric
    return np.tril(2.0 * _sym(G) @ np.tril(chol))


def _model_backward(model: SnldsModel, x, Z, trans, d_init, d_trans, d_ev):
    """Chain the log-potential adjoints to model parameters and to ``z``."""
    K = model.num_modes
    g = {}
    gi = d_init.sum(axis=0)
    g["pi_logits"] = gi - gi.sum() * model.pi

    Gt = d_trans.sum(axis=0)
    Glog = Gt - Gt.sum(axis=-1, keepdims=True) * trans
    g["trans_W"] = np.einsum("tjk,td->jkd", Glog, x[:-1])
    g["trans_b"] = Glog.sum(axis=0)

    # emission, shared by all modes
    w = d_ev.sum(axis=-1)
    R = model.R
    Ri = np.linalg.inv(R)
    u = (x - Z @ model.C.T - model.emission_bias) @ Ri
    g["emission_bias"] = np.einsum("st,std->d", w, u)
    g["C"] = np.einsum("st,std,stl->dl", w, u, Z)
    GR = 0.5 * (np.einsum("st,sti,stj->ij", w, u, u) - w.sum() * Ri)
    g["R_chol"] = _chol_grad(model.R_chol, GR)
    gz = w[..., None] * (u @ model.C)

    # initial state
    g0 = d_ev[:, 0, :]
    S0i = np.linalg.inv(model.init_cov)
    u0 = np.einsum("kij,skj->ski", S0i, Z[:, 0, None, :] - model.init_mean)
    g["init_mean"] = np.einsum("sk,ski->ki", g0, u0)
    G0 = 0.5 * (np.einsum("sk,ski,skj->kij", g0, u0, u0) - g0.sum(0)[:, None, None] * S0i)
    g["init_chol"] = np.stack([_chol_grad(model.init_chol[k], G0[k]) for k in range(K)])
    gz[:, 0] -= np.einsum("sk,ski->si", g0, u0)

    # mode dynamics
    gd = d_ev[:, 1:, :]
    Qi = np.linalg.inv(model.Q)
    mean = model.dynamics_mean(Z[:, :-1])
    uq = (Z[:, 1:, None, :] - mean) @ Qi
    g["dyn_bias"] = np.einsum("stk,stki->ki", gd, uq)
    g["A"] = np.einsum("stk,stki,stj->kij", gd, uq, Z[:, :-1])
    GQ = 0.5 * (np.einsum("stk,stki,stkj->ij", gd, uq, uq) - gd.sum() * Qi)
    g["Q_chol"] = _chol_grad(model.Q_chol, GQ)
    gz[:, 1:] -= np.einsum("stk,stki->sti", gd, uq)
    gz[:, :-1] += np.einsum("stk,kji,stkj->sti", gd, model.A, uq)
    return g, gz


def _evaluate(model, enc, x, eps, eta, want_grad):
    x = np.asarray(x, dtype=float)
    out = encode(enc, x, eps=eps)
    Z = out.z
    S = Z.shape[0]
    trans = transition_matrices(model, x)
    le = local_evidence(model, x, Z)
    msgs, loglik = scaled_messages(model.pi, trans, le)
    gamma, xi = marginals_from(msgs)
    entropy = gaussian_entropy(out.logvar)
    lik = float(np.mean(loglik))
    ce = float(np.mean(ce_regularizer(gamma)))
    elbo = lik + entropy
    stderr = float(np.std(loglik, ddof=1) / np.sqrt(S)) if S > 1 else 0.0
    report = LossReport(elbo, lik, entropy, ce, float(eta), elbo - eta * ce, stderr)
    if not want_grad:
        return report, gamma, None, None

    d_init, d_trans, d_ev = gamma[..., 0, :], xi, gamma
    if eta:
        K = model.num_modes
        c_init, c_trans, c_ev = weighted_log_gamma_adjoint(msgs, np.full(gamma.shape, -1.0 / K))
        d_init, d_trans, d_ev = d_init - eta * c_init, d_trans - eta * c_trans, d_ev - eta * c_ev
    d_init, d_trans, d_ev = d_init / S, d_trans / S, d_ev / S
    gm, gz = _model_backward(model, x, Z, trans, d_init, d_trans, d_ev)

    g_mean = gz.sum(axis=0)
    g_logvar = np.sum(gz * 0.5 * np.exp(0.5 * out.logvar) * out.eps, axis=0) + 0.5
    ge = encoder_backward(enc, x, out, g_mean, g_logvar)
    return report, gamma, gm, ge


def draw_noise(enc: Encoder, T, seed, num_samples=1):
    return np.random.default_rng(seed).standard_normal((int(num_samples), int(T), enc.latent_dim))


def elbo(model: SnldsModel, enc: Encoder, x, num_samples=1, seed=0, eta=0.0):
    """Monte-Carlo ELBO with the closed-form entropy of ``q``."""
    if int(num_samples) < 1:
        raise ValueError("num_samples must be >= 1")
    x = np.asarray(x, dtype=float)
    eps = draw_noise(enc, x.shape[0], seed, num_samples)
    return _evaluate(model, enc, x, eps, eta, False)[0]


def elbo_gradient(model: SnldsModel, enc: Encoder, x, seed=0, num_samples=1, eta=0.0,
                  method="analytic", fd_step=1e-4):
    """Gradient of ``ELBO - eta * CE`` for the sampled noise fixed by ``seed``.

    Returns ``(report, model_grads, encoder_grads)``, the gradients being dicts
    keyed like ``model.arrays()`` and ``enc.arrays()``.  ``method="fd"`` uses
    extrapolated central differences (``ridders_derivative`` starting at
    ``fd_step``), the only option when the model has nonlinear maps.
    """
    x = np.asarray(x, dtype=float)
    eps = draw_noise(enc, x.shape[0], seed, num_samples)
    if method == "fd":
        return _fd_gradient(model, enc, x, eps, eta, fd_step)
    if method != "analytic":
        raise ValueError(f"unknown gradient method {method!r}")
    if not model.is_linear:
        raise UnsupportedModelError("analytic gradients need a linear-Gaussian model; "
                                    "use method='fd'")
    report, _, gm, ge = _evaluate(model, enc, x, eps, eta, True)
    return report, gm, ge


def ridders_derivative(f, h, shrink=1.4, ntab=10, safe=2.0):
    """Derivative of scalar ``f`` at 0 by Ridders' extrapolation of central differences.

    Central differences at steps ``h, h/shrink, ...`` are Richardson-extrapolated
    in a Neville tableau; the entry with the smallest error estimate is returned,
    stopping once higher orders get worse by more than ``safe``.
    """
    c2 = shrink * shrink
    tab = np.zeros((ntab, ntab))
    tab[0, 0] = (f(h) - f(-h)) / (2.0 * h)
    best, err = tab[0, 0], np.inf
    for i in range(1, ntab):
        h /= shrink
        tab[0, i] = (f(h) - f(-h)) / (2.0 * h)
        fac = c2
        for j in range(1, i + 1):
            tab[j, i] = (tab[j - 1, i] * fac - tab[j - 1, i - 1]) / (fac - 1.0)
            fac *= c2
            e = max(abs(tab[j, i] - tab[j - 1, i]), abs(tab[j, i] - tab[j - 1, i - 1]))
            if e <= err:
                best, err = tab[j, i], e
        if abs(tab[i, i] - tab[i - 1, i - 1]) >= safe * err:
            break
    return best


def _fd_gradient(model, enc, x, eps, eta, h):
    def total(m, e):
        return _evaluate(m, e, x, eps, eta, False)[0].total

    def grads(obj, other, is_model):
        out = {}
        for name, a in obj.arrays().items():
            g = np.zeros_like(a)
            for idx in np.ndindex(a.shape):
                def f(step):
                    b = a.copy()
                    b[idx] += step
                    o = obj.with_arrays(**{name: b})
                    return total(o, other) if is_model else total(other, o)
                g[idx] = ridders_derivative(f, h)
            out[name] = g
        return out

    report = _evaluate(model, enc, x, eps, eta, False)[0]
    return report, grads(model, enc, True), grads(enc, model, False)


__all__ = ["LossReport", "UnsupportedModelError", "ce_regularizer", "covariance", "elbo",
           "elbo_gradient", "draw_noise"]
