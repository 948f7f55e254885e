"""Exact discrete-mode smoothing given the continuous path.

Given ``(x, z)`` the mode chain is an HMM with ``x``-dependent transitions, so
its posterior marginals follow from a scaled forward-backward pass.  Leading
axes of the evidence table (Monte-Carlo samples, say) are carried through.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

GAMMA_FLOOR = 1e-12


class ImpossibleObservationError(ValueError):
    """Every mode assigns zero probability to some step."""


@dataclass(frozen=True)
class PosteriorMarginals:
    gamma: np.ndarray   # (..., T, K)
    xi: np.ndarray      # (..., T-1, K, K)
    loglik: np.ndarray  # (...)


@dataclass(frozen=True)
class Messages:
    """Scaled forward/backward messages, kept for the adjoint pass."""

    alpha: np.ndarray   # (..., T, K), each row sums to 1
    beta: np.ndarray    # (..., T, K)
    norm: np.ndarray    # (..., T) per-step normalizers
    e: np.ndarray       # (..., T, K) evidence rescaled by its per-step max
    trans: np.ndarray   # (..., T-1, K, K)
    init: np.ndarray    # (..., K)


def scaled_messages(init, trans, log_evidence):
    init = np.asarray(init, dtype=float)
    trans = np.asarray(trans, dtype=float)
    le = np.asarray(log_evidence, dtype=float)
    T, K = le.shape[-2:]
    if trans.shape[-3:] != (max(T - 1, 0), K, K):
        raise ValueError(f"need {T - 1} transition matrices of shape ({K}, {K})")
    m = np.max(le, axis=-1)
    if not np.all(np.isfinite(m)):
        bad = np.argwhere(~np.isfinite(m))[0]
        raise ImpossibleObservationError(f"no mode can explain step {bad[-1]}")
    e = np.exp(le - m[..., None])
    batch = le.shape[:-2]
    trans = np.broadcast_to(trans, batch + trans.shape[-3:])
    init = np.broadcast_to(init, batch + (K,))

    alpha = np.empty(batch + (T, K))
    norm = np.empty(batch + (T,))
    a = init * e[..., 0, :]
    for t in range(T):
        if t:
            a = np.einsum("...i,...ij->...j", alpha[..., t - 1, :], trans[..., t - 1, :, :])
            a = a * e[..., t, :]
        n = a.sum(axis=-1)
        if np.any(~(n > 0)):
            raise ImpossibleObservationError(f"zero forward mass at step {t}")
        norm[..., t] = n
        alpha[..., t, :] = a / n[..., None]

    beta = np.empty(batch + (T, K))
    beta[..., T - 1, :] = 1.0
    for t in range(T - 2, -1, -1):
        b = e[..., t + 1, :] * beta[..., t + 1, :]
        beta[..., t, :] = np.einsum("...ij,...j->...i", trans[..., t, :, :], b)
        beta[..., t, :] /= norm[..., t + 1, None]
    msgs = Messages(alpha, beta, norm, e, trans, init)
    return msgs, np.sum(np.log(norm) + m, axis=-1)


def marginals_from(msgs: Messages):
    gamma = msgs.alpha * msgs.beta
    xi = (msgs.alpha[..., :-1, :, None] * msgs.trans
          * (msgs.e[..., 1:, :] * msgs.beta[..., 1:, :])[..., None, :]
          / msgs.norm[..., 1:, None, None])
    return gamma, xi


def forward_backward(init, trans, log_evidence):
    """Posterior mode marginals and ``log p(z, x)``.

    ``init`` is the ``K``-vector of initial probabilities, ``trans`` the
    ``T-1`` row-stochastic matrices (``trans[t-1]`` maps step ``t-1`` to ``t``)
    and ``log_evidence`` the ``T x K`` table of log local evidence.
    """
    msgs, loglik = scaled_messages(init, trans, log_evidence)
    gamma, xi = marginals_from(msgs)
    return PosteriorMarginals(gamma, xi, loglik)


def forward_log(init, trans, log_evidence):
    """Log-space forward pass; returns ``log p(z, x)`` only."""
    with np.errstate(divide="ignore"):
        log_init = np.log(np.asarray(init, dtype=float))
        log_trans = np.log(np.asarray(trans, dtype=float))
    le = np.asarray(log_evidence, dtype=float)
    a = log_init + le[..., 0, :]
    for t in range(1, le.shape[-2]):
        a = logsumexp(a[..., :, None] + log_trans[..., t - 1, :, :], axis=-2) + le[..., t, :]
    return logsumexp(a, axis=-1)


def weighted_log_gamma_adjoint(msgs: Messages, weights):
    """Gradient of ``sum_{t,k} w[t,k] log gamma_t(k)`` w.r.t. the log potentials.

    Returns ``(d_log_init, d_log_trans, d_log_evidence)``.  Uses
    ``d log gamma_t(k) / d log phi = E[phi-indicator | s_t = k] - E[phi-indicator]``;
    the conditional expectations summed over ``t`` are accumulated by one extra
    forward and one extra backward sweep, so the cost stays linear in ``T``.
    Entries with zero weight or ``gamma <= 1e-12`` contribute nothing.
    """
    alpha, beta, n, e, A = msgs.alpha, msgs.beta, msgs.norm, msgs.e, msgs.trans
    gamma, xi = marginals_from(msgs)
    w = np.where(gamma > GAMMA_FLOOR, weights, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(gamma > GAMMA_FLOOR, w / gamma, 0.0)
    T = alpha.shape[-2]

    # U[t](j) = sum_{t' > t} sum_k P(s_t' = k | s_t = j)-style accumulator
    U = np.zeros_like(alpha)
    for t in range(T - 2, -1, -1):
        v = e[..., t + 1, :] * (beta[..., t + 1, :] * c[..., t + 1, :] + U[..., t + 1, :])
        U[..., t, :] = np.einsum("...jk,...k->...j", A[..., t, :, :], v) / n[..., t + 1, None]
    V = np.zeros_like(alpha)
    for t in range(1, T):
        v = V[..., t - 1, :] + alpha[..., t - 1, :] * c[..., t - 1, :]
        V[..., t, :] = (np.einsum("...i,...ij->...j", v, A[..., t - 1, :, :])
                        * e[..., t, :] / n[..., t, None])

    total = np.sum(w, axis=(-2, -1))
    R = alpha * U + w + V * beta
    d_ev = R - total[..., None, None] * gamma

    left = alpha[..., :-1, :]
    fwd = (A * (e[..., 1:, :] / n[..., 1:, None])[..., None, :])
    Re = fwd * (left[..., :, None] * (c[..., 1:, :] * beta[..., 1:, :] + U[..., 1:, :])[..., None, :]
                + (left * c[..., :-1, :] + V[..., :-1, :])[..., :, None]
                * beta[..., 1:, None, :])
    d_trans = Re - total[..., None, None, None] * xi
    d_init = d_ev[..., 0, :]
    return d_init, d_trans, d_ev
