"""Fitting by gradient ascent, data-driven initialization and segmentation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.vq import kmeans2

from .encoder import Encoder, encode, pinv_encoder
from .inference import ImpossibleObservationError, forward_backward
from .model import SnldsModel, local_evidence, transition_matrices
from .objective import _evaluate

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class FitConfig:
    lr: float = 5e-4
    epochs: int = 30
    eta0: float = 100.0
    seed: int = 0
    num_samples: int = 1
    learn_encoder: bool = True
    # draw fresh noise every epoch instead of reusing one draw per sequence
    resample_noise: bool = False

    def __post_init__(self):
        if self.lr < 0 or self.epochs < 0 or self.eta0 < 0 or self.num_samples < 1:
            raise ValueError("lr, epochs and eta0 must be >= 0, num_samples >= 1")

    def eta(self, epoch):
        """Linear decay from ``eta0`` at epoch 0 to 0 at half the epochs."""
        half = self.epochs / 2.0
        if half <= 0:
            return 0.0
        return float(self.eta0 * max(0.0, 1.0 - epoch / half))


@dataclass
class FitResult:
    model: SnldsModel
    encoder: Encoder
    trace: list = field(default_factory=list)  # per-epoch dicts
    diverged: bool = False
    message: str = ""


class _Adam:
    def __init__(self, params):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def ascend(self, params, grads, lr):
        self.t += 1
        b1, b2 = ADAM_BETAS
        out = {}
        for k, p in params.items():
            g = grads[k]
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            mh = self.m[k] / (1 - b1 ** self.t)
            vh = self.v[k] / (1 - b2 ** self.t)
            out[k] = p + lr * mh / (np.sqrt(vh) + ADAM_EPS)
        return out


def _noise(cfg, epoch, index, T, Lz):
    key = [cfg.seed, index] + ([epoch] if cfg.resample_noise else [])
    rng = np.random.default_rng(np.random.SeedSequence(key))
    return rng.standard_normal((cfg.num_samples, T, Lz))


def fit(model: SnldsModel, encoder: Encoder, data, config: FitConfig = FitConfig()):
    """Maximize ``ELBO - eta * CE`` with Adam, one sequence per step in fixed order.

    The trace holds, per epoch, the summed totals and ELBOs evaluated at the
    parameters used for each step.  Non-finite losses or numerical failures
    stop training and return the last finite parameters with ``diverged``.
    """
    if not model.is_linear:
        raise ValueError("fit needs a linear-Gaussian model")
    data = [np.asarray(x, dtype=float) for x in data]
    if not data:
        raise ValueError("no training sequences")
    mp, ep = model.arrays(), encoder.arrays()
    names = [("m", k) for k in mp] + ([("e", k) for k in ep] if config.learn_encoder else [])
    params = {f"{a}.{k}": (mp[k] if a == "m" else ep[k]) for a, k in names}
    opt = _Adam(params)
    result = FitResult(model, encoder)

    for epoch in range(config.epochs):
        eta = config.eta(epoch)
        tot = elb = ce = 0.0
        for i, x in enumerate(data):
            eps = _noise(config, epoch, i, x.shape[0], model.state_dim)
            try:
                with np.errstate(all="raise"):
                    rep, _, gm, ge = _evaluate(model, encoder, x, eps, eta, True)
            except (FloatingPointError, np.linalg.LinAlgError, ImpossibleObservationError,
                    ValueError) as exc:
                result.diverged, result.message = True, f"epoch {epoch}: {exc}"
                return result
            if not np.isfinite(rep.total):
                result.diverged, result.message = True, f"epoch {epoch}: non-finite loss"
                return result
            tot, elb, ce = tot + rep.total, elb + rep.elbo, ce + rep.ce_term
            grads = {f"m.{k}": v for k, v in gm.items()}
            grads.update({f"e.{k}": v for k, v in ge.items()})
            new = opt.ascend(params, grads, config.lr)
            if not all(np.all(np.isfinite(v)) for v in new.values()):
                result.diverged, result.message = True, f"epoch {epoch}: non-finite update"
                return result
            try:
                model = model.with_arrays(**{k[2:]: v for k, v in new.items()
                                             if k.startswith("m.")})
                encoder = encoder.with_arrays(**{k[2:]: v for k, v in new.items()
                                                 if k.startswith("e.")})
            except ValueError as exc:
                result.diverged, result.message = True, f"epoch {epoch}: {exc}"
                return result
            params = new
            result.model, result.encoder = model, encoder
        result.trace.append({"epoch": epoch, "eta": eta, "total": tot, "elbo": elb, "ce": ce})
    return result


def _lstsq_dynamics(zp, zn):
    X = np.concatenate([zp, np.ones((zp.shape[0], 1))], axis=1)
    W = np.linalg.lstsq(X, zn, rcond=None)[0]
    return W[:-1].T, W[-1]


def init_from_data(data, num_modes, state_dim, seed=0, chunk=20, stay=0.95, logvar=None):
    """Heuristic starting point for ``fit``.

    The emission is the top principal subspace of the observations.  The
    projected path is cut into chunks of ``chunk`` steps, a linear dynamics
    model is fit per chunk, and k-means on those fits assigns chunks to modes;
    each mode's dynamics is then refit on its chunks.  Transitions start sticky
    with probability ``stay``.  The encoder is the pseudo-inverse of the emission.
    """
    data = [np.asarray(x, dtype=float) for x in data]
    X = np.concatenate(data)
    D = X.shape[1]
    K, Lz = int(num_modes), int(state_dim)
    mu = X.mean(0)
    U, sv, Vt = np.linalg.svd(X - mu, full_matrices=False)
    C = np.zeros((D, Lz))
    r = min(Lz, D)
    C[:, :r] = Vt[:r].T * (sv[:r] / np.sqrt(X.shape[0]))[None, :]
    Cp = np.linalg.pinv(C)
    zs = [(x - mu) @ Cp.T for x in data]
    resid = X - mu - np.concatenate(zs) @ C.T
    Rv = max(float(np.mean(resid ** 2)), 1e-4)

    feats, pairs = [], []
    for z in zs:
        for a in range(0, z.shape[0] - chunk, chunk):
            zp, zn = z[a:a + chunk - 1], z[a + 1:a + chunk]
            A, b = _lstsq_dynamics(zp, zn)
            feats.append(np.concatenate([A.ravel(), b]))
            pairs.append((zp, zn))
    if len(feats) >= K:
        _, lab = kmeans2(np.array(feats), K, seed=seed, minit="++")
    else:
        lab = np.zeros(len(feats), dtype=int)
    A = np.tile(np.eye(Lz), (K, 1, 1))
    d = np.zeros((K, Lz))
    res = []
    for k in range(K):
        sel = [pairs[i] for i in range(len(pairs)) if lab[i] == k]
        if sel:
            zp = np.concatenate([p for p, _ in sel])
            zn = np.concatenate([n for _, n in sel])
            A[k], d[k] = _lstsq_dynamics(zp, zn)
            res.append(zn - zp @ A[k].T - d[k])
    Qv = max(float(np.mean(np.concatenate(res) ** 2)), 1e-4) if res else 1.0

    z0 = np.array([z[0] for z in zs])
    off = np.log((1 - stay) / max(K - 1, 1))
    tb = np.full((K, K), off) + np.eye(K) * (np.log(stay) - off) if K > 1 else np.zeros((1, 1))
    model = SnldsModel(
        pi_logits=np.zeros(K),
        init_mean=np.tile(z0.mean(0), (K, 1)),
        init_chol=np.tile(np.eye(Lz) * max(float(z0.std()), 1.0), (K, 1, 1)),
        A=A, dyn_bias=d, Q_chol=np.eye(Lz) * np.sqrt(Qv),
        C=C, emission_bias=mu, R_chol=np.eye(D) * np.sqrt(Rv),
        trans_W=np.zeros((K, K, D)), trans_b=tb,
    )
    lv = np.log(Rv) if logvar is None else logvar
    return model, pinv_encoder(model, logvar=lv)


def segment(model: SnldsModel, encoder: Encoder, x, seed=0):
    """Mode labels ``argmax_k gamma_t(k)`` (lowest index on ties) and ``gamma``."""
    x = np.asarray(x, dtype=float)
    z = encode(encoder, x, seed=seed).z[0]
    pm = forward_backward(model.pi, transition_matrices(model, x), local_evidence(model, x, z))
    return np.argmax(pm.gamma, axis=-1), pm.gamma
