"""Seeded synthetic series with ground-truth mode labels."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LORENZ_DEFAULTS = {"alpha": 10.0, "beta": 28.0, "gamma": 8.0 / 3.0}


class IntegrationError(RuntimeError):
    """Trajectory left the finite range during integration."""


@dataclass(frozen=True)
class LabeledSeries:
    values: np.ndarray  # (T, d)
    labels: np.ndarray  # (T,) int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        lab = np.asarray(self.labels, dtype=int).reshape(-1)
        if lab.shape[0] != v.shape[0]:
            raise ValueError("labels and values differ in length")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "labels", lab)

    def __len__(self):
        return self.values.shape[0]


def gen_switching_gaussian(blocks, seed=0):
    """Concatenate i.i.d. Gaussian blocks given as ``(mean, std, length)``.

    The label of every point is the index of its block.
    """
    blocks = [(float(m), float(s), int(n)) for m, s, n in blocks]
    if not blocks:
        raise ValueError("need at least one block")
    for m, s, n in blocks:
        if n < 1 or s < 0:
            raise ValueError(f"bad block {(m, s, n)}")
    rng = np.random.default_rng(seed)
    values = np.concatenate([m + s * rng.standard_normal(n) for m, s, n in blocks])
    labels = np.concatenate([np.full(n, i) for i, (_, _, n) in enumerate(blocks)])
    meta = {"generator": "switching", "blocks": [list(b) for b in blocks], "seed": seed}
    return LabeledSeries(values, labels, meta)


def two_regime_blocks(seed, n_blocks=6, regimes=((0.0, 1.0), (3.0, 0.5)),
                      length_range=(600, 1200)):
    """Block list alternating between two regimes with random block lengths.

    Labels of the resulting series are block indices; ``regime_of_block`` in the
    returned dict maps them to the regime id.
    """
    rng = np.random.default_rng(seed)
    lo, hi = length_range
    start = int(rng.integers(2))
    blocks, regime_of_block = [], []
    for i in range(n_blocks):
        g = (start + i) % 2
        m, s = regimes[g]
        blocks.append((m, s, int(rng.integers(lo, hi + 1))))
        regime_of_block.append(g)
    return {"blocks": blocks, "regime_of_block": regime_of_block}


def gen_switching_linear(T=500, seed=0, n_traj=1, **model_kwargs):
    """Trajectories of the two-mode rotating SLDS; labels are the true modes.

    Keyword arguments go to ``snlds.model.rotation_model``.
    """
    from .snlds.model import generate, rotation_model

    model = rotation_model(**model_kwargs)
    out = []
    for i, ss in enumerate(np.random.SeedSequence(seed).spawn(n_traj)):
        x, z, s = generate(model, T, seed=ss)
        meta = {"generator": "switching_linear", "T": T, "seed": seed, "traj": i,
                "model": {k: v for k, v in model_kwargs.items()}}
        out.append(LabeledSeries(x, s, meta))
    return out


def lorenz_derivative(state, alpha=10.0, beta=28.0, gamma=8.0 / 3.0):
    x1, x2, x3 = state
    return np.array([alpha * (x2 - x1), x1 * (beta - x3) - x2, x1 * x2 - gamma * x3])


def rk4_step(f, y, dt):
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_lorenz(init, T, dt, alpha=10.0, beta=28.0, gamma=8.0 / 3.0):
    """``(T, 3)`` RK4 trajectory whose first row is ``init``."""
    f = lambda y: lorenz_derivative(y, alpha, beta, gamma)  # noqa: E731
    out = np.empty((T, 3))
    y = np.asarray(init, dtype=float)
    for t in range(T):
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > 1e8:
            raise IntegrationError(f"lorenz trajectory blew up at step {t}: {y}")
        out[t] = y
        y = rk4_step(f, y, dt)
    return out


def gen_lorenz(T=500, dt=0.01, params=None, seed=0, obs="x1", noise_std=0.0, burn_in=2000):
    """Lorenz attractor sampled every ``dt``.

    The initial point is drawn around ``(1, 1, 1)`` and integrated for ``burn_in``
    steps before recording.  ``obs="x1"`` returns the standardized first
    coordinate, ``obs="full"`` all three.  The label is the lobe ``x1 > 0``.
    """
    if not dt > 0 or T < 1:
        raise ValueError("need dt > 0 and T >= 1")
    if obs not in ("x1", "full"):
        raise ValueError(f"unknown observation mode {obs!r}")
    p = dict(LORENZ_DEFAULTS, **(params or {}))
    rng = np.random.default_rng(seed)
    init = np.ones(3) + rng.standard_normal(3)
    traj = integrate_lorenz(init, burn_in + T, dt, p["alpha"], p["beta"], p["gamma"])[burn_in:]
    labels = (traj[:, 0] > 0).astype(int)
    if obs == "x1":
        x = traj[:, :1]
        sd = x.std()
        values = (x - x.mean()) / (sd if sd > 0 else 1.0)
    else:
        values = traj.copy()
    if noise_std > 0:
        values = values + noise_std * rng.standard_normal(values.shape)
    meta = {"generator": "lorenz", "params": p, "T": T, "dt": dt, "seed": seed,
            "obs": obs, "noise_std": noise_std, "burn_in": burn_in}
    return LabeledSeries(values, labels, meta)


def reflect(p, v, board):
    """Fold a position back into ``[0, board]``, flipping velocity at each wall hit."""
    while p < 0 or p > board:
        if p > board:
            p = 2.0 * board - p
        else:
            p = -p
        v = -v
    return p, v


def velocity_label(v):
    """Quadrant of the velocity signs, ``+0`` counted as positive."""
    sx = np.signbit(v[..., 0]) & (v[..., 0] != 0)
    sy = np.signbit(v[..., 1]) & (v[..., 1] != 0)
    return sx.astype(int) + 2 * sy.astype(int)


def simulate_ball(p0, v0, T, board):
    """Positions and velocities for ``T`` steps starting from ``(p0, v0)``."""
    P = np.empty((T, 2))
    V = np.empty((T, 2))
    p = np.array(p0, dtype=float)
    v = np.array(v0, dtype=float)
    for t in range(T):
        P[t], V[t] = p, v
        for i in range(2):
            p[i], v[i] = reflect(p[i] + v[i], v[i], board)
    return P, V


def gen_bouncing_ball(n_traj=1, T=200, board=256.0, vel_range=(-5.0, 5.0), seed=0,
                      noise_std=0.0):
    """Point balls bouncing elastically in a ``board x board`` box.

    Each trajectory gets its own child seed.  Observations are positions; the
    label is the velocity-sign quadrant (0..3).
    """
    lo, hi = vel_range
    if not board > 0 or not lo < hi:
        raise ValueError("need board > 0 and vel_range lo < hi")
    out = []
    for i, ss in enumerate(np.random.SeedSequence(seed).spawn(n_traj)):
        rng = np.random.default_rng(ss)
        p0 = rng.uniform(0.0, board, size=2)
        v0 = rng.uniform(lo, hi, size=2)
        P, V = simulate_ball(p0, v0, T, board)
        if noise_std > 0:
            P = P + noise_std * rng.standard_normal(P.shape)
        meta = {"generator": "ball", "T": T, "board": board, "vel_range": [lo, hi],
                "seed": seed, "traj": i, "noise_std": noise_std}
        out.append(LabeledSeries(P, velocity_label(V), meta))
    return out
