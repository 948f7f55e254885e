"""Structured state-space systems: HiPPO initializers, discretization, kernels.

A continuous system is ``x'(t) = A x(t) + B u(t)``, ``y(t) = C x(t) + D u(t)``.
``A`` can be a dense matrix, a diagonal (stored as the vector of eigenvalues
``Lambda``), or diagonal-plus-low-rank ``Lambda - P P^*``.  Complex arithmetic is
used internally; anything handed back as a sequence is the real part.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DENSE = "dense"
DIAGONAL = "diagonal"
DPLR = "dplr"

BILINEAR = "bilinear"
ZOH = "zoh"

# |eig| tolerance used when classifying discrete stability
STABILITY_TOL = 1e-9


class DiscretizationError(ValueError):
    """Raised when a continuous system cannot be discretized at the given step."""


def _check_dim(N):
    if int(N) != N or N < 1:
        raise ValueError(f"state dimension must be a positive integer, got {N!r}")
    return int(N)


@dataclass(frozen=True)
class ContinuousSSM:
    """Continuous-time SISO state-space system.

    For ``form == "dense"`` ``A`` is ``(N, N)``; for ``"diagonal"`` and
    ``"dplr"`` it is the ``(N,)`` vector ``Lambda`` and, for ``"dplr"``, ``P``
    is the ``(N, r)`` low-rank factor so the state matrix is ``Lambda - P P^*``.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: float = 0.0
    P: np.ndarray | None = None
    form: str = DENSE

    def __post_init__(self):
        A = np.asarray(self.A)
        B = np.asarray(self.B).reshape(-1)
        C = np.asarray(self.C).reshape(-1)
        if self.form == DENSE:
            if A.ndim != 2 or A.shape[0] != A.shape[1]:
                raise ValueError("dense A must be square")
            if not np.all(np.isfinite(A)):
                raise ValueError("dense A must be finite")
        elif self.form in (DIAGONAL, DPLR):
            A = A.reshape(-1)
            if np.any(np.real(A) >= 0):
                raise ValueError("diagonal eigenvalues must have negative real part")
        else:
            raise ValueError(f"unknown parameterization {self.form!r}")
        N = A.shape[0]
        if B.shape != (N,) or C.shape != (N,):
            raise ValueError(f"B and C must have length {N}")
        P = self.P
        if self.form == DPLR:
            if P is None:
                raise ValueError("dplr form needs a low-rank factor P")
            P = np.asarray(P)
            if P.ndim == 1:
                P = P[:, None]
            if P.shape[0] != N:
                raise ValueError("P must have N rows")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "D", float(self.D))

    @classmethod
    def dense(cls, A, B, C, D=0.0):
        return cls(A=A, B=B, C=C, D=D, form=DENSE)

    @classmethod
    def diagonal(cls, Lambda, B, C, D=0.0):
        return cls(A=Lambda, B=B, C=C, D=D, form=DIAGONAL)

    @classmethod
    def dplr(cls, Lambda, P, B, C, D=0.0):
        return cls(A=Lambda, B=B, C=C, D=D, P=P, form=DPLR)

    @property
    def state_dim(self):
        return self.A.shape[0]

    def dense_A(self):
        """State matrix as an explicit ``(N, N)`` array."""
        if self.form == DENSE:
            return self.A
        Ad = np.diag(self.A.astype(complex))
        if self.form == DPLR:
            Ad = Ad - self.P @ self.P.conj().T
        return Ad


@dataclass(frozen=True)
class DiscretizedSSM:
    """Discrete recurrence ``x_k = Abar x_{k-1} + Bbar u_k``, ``y_k = Cbar x_k + D u_k``.

    ``Abar`` is ``(N,)`` when the system is diagonal and ``(N, N)`` otherwise.
    """

    Abar: np.ndarray
    Bbar: np.ndarray
    Cbar: np.ndarray
    D: float
    step: float
    method: str

    @property
    def is_diagonal(self):
        return self.Abar.ndim == 1

    @property
    def state_dim(self):
        return self.Abar.shape[0]

    def propagate(self, x):
        """One step of the unforced dynamics, ``Abar @ x`` along the last axis."""
        if self.is_diagonal:
            return self.Abar * x
        return x @ self.Abar.T

    def eigvals(self):
        return self.Abar if self.is_diagonal else np.linalg.eigvals(self.Abar)

    def spectral_radius(self):
        return float(np.max(np.abs(self.eigvals())))

    def is_stable(self, tol=STABILITY_TOL):
        return self.spectral_radius() < 1.0 - tol


def hippo_legs(N):
    """HiPPO-LegS state matrix (real, lower triangular)."""
    N = _check_dim(N)
    n = np.arange(N)
    r = np.sqrt(2 * n + 1.0)
    A = np.tril(np.outer(r, r), -1) + np.diag(n + 1.0)
    return -A


def s4_init(N):
    """Normal part of the S4 (NPLR) state matrix and the matching input vector.

    ``A = -1/2 I + S`` where ``S`` is skew-symmetric with magnitude
    ``sqrt(n + 1/2) sqrt(k + 1/2)``, negative below the diagonal.  It equals
    ``hippo_legs(N) + p p^T`` with ``p_n = sqrt(n + 1/2)``.
    """
    N = _check_dim(N)
    n = np.arange(N)
    q = np.sqrt(n + 0.5)
    S = np.outer(q, q)
    A = -np.tril(S, -1) + np.triu(S, 1) - 0.5 * np.eye(N)
    B = np.sqrt(2 * n + 1.0)
    return A, B


def s4d_inv_init(N):
    """S4D-Inv diagonal initialisation ``-1/2 + i (N/pi)(N/(2n+1) - 1)``."""
    N = _check_dim(N)
    n = np.arange(N)
    return -0.5 + 1j * (N / np.pi) * (N / (2 * n + 1.0) - 1.0)


def s4d_inv_ssm(N, C=None, D=0.0, rng=None):
    """Diagonal system with S4D-Inv eigenvalues and ``B = 1``.

    ``C`` defaults to complex standard normal draws from ``rng``.
    """
    Lambda = s4d_inv_init(N)
    if C is None:
        rng = np.random.default_rng(rng)
        C = rng.normal(size=N) + 1j * rng.normal(size=N)
    return ContinuousSSM.diagonal(Lambda, np.ones(N, dtype=complex), C, D)


def discretize(ssm: ContinuousSSM, step, method=BILINEAR) -> DiscretizedSSM:
    """Discretize with the bilinear transform or zero-order hold.

    Zero-order hold is only defined here for diagonal systems.  DPLR systems are
    densified before the bilinear transform.
    """
    step = float(step)
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    B, C = ssm.B, ssm.C

    if method == ZOH:
        if ssm.form != DIAGONAL:
            raise ValueError("zoh discretization needs a diagonal system")
        Lam = ssm.A.astype(complex)
        if np.any(Lam == 0):
            raise DiscretizationError("zoh undefined for a zero eigenvalue")
        Abar = np.exp(step * Lam)
        Bbar = (Abar - 1.0) / Lam * B
        return DiscretizedSSM(Abar, Bbar, C.astype(complex), ssm.D, step, ZOH)

    if method != BILINEAR:
        raise ValueError(f"unknown discretization method {method!r}")

    if ssm.form == DIAGONAL:
        Lam = ssm.A.astype(complex)
        denom = 1.0 - step / 2.0 * Lam
        if np.any(np.abs(denom) < np.finfo(float).eps):
            raise DiscretizationError("I - step/2 A is singular")
        Abar = (1.0 + step / 2.0 * Lam) / denom
        Bbar = step * B / denom
        return DiscretizedSSM(Abar, Bbar, C.astype(complex), ssm.D, step, BILINEAR)

    A = ssm.dense_A()
    I = np.eye(A.shape[0])
    M = I - step / 2.0 * A
    if np.linalg.cond(M) > 1.0 / np.finfo(float).eps:
        raise DiscretizationError("I - step/2 A is singular")
    Abar = np.linalg.solve(M, I + step / 2.0 * A)
    Bbar = np.linalg.solve(M, step * B)
    Cbar = C if np.iscomplexobj(A) or np.iscomplexobj(C) else C.astype(float)
    return DiscretizedSSM(Abar, Bbar, Cbar, ssm.D, step, BILINEAR)


def kernel_direct(dssm: DiscretizedSSM, L):
    """Kernel ``K_l = Cbar Abar^l Bbar`` by iterating the state, no matrix powers."""
    L = _check_dim(L)
    K = np.empty(L, dtype=np.result_type(dssm.Abar, dssm.Bbar, dssm.Cbar))
    x = dssm.Bbar
    for l in range(L):
        K[l] = dssm.Cbar @ x
        x = dssm.propagate(x)
    return np.real(K)


def vandermonde(Abar, L):
    """``V[n, l] = Abar_n ** l``."""
    return Abar[:, None] ** np.arange(L)[None, :]


def kernel_vandermonde(dssm: DiscretizedSSM, L):
    """Diagonal-system kernel as ``(Bbar * Cbar) @ V_L(Abar)``."""
    L = _check_dim(L)
    if not dssm.is_diagonal:
        raise ValueError("Vandermonde kernel needs a diagonal system")
    return np.real((dssm.Bbar * dssm.Cbar) @ vandermonde(dssm.Abar, L))


def apply_recurrent(dssm: DiscretizedSSM, u, x0=None, return_state=False):
    """Run the discrete recurrence over ``u`` and return the real outputs.

    ``x0`` is the state before the first input (zero by default).  With
    ``return_state`` the final state is returned as well.
    """
    u = np.asarray(u, dtype=float).reshape(-1)
    N = dssm.state_dim
    dtype = np.result_type(dssm.Abar, dssm.Bbar, dssm.Cbar, float)
    x = np.zeros(N, dtype=dtype) if x0 is None else np.asarray(x0, dtype=dtype)
    y = np.empty(u.shape[0])
    for k, uk in enumerate(u):
        x = dssm.propagate(x) + dssm.Bbar * uk
        y[k] = np.real(dssm.Cbar @ x) + dssm.D * uk
    if return_state:
        return y, x
    return y
