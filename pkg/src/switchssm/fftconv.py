"""FFT causal convolution and chunked state-passing evaluation of SSMs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ssm import DiscretizedSSM, kernel_direct


class ChunkingError(ValueError):
    """Sequence length is not a multiple of the chunk size."""


def next_pow2(n):
    return 1 << max(int(n) - 1, 0).bit_length()


def fft_convolve(kernel, u):
    """Causal convolution ``y_k = sum_{j<=k} K_j u_{k-j}`` truncated to ``len(u)``.

    Works along the last axis and broadcasts over leading axes.  A kernel
    shorter than ``u`` is zero padded; complex kernels or inputs are handled
    with a full complex FFT.
    """
    kernel = np.asarray(kernel)
    u = np.asarray(u)
    if kernel.shape[-1] == 0:
        raise ValueError("empty kernel")
    L = u.shape[-1]
    if kernel.shape[-1] > L:
        raise ValueError(f"kernel length {kernel.shape[-1]} exceeds input length {L}")
    if L == 0:
        return np.zeros(u.shape, dtype=np.result_type(kernel, u, float))
    n = next_pow2(2 * L - 1)
    if np.iscomplexobj(kernel) or np.iscomplexobj(u):
        y = np.fft.ifft(np.fft.fft(kernel, n) * np.fft.fft(u, n), n)
    else:
        y = np.fft.irfft(np.fft.rfft(kernel, n) * np.fft.rfft(u, n), n)
    return y[..., :L]


@dataclass(frozen=True)
class ChunkOperators:
    """Precomputed operators for one chunk of length ``chunk_size``.

    ``M_ux[:, j] = Abar^{N'-1-j} Bbar`` maps a chunk's inputs to its end state,
    ``M_xy[i] = Cbar Abar^i`` reads a state out over the chunk, ``A_pow`` is
    ``Abar^{N'}`` (elementwise for diagonal systems) and ``kernel`` holds the
    first ``N'`` kernel taps.
    """

    chunk_size: int
    A_pow: np.ndarray
    M_ux: np.ndarray
    M_xy: np.ndarray
    kernel: np.ndarray


def precompute_chunk_operators(dssm: DiscretizedSSM, chunk_size) -> ChunkOperators:
    n = int(chunk_size)
    if n != chunk_size or n < 1:
        raise ValueError(f"chunk size must be a positive integer, got {chunk_size!r}")
    N = dssm.state_dim
    dtype = np.result_type(dssm.Abar, dssm.Bbar, dssm.Cbar)
    M_ux = np.empty((N, n), dtype=dtype)
    M_xy = np.empty((n, N), dtype=dtype)
    v = dssm.Bbar.astype(dtype)
    row = dssm.Cbar.astype(dtype)
    for i in range(n):
        M_ux[:, n - 1 - i] = v
        M_xy[i] = row
        v = dssm.propagate(v)
        # row vector times Abar
        row = row * dssm.Abar if dssm.is_diagonal else row @ dssm.Abar
    if dssm.is_diagonal:
        A_pow = np.ones(N, dtype=dssm.Abar.dtype)
        for _ in range(n):
            A_pow = A_pow * dssm.Abar
    else:
        A_pow = np.linalg.matrix_power(dssm.Abar, n)
    return ChunkOperators(n, A_pow, M_ux, M_xy, kernel_direct(dssm, n))


def state_passing_convolve(dssm: DiscretizedSSM, u, chunk_size, ops=None):
    """Evaluate the SSM on ``u`` chunk by chunk, carrying the state between chunks.

    Each chunk is a length-``N'`` FFT convolution plus the readout of the state
    left by the previous chunk.  The carried state is the state after the last
    input of the previous chunk, so it is advanced one step before ``M_xy``
    reads it out.
    """
    u = np.asarray(u, dtype=float).reshape(-1)
    L = u.shape[0]
    ops = precompute_chunk_operators(dssm, chunk_size) if ops is None else ops
    n = ops.chunk_size
    if L % n:
        raise ChunkingError(f"length {L} is not a multiple of chunk size {n}")
    chunks = u.reshape(-1, n)
    conv = fft_convolve(ops.kernel, chunks)
    y = np.empty_like(chunks)
    x = np.zeros(dssm.state_dim, dtype=ops.M_ux.dtype)
    for c in range(chunks.shape[0]):
        y[c] = np.real(ops.M_xy @ dssm.propagate(x)) + conv[c] + dssm.D * chunks[c]
        if dssm.is_diagonal:
            x = ops.A_pow * x + ops.M_ux @ chunks[c]
        else:
            x = ops.A_pow @ x + ops.M_ux @ chunks[c]
    return y.reshape(-1)
