import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from switchssm.ssm import (BILINEAR, ZOH, ContinuousSSM, DiscretizationError, DiscretizedSSM,
                           apply_recurrent, discretize, hippo_legs, kernel_direct,
                           kernel_vandermonde, s4_init, s4d_inv_init, s4d_inv_ssm)

SQ3 = np.sqrt(3.0)


def scalar(Abar=0.6, Bbar=0.4, C=2.0, D=0.0):
    return DiscretizedSSM(np.array([[Abar]]), np.array([Bbar]), np.array([C]), D, 0.5, BILINEAR)


def random_diag(rng, N):
    lam = -rng.uniform(0.05, 1.0, N) + 1j * rng.normal(0, 3, N)
    B = rng.normal(size=N) + 1j * rng.normal(size=N)
    C = rng.normal(size=N) + 1j * rng.normal(size=N)
    return ContinuousSSM.diagonal(lam, B, C, D=rng.normal())


# ---------------------------------------------------------------- initializations

def test_hippo_legs_small():
    np.testing.assert_array_equal(hippo_legs(1), [[-1.0]])
    np.testing.assert_allclose(hippo_legs(2), [[-1, 0], [-SQ3, -2]], atol=1e-15)


@pytest.mark.parametrize("N", [1, 3, 8, 33])
def test_hippo_legs_lower_triangular(N):
    A = hippo_legs(N)
    assert np.all(np.triu(A, 1) == 0)
    np.testing.assert_array_equal(np.diag(A), -(np.arange(N) + 1.0))


def test_s4_init_n2():
    A, B = s4_init(2)
    np.testing.assert_allclose(B, [1.0, SQ3], atol=1e-15)
    np.testing.assert_allclose(np.diag(A), [-0.5, -0.5], atol=1e-15)
    # sqrt(1 + 1/2) * sqrt(0 + 1/2) = sqrt(3)/2
    assert A[1, 0] == pytest.approx(-SQ3 / 2, abs=1e-15)
    assert A[0, 1] == pytest.approx(SQ3 / 2, abs=1e-15)


@pytest.mark.parametrize("N", [2, 5, 16])
def test_s4_init_is_legs_plus_rank_one(N):
    A, _ = s4_init(N)
    p = np.sqrt(np.arange(N) + 0.5)
    np.testing.assert_allclose(A, hippo_legs(N) + np.outer(p, p), atol=1e-12)
    S = A + 0.5 * np.eye(N)
    np.testing.assert_allclose(S, -S.T, atol=1e-12)


def test_s4d_inv_spot_values():
    lam = s4d_inv_init(4)
    assert lam[0] == pytest.approx(-0.5 + 1j * (4 / np.pi) * 3, abs=1e-12)
    assert lam[3] == pytest.approx(-0.5 + 1j * (4 / np.pi) * (4 / 7 - 1), abs=1e-12)
    assert abs(lam[0].imag - 3.8197) < 1e-4 and abs(lam[3].imag + 0.5457) < 1e-4


@given(st.integers(1, 200))
def test_s4d_inv_real_part_constant(N):
    np.testing.assert_array_equal(s4d_inv_init(N).real, -0.5)


@pytest.mark.parametrize("N", [0, -1, 2.5])
def test_bad_dimension(N):
    with pytest.raises(ValueError):
        hippo_legs(N)


# ---------------------------------------------------------------- discretization

def test_bilinear_scalar():
    d = discretize(ContinuousSSM.dense([[-1.0]], [1.0], [1.0]), 0.5, BILINEAR)
    assert d.Abar[0, 0] == pytest.approx(0.6, abs=1e-15)
    assert d.Bbar[0] == pytest.approx(0.4, abs=1e-15)


def test_bilinear_small_step_limit():
    A, B = s4_init(4)
    d = discretize(ContinuousSSM.dense(A, B, np.ones(4)), 1e-12, BILINEAR)
    np.testing.assert_allclose(d.Abar, np.eye(4), atol=1e-10)
    np.testing.assert_allclose(d.Bbar, 0, atol=1e-10)


def test_bilinear_keeps_c():
    rng = np.random.default_rng(0)
    c = random_diag(rng, 6)
    np.testing.assert_array_equal(discretize(c, 0.3, BILINEAR).Cbar, c.C)


def test_zoh_scalar():
    d = discretize(ContinuousSSM.diagonal([-1.0], [1.0], [1.0]), 0.5, ZOH)
    assert d.Abar[0].real == pytest.approx(np.exp(-0.5), abs=1e-15)
    assert d.Bbar[0].real == pytest.approx((np.exp(-0.5) - 1) / -1, abs=1e-15)


def test_zoh_needs_diagonal():
    with pytest.raises(ValueError):
        discretize(ContinuousSSM.dense(hippo_legs(3), np.ones(3), np.ones(3)), 0.1, ZOH)


def test_diagonal_needs_stable_eigenvalues():
    # a zero eigenvalue would make zoh degenerate; it is refused at construction
    with pytest.raises(ValueError):
        ContinuousSSM.diagonal([0.0, -1.0], [1.0, 1.0], [1.0, 1.0])


def test_bilinear_singular():
    with pytest.raises(DiscretizationError):
        discretize(ContinuousSSM.dense([[2.0]], [1.0], [1.0]), 1.0, BILINEAR)


@pytest.mark.parametrize("step", [0.0, -0.1, np.nan])
def test_bad_step(step):
    with pytest.raises((ValueError, DiscretizationError)):
        discretize(ContinuousSSM.diagonal([-1.0], [1.0], [1.0]), step)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["legs", "s4", "s4d"]), st.integers(1, 24),
       st.floats(1e-4, 1.0))
def test_bilinear_is_stable(kind, N, step):
    if kind == "legs":
        c = ContinuousSSM.dense(hippo_legs(N), np.ones(N), np.ones(N))
    elif kind == "s4":
        A, B = s4_init(N)
        c = ContinuousSSM.dense(A, B, np.ones(N))
    else:
        c = s4d_inv_ssm(N)
    assert discretize(c, step, BILINEAR).spectral_radius() < 1


# ---------------------------------------------------------------- kernels and recurrence

def test_kernel_direct_scalar():
    np.testing.assert_allclose(kernel_direct(scalar(), 3), [0.8, 0.48, 0.288], atol=1e-15)


def test_kernel_zero_c():
    d = scalar(Abar=0.9, C=0.0)
    np.testing.assert_array_equal(kernel_direct(d, 5), 0)


def test_kernel_length_one():
    assert kernel_direct(scalar(), 1) == pytest.approx([0.8])


def test_vandermonde_single_mode_matches_direct():
    d = discretize(ContinuousSSM.diagonal([-0.3 + 2j], [1.0], [0.5 - 1j]), 0.2, ZOH)
    np.testing.assert_allclose(kernel_vandermonde(d, 50), kernel_direct(d, 50), rtol=1e-13)


def test_vandermonde_nilpotent():
    d = DiscretizedSSM(np.zeros(3, dtype=complex), np.array([1.0, 2.0, 3.0]) + 0j,
                       np.array([1.0, 1.0, 1.0]) + 0j, 0.0, 1.0, ZOH)
    np.testing.assert_allclose(kernel_vandermonde(d, 3), [6.0, 0.0, 0.0])


def test_vandermonde_vs_direct_n16():
    d = discretize(random_diag(np.random.default_rng(1), 16), 0.05, BILINEAR)
    kd, kv = kernel_direct(d, 256), kernel_vandermonde(d, 256)
    assert np.max(np.abs(kv - kd)) / np.max(np.abs(kd)) <= 1e-10


def test_impulse_response():
    d = scalar()
    np.testing.assert_allclose(apply_recurrent(d, [1.0, 0.0, 0.0]), kernel_direct(d, 3))


def test_recurrent_zero_input():
    np.testing.assert_array_equal(apply_recurrent(scalar(D=1.0), np.zeros(7)), 0)


def test_recurrent_with_skip():
    np.testing.assert_allclose(apply_recurrent(scalar(D=1.0), [1.0, 1.0]), [1.8, 2.28])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 48), st.integers(1, 400),
       st.sampled_from([BILINEAR, ZOH]))
def test_path_equivalence(seed, N, L, method):
    rng = np.random.default_rng(seed)
    d = discretize(random_diag(rng, N), rng.uniform(0.01, 1.0), method)
    kd = kernel_direct(d, L)
    kv = kernel_vandermonde(d, L)
    imp = np.zeros(L)
    imp[0] = 1.0
    y = apply_recurrent(d, imp)
    y[0] -= d.D
    scale = np.max(np.abs(kd))
    assert np.max(np.abs(kv - kd)) <= 1e-10 * scale
    assert np.max(np.abs(y - kd)) <= 1e-10 * scale


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(-3, 3), st.floats(-3, 3))
def test_recurrent_linearity(seed, a, b):
    rng = np.random.default_rng(seed)
    d = discretize(random_diag(rng, 8), 0.1, BILINEAR)
    u, v = rng.normal(size=(2, 64))
    lhs = apply_recurrent(d, a * u + b * v)
    rhs = a * apply_recurrent(d, u) + b * apply_recurrent(d, v)
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * max(1.0, np.max(np.abs(rhs)))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 12))
def test_dplr_densification(seed, N):
    rng = np.random.default_rng(seed)
    lam = -rng.uniform(0.1, 1, N) + 1j * rng.normal(size=N)
    P = rng.normal(size=N) * 0.3 + 0j
    B, C = rng.normal(size=(2, N)) + 0j
    dplr = ContinuousSSM.dplr(lam, P, B, C)
    dense = ContinuousSSM.dense(np.diag(lam) - np.outer(P, P.conj()), B, C)
    k1 = kernel_direct(discretize(dplr, 0.1), 128)
    k2 = kernel_direct(discretize(dense, 0.1), 128)
    assert np.max(np.abs(k1 - k2)) <= 1e-10 * max(1.0, np.max(np.abs(k2)))


def test_hippo_eigs_continuous_stable():
    for N in (2, 8, 32):
        A, _ = s4_init(N)
        assert np.all(np.linalg.eigvals(A).real < 0)
        assert np.all(s4d_inv_init(N).real < 0)
