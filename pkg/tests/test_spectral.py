import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from multidecon.spectral import (
    circ_conv,
    derive_seed,
    dft,
    dft_matrix,
    gen_generic_basis,
    gen_identity_subset_basis,
    gen_sparse_coeff,
    idft,
    make_rng,
)

from conftest import direct_circ_conv, naive_dft


def test_dft_of_first_unit_vector_is_constant():
    assert np.allclose(dft(np.eye(4)[0]), 0.5 * np.ones(4), atol=1e-15)


def test_dft_of_ones_concentrates_at_dc():
    assert np.allclose(dft(np.ones(4)), [2, 0, 0, 0], atol=1e-15)


def test_dft_matches_naive_oracle():
    v = np.array([1.0, 2.0, 3.0, 4.0])
    assert np.max(np.abs(dft(v) - naive_dft(v))) <= 1e-12


@pytest.mark.parametrize("L", [1, 5, 8, 13])
def test_dft_matrix_is_unitary_and_matches_oracle(L):
    F = dft_matrix(L)
    assert np.allclose(F.conj().T @ F, np.eye(L), atol=1e-12)
    v = np.random.default_rng(L).standard_normal(L)
    assert np.allclose(F @ v, naive_dft(v), atol=1e-12)


def test_idft_inverts_dft(rng):
    v = rng.standard_normal(17) + 1j * rng.standard_normal(17)
    assert np.allclose(idft(dft(v)), v, atol=1e-13)


def test_dft_rejects_non_finite():
    with pytest.raises(ValueError):
        dft(np.array([1.0, np.nan]))


def test_dft_unitary_over_many_lengths():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        L = int(rng.integers(4, 257))
        v = rng.standard_normal(L)
        assert abs(np.linalg.norm(dft(v)) - np.linalg.norm(v)) <= 1e-10 * np.linalg.norm(v)


@given(st.integers(1, 64), st.integers(0, 2**32 - 1))
def test_conjugate_symmetry_of_real_input(L, seed):
    v = np.random.default_rng(seed).standard_normal(L)
    f = dft(v)
    mirrored = np.conj(f[(-np.arange(L)) % L])
    assert np.max(np.abs(f - mirrored)) <= 1e-12 * max(1.0, np.max(np.abs(f)))


def test_circ_conv_identity_and_shift(rng):
    x = rng.standard_normal(9)
    delta = np.eye(9)[0]
    assert np.allclose(circ_conv(delta, x), x, atol=1e-14)
    for s in range(9):
        assert np.allclose(circ_conv(np.eye(9)[s], x), np.roll(x, s), atol=1e-13)


@pytest.mark.parametrize("L", [7, 8])
def test_circ_conv_matches_direct_sum(L, rng):
    w, x = rng.standard_normal(L), rng.standard_normal(L)
    assert np.max(np.abs(circ_conv(w, x) - direct_circ_conv(w, x))) <= 1e-10


@given(st.integers(1, 80), st.integers(0, 2**32 - 1))
def test_circ_conv_fourier_identity_and_commutativity(L, seed):
    r = np.random.default_rng(seed)
    w, x = r.standard_normal(L), r.standard_normal(L)
    y = circ_conv(w, x)
    lhs, rhs = dft(y), np.sqrt(L) * dft(w) * dft(x)
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * max(1.0, np.max(np.abs(rhs)))
    assert np.allclose(y, circ_conv(x, w), atol=1e-10)


def test_circ_conv_stack_and_length_mismatch(rng):
    w = rng.standard_normal(6)
    X = rng.standard_normal((3, 6))
    Y = circ_conv(w, X)
    for n in range(3):
        assert np.allclose(Y[n], direct_circ_conv(w, X[n]), atol=1e-12)
    with pytest.raises(ValueError):
        circ_conv(w, rng.standard_normal(5))


def test_rng_streams_are_reproducible_and_distinct():
    a = make_rng(3, 1, "h").standard_normal(4)
    b = make_rng(3, 1, "h").standard_normal(4)
    c = make_rng(3, 1, "m").standard_normal(4)
    d = make_rng(3, 2, "h").standard_normal(4)
    assert np.array_equal(a, b)
    assert not np.allclose(a, c) and not np.allclose(a, d)
    assert derive_seed(1, "x") == derive_seed(1, "x") != derive_seed(1, "y")


def test_generic_basis_moments():
    # 10^4 redraws of a single column at L=100
    cols = np.stack([gen_generic_basis(100, 1, make_rng(7, t))[:, 0] for t in range(10_000)])
    n = cols.size
    var = 1 / 100
    assert abs(cols.mean()) <= 5 * np.sqrt(var / n)
    # variance of the sample variance of a Gaussian is 2 var^2 / n
    assert abs(cols.var() - var) <= 5 * np.sqrt(2 * var**2 / n)
    assert abs(np.mean(np.sum(cols**2, axis=1)) - 1.0) < 0.01


def test_generic_basis_determinism_and_errors():
    assert np.array_equal(gen_generic_basis(12, 3, 7), gen_generic_basis(12, 3, 7))
    with pytest.raises(ValueError):
        gen_generic_basis(4, 5, 0)


@pytest.mark.parametrize("L", [8, 9])
def test_generic_basis_fourier_rows_real_at_symmetric_frequencies(L):
    C = gen_generic_basis(L, 3, 1)
    c = np.sqrt(L) * dft(C, axis=0)
    assert np.max(np.abs(c[0].imag)) <= 1e-12
    if L % 2 == 0:
        assert np.max(np.abs(c[L // 2].imag)) <= 1e-12


def test_sparse_coeff_dense_and_cardinality():
    d = gen_sparse_coeff(10, 10, 0, dense=True)
    assert np.array_equal(d.support, np.arange(10)) and np.all(d.values != 0)
    s = gen_sparse_coeff(10, 3, 0)
    assert s.sparsity == 3 and np.count_nonzero(s.values) == 3
    assert np.all(s.values[np.setdiff1d(np.arange(10), s.support)] == 0)
    with pytest.raises(ValueError):
        gen_sparse_coeff(4, 5, 0)


def test_sparse_support_is_uniform():
    counts = Counter(tuple(gen_sparse_coeff(5, 2, make_rng(0, t)).support) for t in range(10_000))
    assert set(counts) == set(itertools.combinations(range(5), 2))
    for c in counts.values():
        assert abs(c / 10_000 - 0.1) <= 0.02


def test_identity_subset_basis():
    C = gen_identity_subset_basis(4, 4, 3)
    assert np.array_equal(np.sort(np.argmax(C, axis=0)), np.arange(4))
    assert np.allclose(C.T @ C, np.eye(4))
    C = gen_identity_subset_basis(6, 2, 5)
    assert np.count_nonzero(C) == 2 and len(set(np.argmax(C, axis=0))) == 2
    x = C @ np.ones(2)
    assert np.count_nonzero(x == 1.0) == 2 and np.count_nonzero(x) == 2
    with pytest.raises(ValueError):
        gen_identity_subset_basis(3, 4, 0)
