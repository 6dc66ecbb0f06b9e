"""DFT conventions, circular convolution and seeded random generators.

All indices are 0-based.  The unitary DFT used throughout is

    F[w, l] = exp(-2j*pi*w*l/L) / sqrt(L)

so that circular convolution satisfies ``dft(w (*) x) = sqrt(L) * dft(w) * dft(x)``.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SparseCoeff",
    "circ_conv",
    "derive_seed",
    "dft",
    "dft_matrix",
    "gen_generic_basis",
    "gen_identity_subset_basis",
    "gen_sparse_coeff",
    "idft",
    "make_rng",
]


def _role_key(key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("seed keys must be non-negative")
        return int(key)
    return zlib.crc32(str(key).encode("utf-8"))


def make_rng(seed: int, *keys) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``.

    Keys may be non-negative integers (trial ids) or strings (object roles);
    each distinct key tuple yields a statistically independent stream.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_role_key(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *keys) -> int:
    """64-bit integer seed derived from ``(seed, *keys)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_role_key(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _check_finite(v: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")


def dft(v, axis: int = 0) -> np.ndarray:
    """Unitary DFT along ``axis``."""
    v = np.asarray(v)
    if v.ndim == 0 or v.shape[axis] < 1:
        raise ValueError("dft needs a non-empty vector")
    _check_finite(v, "input")
    return np.fft.fft(v, axis=axis, norm="ortho")


def idft(v, axis: int = 0) -> np.ndarray:
    """Inverse of :func:`dft`."""
    v = np.asarray(v)
    _check_finite(v, "input")
    return np.fft.ifft(v, axis=axis, norm="ortho")


def dft_matrix(L: int) -> np.ndarray:
    """Explicit L x L unitary DFT matrix."""
    idx = np.arange(L)
    return np.exp(-2j * np.pi * np.outer(idx, idx) / L) / np.sqrt(L)


def circ_conv(w, x) -> np.ndarray:
    """Circular convolution ``y[i] = sum_j w[j] x[(i - j) mod L]``.

    ``x`` may be a stack of signals along its leading axis; the convolution is
    taken along the last axis.
    """
    w = np.asarray(w)
    x = np.asarray(x)
    if w.ndim != 1:
        raise ValueError("w must be a vector")
    if x.shape[-1] != w.shape[0]:
        raise ValueError(f"length mismatch: {w.shape[0]} vs {x.shape[-1]}")
    _check_finite(w, "w")
    _check_finite(x, "x")
    y = np.fft.ifft(np.fft.fft(w) * np.fft.fft(x, axis=-1), axis=-1)
    if np.isrealobj(w) and np.isrealobj(x):
        return y.real
    return y


def gen_generic_basis(L: int, K: int, seed) -> np.ndarray:
    """L x K matrix with i.i.d. Normal(0, 1/L) entries."""
    if not 1 <= K <= L:
        raise ValueError(f"need 1 <= K <= L, got K={K}, L={L}")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    return rng.standard_normal((L, K)) / np.sqrt(L)


def gen_identity_subset_basis(L: int, K: int, seed) -> np.ndarray:
    """L x K matrix made of K distinct, uniformly chosen identity columns."""
    if not 1 <= K <= L:
        raise ValueError(f"need 1 <= K <= L, got K={K}, L={L}")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    idx = rng.choice(L, size=K, replace=False)
    C = np.zeros((L, K))
    C[idx, np.arange(K)] = 1.0
    return C


@dataclass(frozen=True)
class SparseCoeff:
    values: np.ndarray
    support: np.ndarray

    @property
    def sparsity(self) -> int:
        return len(self.support)


def gen_sparse_coeff(L: int, S: int, seed, dense: bool = False) -> SparseCoeff:
    """S-sparse vector with uniform support and standard normal nonzeros.

    With ``dense=True`` the support is all of ``range(L)`` and ``S`` is ignored.
    """
    if dense:
        S = L
    if not 1 <= S <= L:
        raise ValueError(f"need 1 <= S <= L, got S={S}, L={L}")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    support = np.arange(L) if S == L else np.sort(rng.choice(L, size=S, replace=False))
    values = np.zeros(L)
    values[support] = rng.standard_normal(S)
    return SparseCoeff(values=values, support=support)
