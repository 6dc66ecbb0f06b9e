"""Lifted linear measurement map for multi-input blind deconvolution.

The unknown pair ``(h, m)`` enters the observations only through the rank-1
matrix ``X0 = h m^T`` (L x KN, block ``n`` occupying columns ``n*K:(n+1)*K``).
Each Fourier-domain sample is a trace inner product

    yhat[l, n] = <A_{l,n}, X>,   A_{l,n} = b_l phi_{l,n}^*

with ``b_l = B^* f_l`` and ``phi_{l,n}`` holding ``c_{l,n}`` (row ``l`` of
``sqrt(L) F C_n``) in block ``n``.  Concretely

    yhat[l, n] = sum_{i,k} Bhat[l, i] X[i, nK + k] c[n, l, k],   Bhat = F B.

The map is defined on real L x KN matrices; its adjoint is taken with respect
to the real inner product ``<X, A*(u)> = Re <A(X), u>``.  The forward routines
also accept complex matrices (complex-linear extension), which the golfing
construction needs.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MeasurementRows",
    "OperatorNorm",
    "adjoint_A",
    "apply_A",
    "apply_A_factored",
    "apply_A_sub",
    "build_rows",
    "gram_sub",
    "operator_norm_A",
    "subset_mask",
]

ORTHO_TOL = 1e-10


class MeasurementRows:
    """Precomputed atoms ``b_l`` and ``c_{l,n}`` of the lifted map.

    Attributes
    ----------
    L, K, N : int
        Signal length, input subspace dimension and number of inputs.
    B : ndarray or None
        Sparsity basis; ``None`` stands for the identity.
    c : ndarray, shape (N, L, K)
        ``c[n, l]`` is the row ``c_{l,n}`` of ``sqrt(L) F C_n``.
    """

    def __init__(self, B, c, L, K, N):
        self.B = B
        self.c = c
        self.L, self.K, self.N = L, K, N
        self.c.setflags(write=False)

    @property
    def identity_basis(self) -> bool:
        return self.B is None

    @functools.cached_property
    def bhat(self) -> np.ndarray:
        """``F B``; row ``l`` equals ``b_l^*``."""
        if self.B is None:
            out = np.fft.fft(np.eye(self.L), axis=0, norm="ortho")
        else:
            out = np.fft.fft(self.B, axis=0, norm="ortho")
        out.setflags(write=False)
        return out

    @property
    def b(self) -> np.ndarray:
        """Array whose row ``l`` is ``b_l = B^* f_l``."""
        return self.bhat.conj()

    def fourier_basis(self, Z: np.ndarray) -> np.ndarray:
        """``F B Z`` for a matrix ``Z`` with L rows."""
        if self.B is None:
            return np.fft.fft(Z, axis=0, norm="ortho")
        return self.bhat @ Z

    def fourier_basis_T(self, Z: np.ndarray) -> np.ndarray:
        """``(F B)^T Z``; F is symmetric so this is ``B^T F Z``."""
        FZ = np.fft.fft(Z, axis=0, norm="ortho")
        if self.B is None:
            return FZ
        return self.B.T @ FZ

    @property
    def shape(self) -> tuple[int, int]:
        return self.L, self.K * self.N


def _as_basis_stack(bases) -> np.ndarray:
    if isinstance(bases, np.ndarray) and bases.ndim == 3:
        stack = bases
    else:
        bases = list(bases)
        if not bases:
            raise ValueError("need at least one input basis")
        shapes = {np.shape(C) for C in bases}
        if len(shapes) != 1:
            raise ValueError(f"input bases have mismatched shapes: {sorted(shapes)}")
        stack = np.stack([np.asarray(C, dtype=float) for C in bases])
    if stack.ndim != 3 or stack.shape[0] < 1:
        raise ValueError("bases must be a non-empty stack of L x K matrices")
    return stack


def build_rows(B, bases) -> MeasurementRows:
    """Precompute the measurement atoms.

    ``B`` is an orthonormal L x L matrix, or ``None`` / ``"identity"``.
    ``bases`` is a sequence of N real L x K matrices (or an (N, L, K) array).
    """
    stack = _as_basis_stack(bases)
    N, L, K = stack.shape
    if K > L:
        raise ValueError(f"input bases must satisfy K <= L, got K={K}, L={L}")
    if isinstance(B, str):
        if B != "identity":
            raise ValueError(f"unknown basis token {B!r}")
        B = None
    if B is not None:
        B = np.asarray(B, dtype=float)
        if B.shape != (L, L):
            raise ValueError(f"B must be {L}x{L}, got {B.shape}")
        dev = np.linalg.norm(B.T @ B - np.eye(L), 2)
        if dev > ORTHO_TOL:
            raise ValueError(f"B is not orthonormal (||B*B - I|| = {dev:.2e})")
        B = B.copy()
        B.setflags(write=False)
    # sqrt(L) * F C_n is the unnormalised FFT along the time axis
    c = np.fft.fft(stack, axis=1)
    return MeasurementRows(B, c, L, K, N)


def _check_lifted(rows: MeasurementRows, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X)
    if X.shape != rows.shape:
        raise ValueError(f"lifted matrix must be {rows.shape}, got {X.shape}")
    return X


def apply_A(rows: MeasurementRows, X) -> np.ndarray:
    """Dense application: returns the (L, N) array ``yhat[l, n] = <A_{l,n}, X>``."""
    X = _check_lifted(rows, X)
    L, K, N = rows.L, rows.K, rows.N
    Z = (rows.bhat @ X).reshape(L, N, K)
    return np.einsum("lnk,nlk->ln", Z, rows.c)


def apply_A_factored(rows: MeasurementRows, H, M) -> np.ndarray:
    """``apply_A(rows, H @ M.T)`` without forming the L x KN product."""
    H = np.asarray(H)
    M = np.asarray(M)
    if H.ndim == 1:
        H = H[:, None]
    if M.ndim == 1:
        M = M[:, None]
    L, K, N = rows.L, rows.K, rows.N
    if H.shape[0] != L or M.shape[0] != K * N:
        raise ValueError(f"factor shapes {H.shape}, {M.shape} do not match L={L}, KN={K * N}")
    if H.shape[1] != M.shape[1]:
        raise ValueError(f"rank mismatch: H has {H.shape[1]} columns, M has {M.shape[1]}")
    R = H.shape[1]
    Hf = rows.fourier_basis(H)
    CM = rows.c @ M.reshape(N, K, R)
    return np.einsum("lr,nlr->ln", Hf, CM)


def adjoint_A(rows: MeasurementRows, u) -> np.ndarray:
    """Real adjoint: ``Re sum_{l,n} u[l, n] A_{l,n}`` as a real L x KN matrix."""
    u = np.asarray(u)
    L, K, N = rows.L, rows.K, rows.N
    if u.shape != (L, N):
        raise ValueError(f"measurements must be ({L}, {N}), got {u.shape}")
    V = u.conj().T[:, :, None] * rows.c  # (N, L, K)
    V = np.moveaxis(V, 0, 1).reshape(L, N * K)
    return rows.fourier_basis_T(V).real


def _check_subset(rows: MeasurementRows, subset) -> np.ndarray:
    sub = np.asarray(subset, dtype=int).reshape(-1, 2)
    if sub.size == 0:
        return sub
    ell, n = sub[:, 0], sub[:, 1]
    if ell.min() < 0 or ell.max() >= rows.L or n.min() < 0 or n.max() >= rows.N:
        raise ValueError("subset index out of range")
    flat = ell * rows.N + n
    if len(np.unique(flat)) != len(flat):
        raise ValueError("subset contains duplicate pairs")
    return sub


def apply_A_sub(rows: MeasurementRows, X, subset) -> np.ndarray:
    """Measurements indexed by the ``(l, n)`` pairs of ``subset``, in order."""
    sub = _check_subset(rows, subset)
    if sub.size == 0:
        return np.zeros(0, dtype=complex)
    return apply_A(rows, X)[sub[:, 0], sub[:, 1]]


def subset_mask(rows: MeasurementRows, subset) -> np.ndarray:
    """Boolean (L, N) indicator of a pair subset."""
    sub = _check_subset(rows, subset)
    mask = np.zeros((rows.L, rows.N), dtype=bool)
    if sub.size:
        mask[sub[:, 0], sub[:, 1]] = True
    return mask


def gram_sub(rows: MeasurementRows, X, mask) -> np.ndarray:
    """``A_p^* A_p (X)`` for the pairs flagged in the (L, N) boolean ``mask``.

    ``X`` may be complex; the result is the real adjoint of the restricted
    measurements and hence lies in the range of ``A^*``.
    """
    return adjoint_A(rows, np.where(mask, apply_A(rows, X), 0))


@dataclass(frozen=True)
class OperatorNorm:
    value: float
    bound: float
    beta: float


def operator_norm_A(rows: MeasurementRows, beta: float = 4.0) -> OperatorNorm:
    """Exact ``||A|| = max_{l,n} ||b_l|| ||c_{l,n}||`` and the random-model bound.

    The atoms are mutually orthogonal, so the norm of the map (on complex
    L x KN matrices) is the largest atom norm.  ``bound`` is
    ``sqrt(beta * K * log(L N))``.
    """
    bnorm = np.linalg.norm(rows.bhat, axis=1)  # ||b_l|| = ||row l of F B||
    cnorm = np.linalg.norm(rows.c, axis=2)  # (N, L)
    value = float(np.max(cnorm * bnorm[None, :]))
    bound = float(np.sqrt(beta * rows.K * np.log(rows.L * rows.N)))
    return OperatorNorm(value=value, bound=bound, beta=beta)
