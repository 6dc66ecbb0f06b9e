"""Coherence parameters, golfing partitions and restricted-isometry checks.

Conventions: ``Bhat = F B`` (row ``l`` is ``b_l^*``), support ``omega`` is a
sorted index array, and partition index ``p`` is 0-based (the first golfing
block is ``p = 0``).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .lifting import ORTHO_TOL
from .spectral import make_rng

__all__ = [
    "CoherenceReport",
    "GolfingPartition",
    "Mu0",
    "SOperators",
    "build_S",
    "build_partition",
    "coherence_report",
    "default_partition_count",
    "fourier_basis",
    "mu0_sq",
    "mu_max_sq",
    "rho0_sq",
    "rip_deviation",
    "rip_deviation_uniform",
    "theorem_bound",
]

COND_LIMIT = 1e12


def fourier_basis(B, L: int | None = None) -> np.ndarray:
    """``Bhat = F B`` for an orthonormal (or unitary) ``B``; ``None`` or ``"identity"`` means I."""
    if B is None or (isinstance(B, str) and B == "identity"):
        if L is None:
            raise ValueError("L is required for the identity basis")
        return np.fft.fft(np.eye(L), axis=0, norm="ortho")
    B = np.asarray(B)
    B = B.astype(complex if np.iscomplexobj(B) else float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValueError("B must be square")
    dev = np.linalg.norm(B.conj().T @ B - np.eye(B.shape[0]), 2)
    if dev > ORTHO_TOL:
        raise ValueError(f"B is not orthonormal (||B*B - I|| = {dev:.2e})")
    return np.fft.fft(B, axis=0, norm="ortho")


def mu_max_sq(B, L: int | None = None) -> float:
    """``L * max |(F B)[w, l]|^2``; lies in ``[1, L]``."""
    Bhat = fourier_basis(B, L)
    return float(Bhat.shape[0] * np.max(np.abs(Bhat) ** 2))


def rho0_sq(m_blocks) -> float:
    """``N * max_n ||m_n||^2 / ||m||^2``; lies in ``[1, N]``."""
    blocks = [np.asarray(b, dtype=float).ravel() for b in m_blocks]
    energy = np.array([b @ b for b in blocks])
    total = energy.sum()
    if total == 0:
        raise ValueError("all input blocks are zero")
    return float(len(blocks) * energy.max() / total)


@dataclass(frozen=True)
class GolfingPartition:
    """Per-input partitions of the frequency indices into ``P`` blocks of size ``Q``.

    ``delta[n, p]`` holds the (sorted) indices of block ``p`` for input ``n``.
    ``L`` is the effective length, padded up to a multiple of ``P`` when needed.
    """

    L: int
    N: int
    P: int
    delta: np.ndarray  # (N, P, Q)
    seed: int
    requested_L: int

    @property
    def Q(self) -> int:
        return self.delta.shape[2]

    @property
    def padded(self) -> bool:
        return self.L != self.requested_L

    def pairs(self, p: int) -> np.ndarray:
        """Index pairs ``(l, n)`` making up the golfing block ``p``."""
        n_idx = np.repeat(np.arange(self.N), self.Q)
        return np.column_stack([self.delta[:, p, :].ravel(), n_idx])

    def mask(self, p: int) -> np.ndarray:
        m = np.zeros((self.L, self.N), dtype=bool)
        m[self.delta[:, p, :], np.arange(self.N)[:, None]] = True
        return m


def build_partition(L: int, N: int, P: int, seed: int) -> GolfingPartition:
    """Independent uniformly random partitions of ``range(L)`` into ``P`` equal blocks, one per input."""
    if P < 1 or P > L:
        raise ValueError(f"need 1 <= P <= L, got P={P}, L={L}")
    L_eff = -(-L // P) * P
    Q = L_eff // P
    delta = np.empty((N, P, Q), dtype=int)
    for n in range(N):
        perm = make_rng(seed, "partition", n).permutation(L_eff)
        delta[n] = np.sort(perm.reshape(P, Q), axis=1)
    return GolfingPartition(L=L_eff, N=N, P=P, delta=delta, seed=seed, requested_L=L)


def default_partition_count(L: int, K: int, N: int, S: int, beta: float = 4.0) -> int:
    """``ceil(0.5 log2(4 beta K log(LN)))``, reduced until ``L / P >= S``."""
    P = max(1, math.ceil(0.5 * math.log2(4 * beta * K * math.log(L * N))))
    while P > 1 and L // P < S:
        P -= 1
    return P


@dataclass(frozen=True)
class SOperators:
    """``S_{n,p}`` and its support-restricted inverse, stored on ``omega x omega``.

    ``S[n, p]`` is the ``|omega| x |omega|`` block of
    ``sum_{l in delta[n, p]} (P b_l)(P b_l)^*``; ``Sdag[n, p]`` is its inverse.
    """

    omega: np.ndarray
    S: np.ndarray  # (N, P, s, s) complex Hermitian
    Sdag: np.ndarray
    min_eig: float
    L: int
    Q: int
    bhat_omega: np.ndarray  # (L, s) columns of F B on the support

    def full(self, n: int, p: int, dagger: bool = False) -> np.ndarray:
        """L x L embedding of ``S_{n,p}`` (or ``S^dagger_{n,p}``)."""
        out = np.zeros((self.L, self.L), dtype=complex)
        blk = self.Sdag[n, p] if dagger else self.S[n, p]
        out[np.ix_(self.omega, self.omega)] = blk
        return out

    def eigen_bounds(self) -> tuple[float, float]:
        """``(max ||S_{n,p}||, max ||S^dagger_{n,p}||)``."""
        s_max = float(np.max(np.linalg.eigvalsh(self.S)[..., -1]))
        sd_max = float(np.max(np.linalg.eigvalsh(self.Sdag)[..., -1]))
        return s_max, sd_max

    def eigen_bounds_hold(self) -> bool:
        s_max, sd_max = self.eigen_bounds()
        return s_max <= 5 * self.Q / (4 * self.L) and sd_max <= 4 * self.L / (3 * self.Q)

    def apply_dagger(self, X: np.ndarray, p: int, K: int) -> np.ndarray:
        """``sum_n S^dagger_{n,p} X D_n`` for an L x KN matrix ``X``."""
        N = self.S.shape[0]
        Xo = X[self.omega].reshape(len(self.omega), N, K)
        out = np.zeros(X.shape, dtype=complex)
        out[self.omega] = np.einsum("nij,jnk->ink", self.Sdag[:, p], Xo).reshape(len(self.omega), N * K)
        return out


def _normalize_support(omega, L: int) -> np.ndarray:
    omega = np.unique(np.asarray(omega, dtype=int))
    if omega.size and (omega[0] < 0 or omega[-1] >= L):
        raise ValueError("support index out of range")
    return omega


def build_S(partition: GolfingPartition, B, omega) -> SOperators:
    """Restricted Gram blocks of the partitioned Fourier rows and their inverses."""
    L, Q = partition.L, partition.Q
    omega = _normalize_support(omega, L)
    s = len(omega)
    if s == 0:
        raise ValueError("empty support")
    if s > Q:
        raise ValueError(f"support size {s} exceeds block size Q={Q}; the restricted blocks would be singular")
    Bo = fourier_basis(B, L)[:, omega]  # (L, s)
    rowsel = Bo[partition.delta]  # (N, P, Q, s)
    S = np.einsum("npqi,npqj->npij", rowsel.conj(), rowsel)
    S = 0.5 * (S + np.conj(np.swapaxes(S, -1, -2)))
    eig = np.linalg.eigvalsh(S)
    cond = eig[..., -1] / np.maximum(eig[..., 0], 1e-300)
    bad = np.argwhere((eig[..., 0] <= 0) | (cond > COND_LIMIT))
    if bad.size:
        n, p = bad[0]
        raise np.linalg.LinAlgError(
            f"S_(n={n}, p={p}) restricted to the support is singular or ill-conditioned "
            f"(condition number {cond[n, p]:.2e})"
        )
    Sdag = np.linalg.inv(S)
    Sdag = 0.5 * (Sdag + np.conj(np.swapaxes(Sdag, -1, -2)))
    return SOperators(
        omega=omega, S=S, Sdag=Sdag, min_eig=float(eig[..., 0].min()), L=L, Q=Q, bhat_omega=Bo
    )


def rip_deviation(partition: GolfingPartition, B, omega) -> float:
    """``max_{n,p} || sum_{l in delta[n,p]} P b_l b_l^* P - (Q/L) P ||`` for the given support."""
    L, Q = partition.L, partition.Q
    omega = _normalize_support(omega, L)
    Bo = fourier_basis(B, L)[:, omega]
    rowsel = Bo[partition.delta]
    S = np.einsum("npqi,npqj->npij", rowsel.conj(), rowsel)
    S = 0.5 * (S + np.conj(np.swapaxes(S, -1, -2)))
    eig = np.linalg.eigvalsh(S) - Q / L
    return float(np.max(np.abs(eig)))


def rip_deviation_uniform(partition: GolfingPartition, B, S: int) -> float:
    """Supremum of :func:`rip_deviation` over every support of size ``S`` (exhaustive)."""
    if math.comb(partition.L, S) > 200_000:
        raise ValueError("exhaustive search too large")
    return max(rip_deviation(partition, B, om) for om in itertools.combinations(range(partition.L), S))


@dataclass(frozen=True)
class Mu0:
    value: float
    terms: tuple[float, float, float]


def mu0_sq(B, h, partition: GolfingPartition, S_ops: SOperators) -> Mu0:
    """Frequency-domain diffusion of ``h`` and of its two golfing perturbations.

    Returns ``L * max`` of

    * ``||Bhat h||_inf^2 / ||h||^2``
    * ``(Q/L)^2 max_{n,p} ||Bhat S^dag_{n,p} h||_inf^2 / ||h||^2``
    * ``max_{n,n'} ||Bhat S^dag_{n,1} S_{n',0} h||_inf^2 / ||h||^2``

    together with the three terms (already scaled by ``L``).  The last term
    needs at least two partition blocks and is ``nan`` otherwise.
    """
    h = np.asarray(h, dtype=float)
    L, Q = partition.L, partition.Q
    hh = float(h @ h)
    if hh == 0:
        raise ValueError("h must be nonzero")
    omega = S_ops.omega
    off = np.setdiff1d(np.flatnonzero(h), omega)
    if off.size:
        raise ValueError("h is not supported on the support of S_ops")
    Bhat = fourier_basis(B, L)
    Bo = Bhat[:, omega]
    ho = h[omega]
    t1 = L * np.max(np.abs(Bhat @ h)) ** 2 / hh
    z = np.einsum("npij,j->npi", S_ops.Sdag, ho)  # S^dag_{n,p} h
    t2 = L * (Q / L) ** 2 * np.max(np.abs(z @ Bo.T)) ** 2 / hh
    if partition.P >= 2:
        s1 = np.einsum("nij,j->ni", S_ops.S[:, 0], ho)  # S_{n',0} h
        zz = np.einsum("nij,mj->nmi", S_ops.Sdag[:, 1], s1)  # S^dag_{n,1} S_{n',0} h
        t3 = L * np.max(np.abs(zz @ Bo.T)) ** 2 / hh
    else:
        t3 = float("nan")
    terms = (float(t1), float(t2), float(t3))
    return Mu0(value=float(np.nanmax(terms)), terms=terms)


def theorem_bound(
    L: int,
    K: int,
    N: int,
    S: int,
    mu0_sq: float,
    mu_max_sq: float,
    rho0_sq: float,
    beta: float = 4.0,
    C: float = 1.0,
) -> dict:
    """Margins of the sample-complexity hypotheses (``< 1`` means satisfied).

    The constant is modelled as ``C' = C * beta``.  ``alpha1 = log(K log(LN))``
    and ``alpha2 = log(S log(LN))``; when either log argument is ``<= 1`` the
    regime is reported as undefined.
    """
    if min(L, K, N, S, mu0_sq, mu_max_sq, rho0_sq, beta, C) <= 0:
        raise ValueError("all quantities must be positive")
    logLN = math.log(L * N)
    Cp = C * beta
    out = {"C_prime": Cp, "alpha1": None, "alpha2": None, "L_margin": None, "N_margin": None, "defined": False}
    if K * logLN <= 1 or S * logLN <= 1:
        return out
    a1 = math.log(K * logLN)
    a2 = math.log(S * logLN)
    lhs = max(mu0_sq * a1 * K, mu_max_sq * S * a2 * math.log(S) ** 2)
    rhs = L / (Cp * a1 * logLN**2)
    out.update(
        alpha1=a1, alpha2=a2, defined=True,
        L_margin=lhs / rhs,
        N_margin=Cp * rho0_sq * a1 * logLN / N,
    )
    return out


@dataclass
class CoherenceReport:
    mu_max_sq: float
    rho0_sq: float
    mu0_sq: float
    mu0_terms: tuple[float, float, float]
    rip_deviation: float
    eigen_bounds: tuple[float, float]
    eigen_bounds_hold: bool
    margins: dict
    L: int
    Q: int
    P: int

    def to_dict(self) -> dict:
        return {
            "mu_max_sq": self.mu_max_sq,
            "rho0_sq": self.rho0_sq,
            "mu0_sq": self.mu0_sq,
            "mu0_terms": list(self.mu0_terms),
            "rip_deviation": self.rip_deviation,
            "eigen_bounds": list(self.eigen_bounds),
            "eigen_bounds_hold": self.eigen_bounds_hold,
            "margins": self.margins,
            "L": self.L,
            "Q": self.Q,
            "P": self.P,
        }


def coherence_report(B, h, m_blocks, partition: GolfingPartition, beta: float = 4.0, C: float = 1.0) -> CoherenceReport:
    """All coherence quantities of an instance in one report."""
    h = np.asarray(h, dtype=float)
    omega = np.flatnonzero(h)
    S_ops = build_S(partition, B, omega)
    mu0 = mu0_sq(B, h, partition, S_ops)
    mmax = mu_max_sq(B, partition.L)
    rho = rho0_sq(m_blocks)
    K = len(np.asarray(m_blocks[0]).ravel())
    N = len(m_blocks)
    return CoherenceReport(
        mu_max_sq=mmax,
        rho0_sq=rho,
        mu0_sq=mu0.value,
        mu0_terms=mu0.terms,
        rip_deviation=rip_deviation(partition, B, omega),
        eigen_bounds=S_ops.eigen_bounds(),
        eigen_bounds_hold=S_ops.eigen_bounds_hold(),
        margins=theorem_bound(partition.L, K, N, len(omega), mu0.value, mmax, rho, beta, C),
        L=partition.L,
        Q=partition.Q,
        P=partition.P,
    )
