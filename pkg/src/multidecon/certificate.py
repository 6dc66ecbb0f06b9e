"""Golfing dual certificate and numerical checks of the optimality conditions.

The tangent-space projector acts on L x KN matrices:

    R(Z) = h h^T Z + P(Z m m^T) - h h^T Z m m^T

where ``P`` zeroes the rows outside the support ``omega`` of ``h``.
Certificate PASS is a sufficient condition for ``h m^T`` being the unique
nuclear-norm minimiser; FAIL is inconclusive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coherence import GolfingPartition, SOperators
from .lifting import MeasurementRows, apply_A_factored, gram_sub, operator_norm_A

__all__ = [
    "CertificateTrace",
    "Injectivity",
    "IterateCoherences",
    "OptimalityMargins",
    "ProjectorContext",
    "golfing_certificate",
    "injectivity_margin",
    "iterate_coherences",
    "project_P",
    "project_R",
    "project_R_perp",
    "verify_optimality",
]


class ProjectorContext:
    """Unit-norm ``h``, ``m`` and the support ``omega`` defining the tangent space."""

    def __init__(self, h, m, omega=None):
        h = np.asarray(h, dtype=float).ravel()
        m = np.asarray(m, dtype=float).ravel()
        nh, nm = np.linalg.norm(h), np.linalg.norm(m)
        if nh == 0 or nm == 0:
            raise ValueError("h and m must be nonzero")
        self.h = h / nh
        self.m = m / nm
        L = len(h)
        omega = np.flatnonzero(h) if omega is None else np.unique(np.asarray(omega, dtype=int))
        if omega.size and (omega[0] < 0 or omega[-1] >= L):
            raise ValueError("support index out of range")
        if np.setdiff1d(np.flatnonzero(h), omega).size:
            raise ValueError("h is not supported on omega")
        self.omega = omega
        self.L = L

    @property
    def shape(self) -> tuple[int, int]:
        return self.L, len(self.m)

    @property
    def X0(self) -> np.ndarray:
        return np.outer(self.h, self.m)


def project_P(Z, omega) -> np.ndarray:
    """Zero the rows of ``Z`` not indexed by ``omega``."""
    Z = np.asarray(Z)
    omega = np.asarray(omega, dtype=int)
    if omega.size and (omega.min() < 0 or omega.max() >= Z.shape[0]):
        raise ValueError("support index out of range")
    out = np.zeros_like(Z)
    out[omega] = Z[omega]
    return out


def project_R(ctx: ProjectorContext, Z) -> np.ndarray:
    """Orthogonal projection onto the intersection of the two tangent spaces."""
    Z = np.asarray(Z)
    if Z.shape != ctx.shape:
        raise ValueError(f"expected a {ctx.shape} matrix, got {Z.shape}")
    h, m = ctx.h, ctx.m
    hZ = h @ Z  # h^T Z
    Zm = Z @ m
    out = np.outer(h, hZ - (hZ @ m) * m)
    out[ctx.omega] += np.outer(Zm[ctx.omega], m)
    return out


def project_R_perp(ctx: ProjectorContext, Z) -> np.ndarray:
    return np.asarray(Z) - project_R(ctx, Z)


@dataclass
class CertificateTrace:
    """Output of the golfing recursion."""

    Y: np.ndarray
    W_norms: list[float]  # ||W_p||_F for p = 0..P (W_0 = -h m^T)
    W: list[np.ndarray] = field(repr=False)
    P: int = 0
    Q: int = 0

    @property
    def strictly_decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.W_norms[1:], self.W_norms[2:]))


def golfing_certificate(
    ctx: ProjectorContext, rows: MeasurementRows, partition: GolfingPartition, S_ops: SOperators
) -> CertificateTrace:
    """Build ``Y`` in the range of the adjoint by golfing over the partition blocks."""
    if rows.L != partition.L or rows.N != partition.N:
        raise ValueError("measurement rows and partition disagree on L or N")
    if not np.array_equal(ctx.omega, S_ops.omega):
        raise ValueError("context and S operators use different supports")
    L, Q, K = partition.L, partition.Q, rows.K
    X0 = ctx.X0
    Y = (L / Q) * gram_sub(rows, X0, partition.mask(0))
    W = [-X0, project_R(ctx, Y) - X0]
    for p in range(1, partition.P):
        V = S_ops.apply_dagger(-W[-1], p, K)
        Y = Y + gram_sub(rows, V, partition.mask(p))
        W.append(project_R(ctx, Y) - X0)
    return CertificateTrace(
        Y=Y, W=W, W_norms=[float(np.linalg.norm(w)) for w in W], P=partition.P, Q=Q
    )


@dataclass
class Injectivity:
    margin: float  # max ||R Z|| / (sqrt 2 ||A R Z||) over the tangent space
    lambda_min: float
    lambda_max: float
    deviation: float  # ||R A^* A R - R||
    dimension: int

    @property
    def holds(self) -> bool:
        return self.margin <= 1.0


def _tangent_basis(ctx: ProjectorContext):
    """Orthonormal basis of the tangent space as rank-1 pairs ``(u, v)``.

    ``{h e_j^T}`` spans the matrices with column space ``h``; the remaining
    directions ``u m^T`` use an orthonormal basis ``u`` of the vectors
    supported on ``omega`` and orthogonal to ``h``.
    """
    L, KN = ctx.shape
    pairs = [(ctx.h, e) for e in np.eye(KN)]
    s = len(ctx.omega)
    if s > 1:
        local = np.column_stack([ctx.h[ctx.omega], np.eye(s)])
        Qm, _ = np.linalg.qr(local)
        for j in range(1, s):
            u = np.zeros(L)
            u[ctx.omega] = Qm[:, j]
            pairs.append((u, ctx.m))
    return pairs


def injectivity_margin(ctx: ProjectorContext, rows: MeasurementRows | None = None, measure=None) -> Injectivity:
    """Smallest gain of the measurement map on the tangent space.

    ``measure(u, v)`` returns the measurements of ``u v^T`` as a flat
    (possibly complex) vector; by default it is the lifted map of ``rows``.
    """
    if measure is None:
        if rows is None:
            raise ValueError("need rows or a measure callable")

        def measure(u, v):
            return apply_A_factored(rows, u, v).ravel()

    cols = np.column_stack([measure(u, v) for u, v in _tangent_basis(ctx)])
    G = (cols.conj().T @ cols).real
    eig = np.linalg.eigvalsh(0.5 * (G + G.T))
    lmin, lmax = float(eig[0]), float(eig[-1])
    margin = math.inf if lmin <= 1e-14 * max(lmax, 1.0) else 1.0 / math.sqrt(2.0 * lmin)
    return Injectivity(
        margin=margin, lambda_min=lmin, lambda_max=lmax,
        deviation=float(np.max(np.abs(eig - 1.0))), dimension=len(eig),
    )


@dataclass
class OptimalityMargins:
    frobenius: float  # 4 gamma ||h m^T - R(Y)||_F
    spectral: float  # 2 ||R_perp(Y)||
    injectivity: float
    gamma: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "frobenius_margin": self.frobenius,
            "spectral_margin": self.spectral,
            "injectivity_margin": self.injectivity,
            "gamma": self.gamma,
            "pass": self.passed,
        }


def verify_optimality(
    ctx: ProjectorContext,
    rows: MeasurementRows | None,
    Y,
    gamma: float | None = None,
    injectivity: float | None = None,
) -> OptimalityMargins:
    """Check the sufficient optimality conditions for a candidate certificate ``Y``.

    ``gamma`` must dominate the operator norm; it defaults to the exact norm.
    Pass ``injectivity`` to reuse a precomputed margin.
    """
    Y = np.asarray(Y)
    if gamma is None:
        gamma = operator_norm_A(rows).value
    if injectivity is None:
        injectivity = injectivity_margin(ctx, rows).margin
    frob = 4.0 * gamma * float(np.linalg.norm(ctx.X0 - project_R(ctx, Y)))
    spec = 2.0 * float(np.linalg.norm(project_R_perp(ctx, Y), 2))
    return OptimalityMargins(
        frobenius=frob, spectral=spec, injectivity=float(injectivity), gamma=float(gamma),
        passed=bool(frob <= 1.0 and spec <= 1.0 and injectivity <= 1.0),
    )


@dataclass
class IterateCoherences:
    p: int
    rho: float
    nu: float
    mu: float
    block_energy_max: float  # max_n ||W_p D_n||_F^2
    rho_bound: float | None = None
    nu_bound: float | None = None
    mu_bound: float | None = None


def iterate_coherences(
    ctx: ProjectorContext,
    partition: GolfingPartition,
    S_ops: SOperators,
    W,
    p: int,
    mu0: float | None = None,
    rho0: float | None = None,
) -> IterateCoherences:
    """Coherences of the golfing iterate ``W_p`` against the next partition block.

    ``p`` counts golfing steps (``W_0 = -h m^T``); the quantities use block
    ``p`` (0-based) for the next step, so ``p`` ranges over ``0..P-1``.
    ``mu0`` and ``rho0`` (square roots of the coherences) enable the target
    decay rates.
    """
    W = np.asarray(W)
    L, Q, N = partition.L, partition.Q, partition.N
    K = W.shape[1] // N
    if not 0 <= p < partition.P:
        raise ValueError(f"p must lie in 0..{partition.P - 1}")
    Wb = W.reshape(L, N, K)
    energy = float(np.max(np.sum(np.abs(Wb) ** 2, axis=(0, 2))))
    omega = S_ops.omega
    # S^dag_{n,p} W D_n restricted to the support: (N, s, K)
    V = np.einsum("nij,jnk->nik", S_ops.Sdag[:, p], Wb[omega])
    # rows b_l^* for l in the next block: (N, Q, s)
    rows_next = S_ops.bhat_omega[partition.delta[:, p]]
    sq = np.sum(np.abs(rows_next @ V) ** 2, axis=2)  # (N, Q)
    rho_sq = (Q / L) * N * float(np.max(sq.sum(axis=1)))
    nu_sq = (Q**2 / L) * N * float(np.max(sq))
    if p >= 1:
        rows_cur = S_ops.bhat_omega[partition.delta[:, p - 1]]
        sq_cur = np.sum(np.abs(rows_cur @ V) ** 2, axis=2)
        mu_sq = (Q**2 / L) * float(np.sum(np.max(sq_cur, axis=1)))
    else:
        mu_sq = float("nan")
    out = IterateCoherences(p=p, rho=math.sqrt(rho_sq), nu=math.sqrt(nu_sq), mu=math.sqrt(mu_sq),
                            block_energy_max=energy)
    if rho0 is not None:
        out.rho_bound = 2.0**-p * math.sqrt(Q / L) * rho0
    if mu0 is not None and rho0 is not None:
        out.nu_bound = 2.0 ** (-p + 3) * mu0 * rho0
    if mu0 is not None:
        out.mu_bound = 2.0 ** (-p + 2) * mu0
    return out
