"""Factored (Burer-Monteiro) recovery of the lifted rank-1 matrix.

We minimise the penalised least-squares form

    f(H, M) = 1/2 ||A(H M^T) - yhat||^2 + lam/2 (||H||_F^2 + ||M||_F^2)

over real H (L x R) and M (KN x R) with L-BFGS, decreasing ``lam``
geometrically across warm-started rounds.  Because ``lam/2 (||H||^2 + ||M||^2)``
is a variational form of ``lam ||H M^T||_*``, small ``lam`` tracks the
minimum nuclear-norm solution consistent with the data.

Real inputs give conjugate-symmetric spectra, so only the frequencies
``0..L//2`` are evaluated, each weighted by its multiplicity.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .lbfgs import lbfgs
from .lifting import MeasurementRows
from .spectral import make_rng

__all__ = [
    "FactorPair",
    "FactoredObjective",
    "SolveReport",
    "SolverConfig",
    "align_scale",
    "classify_recovery",
    "extract_rank1",
    "factored_error",
    "lbfgs_minimize",
    "lifted_error",
    "objective_and_gradient",
    "solve_blind_deconv",
]


@dataclass(frozen=True)
class FactorPair:
    H: np.ndarray
    M: np.ndarray

    @property
    def R(self) -> int:
        return self.H.shape[1]

    def flat(self) -> np.ndarray:
        return np.concatenate([self.H.ravel(), self.M.ravel()])

    @classmethod
    def from_flat(cls, x: np.ndarray, L: int, KN: int, R: int) -> "FactorPair":
        return cls(x[: L * R].reshape(L, R), x[L * R :].reshape(KN, R))


@dataclass
class SolverConfig:
    rank: int = 2
    lam_start: float = 1e-2
    lam_end: float = 1e-8
    rounds: int = 4
    memory: int = 20
    c1: float = 1e-4
    c2: float = 0.9
    max_iters: int = 2000
    gtol: float = 1e-9
    rank_tol: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if not (self.lam_start > 0 and self.lam_end > 0):
            raise ValueError("penalty weights must be positive")
        if self.rounds < 1 or self.max_iters < 1 or self.memory < 1:
            raise ValueError("rounds, max_iters and memory must be >= 1")
        if not (self.gtol > 0 and 0 < self.c1 < self.c2 < 1):
            raise ValueError("need gtol > 0 and 0 < c1 < c2 < 1")

    def lambdas(self, y_norm_sq: float) -> np.ndarray:
        return y_norm_sq * np.geomspace(self.lam_start, self.lam_end, self.rounds)

    def to_dict(self) -> dict:
        return asdict(self)


class FactoredObjective:
    """Value and gradient of the penalised objective on flattened ``(H, M)``."""

    def __init__(self, rows: MeasurementRows, y_hat, lam: float, rank: int):
        y_hat = np.asarray(y_hat)
        if y_hat.shape != (rows.L, rows.N):
            raise ValueError(f"measurements must be ({rows.L}, {rows.N}), got {y_hat.shape}")
        L, K, N = rows.L, rows.K, rows.N
        self.rows = rows
        self.L, self.K, self.N, self.R = L, K, N, rank
        self.lam = float(lam)
        Lh = L // 2 + 1
        self.Lh = Lh
        wt = np.full(Lh, 2.0)
        wt[0] = 1.0
        if L % 2 == 0:
            wt[-1] = 1.0
        self.wt = wt
        self.y = y_hat[:Lh]
        # real stacking [Re c; Im c] along frequency so products with real M are one GEMM
        ch = rows.c[:, :Lh, :]
        self.C2 = np.ascontiguousarray(np.concatenate([ch.real, ch.imag], axis=1))
        self.bhat_h = None if rows.identity_basis else rows.bhat[:Lh]

    def set_lambda(self, lam: float) -> None:
        self.lam = float(lam)

    def _fourier_H(self, H):
        if self.bhat_h is None:
            return np.fft.rfft(H, axis=0, norm="ortho")
        return self.bhat_h @ H

    def _fourier_H_T(self, Z):
        # Re sum_{l in half} Bhat[l, i] Z[l]
        if self.bhat_h is None:
            P = np.zeros((self.L, Z.shape[1]), dtype=complex)
            P[: self.Lh] = Z
            return np.fft.fft(P, axis=0, norm="ortho").real
        return (self.bhat_h.T @ Z).real

    def residual(self, H, M):
        Lh, N, K = self.Lh, self.N, self.K
        Hf = self._fourier_H(H)
        CM2 = self.C2 @ M.reshape(N, K, -1)
        CM = CM2[:, :Lh] + 1j * CM2[:, Lh:]
        pred = np.einsum("lr,nlr->ln", Hf, CM)
        return pred - self.y, Hf, CM

    def value_grad(self, H, M):
        L, Lh, K, N = self.L, self.Lh, self.K, self.N
        r, Hf, CM = self.residual(H, M)
        wr = self.wt[:, None] * r.conj()
        fit = 0.5 * float(np.sum(self.wt[:, None] * (r.real**2 + r.imag**2)))
        pen = 0.5 * self.lam * (float(np.sum(H * H)) + float(np.sum(M * M)))
        gH = self._fourier_H_T(np.einsum("ln,nlr->lr", wr, CM)) + self.lam * H
        Z = wr.T[:, :, None] * Hf[None]  # (N, Lh, R)
        Z2 = np.concatenate([Z.real, -Z.imag], axis=1)
        gM = (self.C2.transpose(0, 2, 1) @ Z2).reshape(K * N, -1) + self.lam * M
        return fit + pen, gH, gM

    def __call__(self, x):
        fp = FactorPair.from_flat(x, self.L, self.K * self.N, self.R)
        f, gH, gM = self.value_grad(fp.H, fp.M)
        if not np.isfinite(f):
            raise FloatingPointError("objective became non-finite")
        return f, np.concatenate([gH.ravel(), gM.ravel()])


def objective_and_gradient(rows: MeasurementRows, y_hat, H, M, lam: float):
    """``(value, grad_H, grad_M)`` of the penalised objective."""
    H = np.atleast_2d(np.asarray(H, dtype=float).T).T
    M = np.atleast_2d(np.asarray(M, dtype=float).T).T
    if H.shape[1] != M.shape[1]:
        raise ValueError("H and M must share their number of columns")
    if H.shape[0] != rows.L or M.shape[0] != rows.K * rows.N:
        raise ValueError("factor shapes do not match the measurement rows")
    obj = FactoredObjective(rows, y_hat, lam, H.shape[1])
    f, gH, gM = obj.value_grad(H, M)
    if not (np.isfinite(f) and np.all(np.isfinite(gH)) and np.all(np.isfinite(gM))):
        raise FloatingPointError("non-finite objective or gradient")
    return f, gH, gM


@dataclass
class SolveReport:
    H: np.ndarray
    M: np.ndarray
    objective: float
    residual: float
    iterations: int
    converged: bool
    sigma_ratio_H: float
    sigma_ratio_M: float
    message: str = ""
    rounds: list[dict] = field(default_factory=list)
    f_history: list[float] = field(default_factory=list)
    seconds: float = 0.0
    rank_tol: float = 1e-3

    @property
    def rank_deficient(self) -> bool:
        return max(self.sigma_ratio_H, self.sigma_ratio_M) <= self.rank_tol

    def summary(self) -> dict:
        return {
            "objective": self.objective,
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "sigma_ratio_H": self.sigma_ratio_H,
            "sigma_ratio_M": self.sigma_ratio_M,
            "rank_deficient": self.rank_deficient,
            "message": self.message,
            "seconds": self.seconds,
            "rounds": self.rounds,
        }


def _sigma_ratio(A: np.ndarray) -> float:
    s = np.linalg.svd(A, compute_uv=False)
    if len(s) < 2 or s[0] == 0:
        return 0.0
    return float(s[1] / s[0])


def _balance(H, M):
    """Refactor ``H M^T`` so both factors carry the same singular values."""
    Qh, Rh = np.linalg.qr(H)
    Qm, Rm = np.linalg.qr(M)
    U, s, Vt = np.linalg.svd(Rh @ Rm.T)
    root = np.sqrt(s)
    return (Qh @ U) * root, (Qm @ Vt.T) * root


def lbfgs_minimize(fun, start: FactorPair, config: SolverConfig, gtol: float | None = None):
    """Run L-BFGS on a factor pair; returns ``(FactorPair, LbfgsResult)``."""
    L, KN = start.H.shape[0], start.M.shape[0]
    res = lbfgs(
        fun, start.flat(), memory=config.memory, max_iters=config.max_iters,
        gtol=config.gtol if gtol is None else gtol, c1=config.c1, c2=config.c2,
    )
    return FactorPair.from_flat(res.x, L, KN, start.R), res


def solve_blind_deconv(rows: MeasurementRows, y_hat, config: SolverConfig | None = None) -> SolveReport:
    """Recover ``(H, M)`` from lifted measurements by penalised L-BFGS with continuation."""
    config = config or SolverConfig()
    t0 = time.perf_counter()
    y_hat = np.asarray(y_hat)
    L, KN, R = rows.L, rows.K * rows.N, config.rank
    obj = FactoredObjective(rows, y_hat, config.lam_start, R)
    y_norm_sq = float(np.sum(obj.wt[:, None] * np.abs(obj.y) ** 2))
    y_norm = np.sqrt(y_norm_sq)

    rng = make_rng(config.seed, "init")
    std = (L * R) ** -0.25  # variance 1/sqrt(L R)
    fp = FactorPair(std * rng.standard_normal((L, R)), std * rng.standard_normal((KN, R)))

    rounds, history = [], []
    iterations, res = 0, None
    for lam in config.lambdas(y_norm_sq):
        obj.set_lambda(lam)
        fp = FactorPair(*_balance(fp.H, fp.M))
        try:
            fp, res = lbfgs_minimize(obj, fp, config, gtol=config.gtol * max(1.0, y_norm))
        except FloatingPointError as exc:
            return _report(obj, fp, iterations, False, f"numerical failure: {exc}", rounds, history, t0, config)
        iterations += res.iterations
        history.extend(res.f_history)
        rounds.append({
            "lambda": float(lam), "iterations": res.iterations, "evals": res.n_evals,
            "objective": res.f, "grad_norm": res.grad_norm, "message": res.message,
        })
    return _report(obj, fp, iterations, res.converged, res.message, rounds, history, t0, config)


def _report(obj, fp, iterations, converged, message, rounds, history, t0, config) -> SolveReport:
    r, _, _ = obj.residual(fp.H, fp.M)
    resid = float(np.sqrt(np.sum(obj.wt[:, None] * np.abs(r) ** 2)))
    f, _, _ = obj.value_grad(fp.H, fp.M)
    rep = SolveReport(
        H=fp.H, M=fp.M, objective=float(f), residual=resid, iterations=iterations,
        converged=bool(converged), sigma_ratio_H=_sigma_ratio(fp.H),
        sigma_ratio_M=_sigma_ratio(fp.M), message=message, rounds=rounds,
        f_history=history, seconds=time.perf_counter() - t0, rank_tol=config.rank_tol,
    )
    return rep


def extract_rank1(H, M):
    """Leading singular triple ``(u, v, sigma)`` of ``H M^T`` via the small factors."""
    H = np.atleast_2d(np.asarray(H, dtype=float).T).T
    M = np.atleast_2d(np.asarray(M, dtype=float).T).T
    Qh, Rh = np.linalg.qr(H)
    Qm, Rm = np.linalg.qr(M)
    U, s, Vt = np.linalg.svd(Rh @ Rm.T)
    if s[0] == 0:
        return np.zeros(H.shape[0]), np.zeros(M.shape[0]), 0.0
    u = Qh @ U[:, 0]
    v = Qm @ Vt[0]
    # fix the sign so the largest entry of u is positive
    if u[np.argmax(np.abs(u))] < 0:
        u, v = -u, -v
    return u, v, float(s[0])


def lifted_error(u, v, h, m) -> float:
    """``||u v^T - h m^T||_F`` without forming either matrix."""
    sq = (u @ u) * (v @ v) + (h @ h) * (m @ m) - 2.0 * (u @ h) * (v @ m)
    return float(np.sqrt(max(sq, 0.0)))


def factored_error(H, M, h, m) -> float:
    """``||H M^T - h m^T||_F`` from the factors."""
    H = np.atleast_2d(np.asarray(H, dtype=float).T).T
    M = np.atleast_2d(np.asarray(M, dtype=float).T).T
    sq = np.sum((H.T @ H) * (M.T @ M)) + (h @ h) * (m @ m) - 2.0 * ((h @ H) @ (M.T @ m))
    return float(np.sqrt(max(sq, 0.0)))


def align_scale(u, v, h_true, m_true):
    """Resolve the scale ambiguity: returns ``(alpha, lifted_error)``.

    ``alpha`` minimises ``||alpha u - h||``; ``v`` is understood to be scaled by
    ``1/alpha`` so the product is unchanged.  The error is the scale-free
    ``||u v^T - h m^T||_F``.
    """
    u, v = np.asarray(u, float), np.asarray(v, float)
    h, m = np.asarray(h_true, float), np.asarray(m_true, float)
    uu = float(u @ u)
    if uu == 0 or not np.any(v):
        return 0.0, float(np.linalg.norm(h) * np.linalg.norm(m))
    alpha = float(u @ h) / uu
    return alpha, lifted_error(u, v, h, m)


def classify_recovery(X_hat, X0, threshold: float = 1e-1, relative: bool = False) -> bool:
    """Success iff ``||X_hat - X0||_F <= threshold`` (optionally relative to ``||X0||_F``)."""
    X_hat, X0 = np.asarray(X_hat), np.asarray(X0)
    if X_hat.shape != X0.shape:
        raise ValueError("shape mismatch")
    err = np.linalg.norm(X_hat - X0)
    if relative:
        err /= np.linalg.norm(X0)
    return bool(err <= threshold)
