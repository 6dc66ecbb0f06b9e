"""Seeded problem instances ``y_n = w (*) x_n`` with ``w = B h`` and ``x_n = C_n m_n``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lifting import MeasurementRows, apply_A_factored, build_rows
from .spectral import (
    circ_conv,
    dft,
    gen_generic_basis,
    gen_identity_subset_basis,
    gen_sparse_coeff,
    make_rng,
)

__all__ = ["DeconvInstance", "SCENARIOS", "make_instance"]

SCENARIOS = ("gaussian", "identity_subset")


@dataclass(frozen=True)
class DeconvInstance:
    """Full problem statement together with its ground truth.

    ``h`` and ``m`` are scaled so that ``||h|| = ||m|| = 1``, hence
    ``||h m^T||_F = 1``; ``raw_scale`` keeps the product of the norms
    before that normalisation.
    """

    L: int
    K: int
    N: int
    S: int
    scenario: str
    seed: int
    B: np.ndarray | None
    C: np.ndarray  # (N, L, K)
    h: np.ndarray
    m: np.ndarray  # (K N,)
    support: np.ndarray
    rows: MeasurementRows
    y_hat: np.ndarray  # (L, N)
    raw_scale: float

    @property
    def w(self) -> np.ndarray:
        return self.h if self.B is None else self.B @ self.h

    @property
    def x(self) -> np.ndarray:
        """Inputs stacked as an (N, L) array."""
        return np.einsum("nlk,nk->nl", self.C, self.m_blocks)

    @property
    def m_blocks(self) -> np.ndarray:
        return self.m.reshape(self.N, self.K)

    @property
    def X0(self) -> np.ndarray:
        return np.outer(self.h, self.m)

    def time_domain(self) -> np.ndarray:
        """Observed convolutions ``y_n`` as an (N, L) array."""
        return circ_conv(self.w, self.x)


def make_instance(
    L: int,
    K: int,
    N: int,
    *,
    seed: int,
    S: int | None = None,
    scenario: str = "gaussian",
    B=None,
    trial: int = 0,
    check_forward: bool = False,
) -> DeconvInstance:
    """Draw a random instance.

    ``S=None`` gives a dense impulse response (the phase-transition regime).
    ``scenario`` selects Gaussian coding matrices or random identity-column
    subsets for the ``C_n``.  Every random object uses its own stream keyed by
    ``(seed, trial, role)``.
    """
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")
    if not (1 <= K <= L and N >= 1):
        raise ValueError(f"invalid dimensions L={L}, K={K}, N={N}")
    dense = S is None or S == L
    coeff = gen_sparse_coeff(L, L if dense else S, make_rng(seed, trial, "h"), dense=dense)
    if scenario == "gaussian":
        C = np.stack([gen_generic_basis(L, K, make_rng(seed, trial, "C", n)) for n in range(N)])
    else:
        C = np.stack([gen_identity_subset_basis(L, K, make_rng(seed, trial, "C", n)) for n in range(N)])
    m = make_rng(seed, trial, "m").standard_normal(K * N)

    raw_scale = float(np.linalg.norm(coeff.values) * np.linalg.norm(m))
    h = coeff.values / np.linalg.norm(coeff.values)
    m = m / np.linalg.norm(m)

    rows = build_rows(B, C)
    y_hat = apply_A_factored(rows, h, m)
    inst = DeconvInstance(
        L=L, K=K, N=N, S=len(coeff.support), scenario=scenario, seed=seed,
        B=rows.B, C=C, h=h, m=m, support=coeff.support, rows=rows, y_hat=y_hat,
        raw_scale=raw_scale,
    )
    if check_forward:
        direct = dft(inst.time_domain(), axis=1).T
        err = np.max(np.abs(direct - y_hat)) / max(np.max(np.abs(direct)), 1e-300)
        if err > 1e-9:
            raise RuntimeError(f"lifted measurements disagree with circular convolution ({err:.2e})")
    return inst
