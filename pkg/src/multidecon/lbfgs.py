"""Limited-memory BFGS with a strong Wolfe line search.

Operates on flat float64 vectors; ``fun(x)`` must return ``(f, grad)``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

__all__ = ["LbfgsResult", "lbfgs"]


@dataclass
class LbfgsResult:
    x: np.ndarray
    f: float
    grad_norm: float
    iterations: int
    n_evals: int
    converged: bool
    message: str
    f_history: list[float] = field(default_factory=list)


class LineSearchError(RuntimeError):
    pass


def _cubic_min(a1, f1, g1, a2, f2, g2, lo, hi):
    """Minimiser of the cubic through two points, clipped into a safe interval."""
    d1 = g1 + g2 - 3.0 * (f1 - f2) / (a1 - a2)
    disc = d1 * d1 - g1 * g2
    width = hi - lo
    safe_lo, safe_hi = lo + 0.1 * width, hi - 0.1 * width
    if disc >= 0 and np.isfinite(disc):
        d2 = np.sign(a2 - a1) * np.sqrt(disc)
        denom = g2 - g1 + 2.0 * d2
        if denom != 0:
            a = a2 - (a2 - a1) * (g2 + d2 - d1) / denom
            if np.isfinite(a) and safe_lo <= a <= safe_hi:
                return a
    return 0.5 * (lo + hi)


def _wolfe_search(phi, f0, d0, a_init, c1, c2, max_evals):
    """Strong Wolfe line search (bracketing then zoom).

    ``phi(a)`` returns ``(f, g, dphi)``.  Returns ``(a, f, g, evals)``.
    """
    evals = 0
    a_prev, f_prev, d_prev = 0.0, f0, d0
    a = a_init
    best = None

    def zoom(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi, evals, best):
        while evals < max_evals:
            lo, hi = min(a_lo, a_hi), max(a_lo, a_hi)
            if hi - lo <= 1e-14 * max(1.0, hi):
                break
            a_j = _cubic_min(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi, lo, hi)
            f_j, g_j, d_j = phi(a_j)
            evals += 1
            if f_j <= f0 + c1 * a_j * d0 and (best is None or f_j < best[1]):
                best = (a_j, f_j, g_j)
            if f_j > f0 + c1 * a_j * d0 or f_j >= f_lo:
                a_hi, f_hi, d_hi = a_j, f_j, d_j
            else:
                if abs(d_j) <= -c2 * d0:
                    return (a_j, f_j, g_j), evals, best
                if d_j * (a_hi - a_lo) >= 0:
                    a_hi, f_hi, d_hi = a_lo, f_lo, d_lo
                a_lo, f_lo, d_lo = a_j, f_j, d_j
        return None, evals, best

    for i in range(max_evals):
        f_a, g_a, d_a = phi(a)
        evals += 1
        if not np.isfinite(f_a):
            a = 0.5 * (a_prev + a)
            continue
        armijo = f_a <= f0 + c1 * a * d0
        if armijo and (best is None or f_a < best[1]):
            best = (a, f_a, g_a)
        if not armijo or (i > 0 and f_a >= f_prev):
            found, evals, best = zoom(a_prev, f_prev, d_prev, a, f_a, d_a, evals, best)
            break
        if abs(d_a) <= -c2 * d0:
            return a, f_a, g_a, evals
        if d_a >= 0:
            found, evals, best = zoom(a, f_a, d_a, a_prev, f_prev, d_prev, evals, best)
            break
        a_prev, f_prev, d_prev = a, f_a, d_a
        a = 4.0 * a
    else:
        found = None

    if found is not None:
        return (*found, evals)
    if best is not None:
        # sufficient decrease without the curvature condition
        return (*best, evals)
    raise LineSearchError("line search failed to find a point of sufficient decrease")


def lbfgs(
    fun,
    x0,
    *,
    memory: int = 10,
    max_iters: int = 1000,
    gtol: float = 1e-8,
    c1: float = 1e-4,
    c2: float = 0.9,
    max_ls_evals: int = 30,
    callback=None,
) -> LbfgsResult:
    """Minimise ``fun`` from ``x0``.

    Stops when ``||grad|| <= gtol * max(1, ||x||)`` or after ``max_iters``
    iterations.  Accepted steps always satisfy the sufficient-decrease
    condition, so the objective sequence is non-increasing.
    """
    x = np.array(x0, dtype=float).ravel()
    f, g = fun(x)
    n_evals = 1
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise FloatingPointError("objective is not finite at the starting point")
    S: deque = deque(maxlen=memory)
    Y: deque = deque(maxlen=memory)
    rho: deque = deque(maxlen=memory)
    history = [float(f)]
    gnorm = float(np.linalg.norm(g))
    message = "iteration limit reached"
    converged = False
    it = 0
    restarted = False

    while True:
        if gnorm <= gtol * max(1.0, float(np.linalg.norm(x))):
            converged, message = True, "gradient tolerance reached"
            break
        if it >= max_iters:
            break

        # two-loop recursion
        q = g.copy()
        alphas = []
        for s_i, y_i, r_i in zip(reversed(S), reversed(Y), reversed(rho)):
            a_i = r_i * np.dot(s_i, q)
            alphas.append(a_i)
            q -= a_i * y_i
        if S:
            q *= np.dot(S[-1], Y[-1]) / np.dot(Y[-1], Y[-1])
        for (s_i, y_i, r_i), a_i in zip(zip(S, Y, rho), reversed(alphas)):
            b_i = r_i * np.dot(y_i, q)
            q += (a_i - b_i) * s_i
        d = -q
        d0 = float(np.dot(g, d))
        if not d0 < 0:
            for buf in (S, Y, rho):
                buf.clear()
            d = -g
            d0 = -gnorm**2
        a_init = 1.0 if S else min(1.0, 1.0 / gnorm)

        def phi(a, x=x, d=d):
            f_a, g_a = fun(x + a * d)
            return f_a, g_a, float(np.dot(g_a, d))

        try:
            a, f_new, g_new, ev = _wolfe_search(phi, f, d0, a_init, c1, c2, max_ls_evals)
        except LineSearchError:
            n_evals += max_ls_evals
            if S and not restarted:
                for buf in (S, Y, rho):
                    buf.clear()
                restarted = True
                continue
            message = "line search failed"
            break
        n_evals += ev
        restarted = False
        s = a * d
        x_new = x + s
        y = g_new - g
        sy = float(np.dot(s, y))
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Y.append(y)
            rho.append(1.0 / sy)
        stalled = f - f_new <= 1e-16 * max(1.0, abs(f))
        x, f, g = x_new, f_new, g_new
        gnorm = float(np.linalg.norm(g))
        it += 1
        history.append(float(f))
        if callback is not None:
            callback(x, f, g)
        if stalled and np.linalg.norm(s) <= 1e-15 * max(1.0, float(np.linalg.norm(x))):
            message = "no progress"
            break

    return LbfgsResult(
        x=x, f=float(f), grad_norm=gnorm, iterations=it, n_evals=n_evals,
        converged=converged, message=message, f_history=history,
    )
