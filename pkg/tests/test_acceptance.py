"""Acceptance criteria 1-9.

Each test prints one ``PASS``/``FAIL criterion N`` line (repeated in the
terminal summary).  Criteria that do not hold at the stated sizes are kept at
full tolerance and marked as strict expected failures; the analysis is in the
decisions ledger.
"""

import time

import numpy as np
import pytest

from multidecon.certificate import ProjectorContext, golfing_certificate, injectivity_margin, project_R, project_R_perp, verify_optimality
from multidecon.coherence import build_partition, build_S, mu0_sq, mu_max_sq
from multidecon.experiments import GridSpec, phase_grid, resolve_threads, summarize
from multidecon.instance import make_instance
from multidecon.lifting import adjoint_A, apply_A, build_rows, operator_norm_A
from multidecon.solver import factored_error, objective_and_gradient, solve_blind_deconv
from multidecon.spectral import circ_conv, dft, gen_generic_basis

pytestmark = pytest.mark.acceptance

MINI_GRID = GridSpec(
    L=(100, 200, 400, 800), K=(5, 10, 20, 40, 80), N=(40,),
    scenarios=("gaussian", "identity_subset"), trials=25, seed=0,
)


def test_criterion_1_forward_model(criterion_report):
    t0 = time.perf_counter()
    r = np.random.default_rng(1)
    worst = 0.0
    for seed in range(100):
        L = int(r.integers(4, 257))
        K, N = int(r.integers(1, min(8, L) + 1)), int(r.integers(1, 9))
        inst = make_instance(L, K, N, seed=seed)
        lifted = apply_A(inst.rows, np.outer(inst.h, inst.m))
        direct = np.column_stack([dft(circ_conv(inst.w, inst.x[n])) for n in range(N)])
        worst = max(worst, np.max(np.abs(lifted - direct)) / np.max(np.abs(direct)))
    secs = time.perf_counter() - t0
    ok = worst <= 1e-9 and secs < 10
    criterion_report(1, ok, f"max relative error {worst:.2e} (<= 1e-9), {secs:.1f} s (< 10 s)")
    assert ok


def test_criterion_2_adjoint_and_gradient(criterion_report):
    t0 = time.perf_counter()
    r = np.random.default_rng(2)
    adj = 0.0
    for _ in range(100):
        L, K, N = int(r.integers(2, 65)), int(r.integers(1, 5)), int(r.integers(1, 6))
        K = min(K, L)
        rows = build_rows(None, [gen_generic_basis(L, K, r) for _ in range(N)])
        X = r.standard_normal((L, K * N))
        u = r.standard_normal((L, N)) + 1j * r.standard_normal((L, N))
        lhs = np.sum(X * adjoint_A(rows, u))
        rhs = np.real(np.vdot(u, apply_A(rows, X)))
        adj = max(adj, abs(lhs - rhs) / (np.linalg.norm(X) * np.linalg.norm(u)))
    grad = 0.0
    eps = 1e-6
    for t in range(150):
        L, K, N, R = int(r.integers(4, 49)), int(r.integers(1, 5)), int(r.integers(1, 9)), int(r.integers(1, 4))
        inst = make_instance(L, K, N, seed=t)
        H, M = r.standard_normal((L, R)), r.standard_normal((K * N, R))
        lam = float(r.uniform(0, 0.5))
        _, gH, gM = objective_and_gradient(inst.rows, inst.y_hat, H, M, lam)
        dH, dM = r.standard_normal(H.shape), r.standard_normal(M.shape)
        fp = objective_and_gradient(inst.rows, inst.y_hat, H + eps * dH, M + eps * dM, lam)[0]
        fm = objective_and_gradient(inst.rows, inst.y_hat, H - eps * dH, M - eps * dM, lam)[0]
        analytic = np.sum(gH * dH) + np.sum(gM * dM)
        grad = max(grad, abs((fp - fm) / (2 * eps) - analytic) / max(abs(analytic), 1e-8))
    secs = time.perf_counter() - t0
    ok = adj <= 1e-10 and grad <= 1e-5 and secs < 30
    criterion_report(2, ok, f"adjoint {adj:.1e} (<= 1e-10), gradient {grad:.1e} (<= 1e-5), {secs:.1f} s (< 30 s)")
    assert ok


@pytest.fixture(scope="module")
def mini_grid(tmp_path_factory):
    t0 = time.perf_counter()
    grid = phase_grid(MINI_GRID, threads=resolve_threads(),
                      checkpoint=tmp_path_factory.mktemp("grid") / "checkpoint.ndjson")
    return grid, time.perf_counter() - t0


def test_criterion_3_phase_transition(mini_grid, criterion_report):
    grid, secs = mini_grid
    high, low = [], []
    for c in grid.cells():
        if c.L >= 10 * c.K:
            high.append((c.rate, c))
        if c.L <= 2 * c.K:
            low.append((c.rate, c))
    worst_high = min(high, key=lambda t: t[0])[1]
    worst_low = max(low, key=lambda t: t[0])[1]
    ok = worst_high.rate >= 0.9 and worst_low.rate <= 0.1
    slope = summarize(grid)["slope"]
    criterion_report(3, ok, (
        f"min rate {worst_high.rate:.2f} at L>=10K ({worst_high.cell_id}), "
        f"max rate {worst_low.rate:.2f} at L<=2K ({worst_low.cell_id}), "
        f"boundary L/K ~ {slope:.1f}, grid {secs / 60:.1f} min on {resolve_threads()} worker(s)"
    ))
    assert ok


def test_criterion_4_n_saturation(criterion_report):
    t0 = time.perf_counter()
    spec = GridSpec(L=(800,), K=(40,), N=(10, 20, 40), trials=25, seed=4)
    rates = {c.N: c.rate for c in phase_grid(spec, threads=resolve_threads()).cells()}
    secs = time.perf_counter() - t0
    ok = min(rates.values()) >= 0.9 and secs <= 600
    criterion_report(4, ok, f"rates {rates} (>= 0.9), {secs:.0f} s (<= 600 s)")
    assert ok


def test_criterion_5_scenario_parity(mini_grid, criterion_report):
    rates = mini_grid[0].rates()
    diffs = {(L, K, N): abs(v - rates[("identity_subset", L, K, N)])
             for (sc, L, K, N), v in rates.items() if sc == "gaussian"}
    cell, worst = max(diffs.items(), key=lambda kv: kv[1])
    ok = worst <= 0.2
    criterion_report(5, ok, f"max per-cell rate difference {worst:.2f} at (L, K, N)={cell} (<= 0.2)")
    assert ok


def power_iteration_norm(rows, iters=5000):
    L, KN = rows.shape
    cols = [apply_A(rows, e.reshape(L, KN)).ravel() for e in np.eye(L * KN)]
    A = np.column_stack(cols)
    G = A.conj().T @ A
    v = np.random.default_rng(0).standard_normal(L * KN) + 0j
    lam = 0.0
    for _ in range(iters):
        w = G @ v
        lam_new = np.linalg.norm(w)
        v = w / lam_new
        if abs(lam_new - lam) <= 1e-15 * lam_new:
            break
        lam = lam_new
    return np.sqrt(lam_new)


def test_criterion_6_operator_norm(criterion_report):
    hits = 0
    for seed in range(100):
        nrm = operator_norm_A(make_instance(64, 4, 8, seed=seed).rows, beta=4)
        hits += nrm.value <= nrm.bound
    worst = 0.0
    for seed in range(5):
        rows = make_instance(8, 2, 2, seed=seed).rows
        exact = operator_norm_A(rows).value
        worst = max(worst, abs(exact - power_iteration_norm(rows)) / exact)
    ok = hits >= 99 and worst <= 1e-6
    criterion_report(6, ok, f"bound holds in {hits}/100 (>= 99), power-iteration gap {worst:.1e} (<= 1e-6)")
    assert ok


@pytest.mark.xfail(strict=True, reason="the third coherence term exceeds the 20/9 upper constant; see decisions ledger")
def test_criterion_7_coherence_sandwich(criterion_report):
    # admissible instances are drawn on the generous instance family of criterion 8
    L, K, N, P = 256, 2, 64, 4
    mu_max = mu_max_sq(None, L)
    kept, draws, by_S = [], 0, {2: 0, 4: 0, 8: 0}
    while len(kept) < 100 and draws < 6000:
        S = (2, 4, 8)[draws % 3]
        inst = make_instance(L, K, N, seed=draws, S=S)
        part = build_partition(L, N, P, draws)
        S_ops = build_S(part, None, inst.support)
        draws += 1
        if not S_ops.eigen_bounds_hold():
            continue
        by_S[S] += 1
        kept.append((S, mu0_sq(None, inst.h, part, S_ops).value))
    inside = sum(5 / 3 <= mu <= 20 / 9 * mu_max * S for S, mu in kept)
    lo = min(mu for _, mu in kept)
    hi = max(mu / (mu_max * S) for S, mu in kept)
    ok = len(kept) == 100 and inside == len(kept)
    criterion_report(7, ok, (
        f"{inside}/{len(kept)} admissible instances inside [5/3, (20/9) mu_max^2 S] "
        f"(admissible by S: {by_S}, {draws} draws); min mu0^2 {lo:.3f}, max mu0^2/(mu_max^2 S) {hi:.3f}"
    ))
    assert ok


@pytest.mark.xfail(strict=True, reason="the spectral condition fails at L=256; see decisions ledger")
def test_criterion_8_certificate(criterion_report):
    t0 = time.perf_counter()
    L, K, S, N, P = 256, 2, 2, 64, 4
    decreasing = passed = recovered = 0
    spectral = []
    for seed in range(100):
        inst = make_instance(L, K, N, seed=seed, S=S)
        part = build_partition(L, N, P, seed)
        S_ops = build_S(part, None, inst.support)
        ctx = ProjectorContext(inst.h, inst.m, inst.support)
        trace = golfing_certificate(ctx, inst.rows, part, S_ops)
        decreasing += trace.strictly_decreasing
        gamma = operator_norm_A(inst.rows, beta=4).bound
        inj = injectivity_margin(ctx, inst.rows).margin
        margins = verify_optimality(ctx, inst.rows, trace.Y, gamma=gamma, injectivity=inj)
        spectral.append(margins.spectral)
        if margins.passed:
            passed += 1
            rep = solve_blind_deconv(inst.rows, inst.y_hat)
            recovered += factored_error(rep.H, rep.M, inst.h, inst.m) <= 1e-2
    secs = time.perf_counter() - t0
    ok = decreasing >= 90 and passed >= 80 and recovered == passed and secs <= 900
    criterion_report(8, ok, (
        f"W decreasing {decreasing}/100 (>= 90), PASS {passed}/100 (>= 80), "
        f"recovered {recovered}/{passed} PASS instances, spectral margin "
        f"{min(spectral):.2f}..{max(spectral):.2f} (<= 1), {secs:.0f} s (<= 900 s)"
    ))
    assert ok


def test_criterion_9_projector_axioms(criterion_report):
    t0 = time.perf_counter()
    r = np.random.default_rng(9)
    worst = 0.0
    for _ in range(100):
        L, KN = int(r.integers(2, 40)), int(r.integers(1, 30))
        omega = np.sort(r.choice(L, int(r.integers(1, L + 1)), replace=False))
        h = np.zeros(L)
        h[omega] = r.standard_normal(len(omega))
        ctx = ProjectorContext(h, r.standard_normal(KN), omega)
        Z = r.standard_normal((L, KN))
        RZ = project_R(ctx, Z)
        scale = np.linalg.norm(Z)
        worst = max(
            worst,
            np.linalg.norm(project_R(ctx, RZ) - RZ) / scale,
            abs(np.sum(RZ * project_R_perp(ctx, Z))) / scale**2,
            np.linalg.norm(project_R(ctx, ctx.X0) - ctx.X0),
        )
    secs = time.perf_counter() - t0
    ok = worst <= 1e-10 and secs < 5
    criterion_report(9, ok, f"max axiom violation {worst:.1e} (<= 1e-10), {secs:.2f} s (< 5 s)")
    assert ok
