"""Seeded recovery trials and phase-transition grids."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, replace
from itertools import product
from pathlib import Path

import numpy as np

from .instance import SCENARIOS, make_instance
from .solver import SolverConfig, extract_rank1, factored_error, lifted_error, solve_blind_deconv
from .spectral import derive_seed

__all__ = [
    "CSV_COLUMNS",
    "CellResult",
    "GridSpec",
    "PhaseGrid",
    "TrialConfig",
    "load_cells_csv",
    "phase_grid",
    "resolve_threads",
    "run_trial",
    "summarize",
]

log = logging.getLogger(__name__)

CSV_COLUMNS = ("cell_id", "L", "K", "N", "scenario", "trials", "successes", "mean_error", "mean_seconds")


@dataclass(frozen=True)
class TrialConfig:
    L: int
    K: int
    N: int
    S: int | None = None  # None: dense impulse response
    scenario: str = "gaussian"
    solver: SolverConfig = field(default_factory=SolverConfig)
    seed: int = 0
    threshold: float = 0.1

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if min(self.L, self.K, self.N) < 1:
            raise ValueError("L, K and N must be positive")
        if self.K > self.L:
            raise ValueError(f"K={self.K} exceeds L={self.L}")
        if self.S is not None and not 1 <= self.S <= self.L:
            raise ValueError(f"S must lie in 1..L, got {self.S}")
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")


def run_trial(cfg: TrialConfig) -> dict:
    """Generate, solve and classify one instance.

    Solver exceptions are caught and recorded as failures so that a grid is
    never aborted by a single trial.
    """
    t0 = time.perf_counter()
    rec = {
        "L": cfg.L, "K": cfg.K, "N": cfg.N, "S": cfg.S, "scenario": cfg.scenario, "seed": cfg.seed,
        "success": False, "error": math.inf, "rank1_error": math.inf,
        "sigma_ratio_H": math.nan, "sigma_ratio_M": math.nan, "residual": math.nan,
        "iterations": 0, "converged": False, "message": "",
    }
    try:
        inst = make_instance(cfg.L, cfg.K, cfg.N, seed=cfg.seed, S=cfg.S, scenario=cfg.scenario, check_forward=True)
        rep = solve_blind_deconv(inst.rows, inst.y_hat, replace(cfg.solver, seed=cfg.seed))
        err = factored_error(rep.H, rep.M, inst.h, inst.m)
        u, v, s = extract_rank1(rep.H, rep.M)
        rec.update(
            success=bool(err <= cfg.threshold),
            error=err,
            rank1_error=lifted_error(s * u, v, inst.h, inst.m),
            sigma_ratio_H=rep.sigma_ratio_H,
            sigma_ratio_M=rep.sigma_ratio_M,
            residual=rep.residual,
            iterations=rep.iterations,
            converged=rep.converged,
            message=rep.message,
        )
    except Exception as exc:  # recorded, never raised
        rec["message"] = f"trial failed: {type(exc).__name__}: {exc}"
    rec["seconds"] = time.perf_counter() - t0
    return rec


def resolve_threads(threads: int | None = None) -> int:
    """Explicit value, else ``MULTIDECON_THREADS``, else the number of cores."""
    if threads is None:
        env = os.environ.get("MULTIDECON_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    if threads < 1:
        raise ValueError("threads must be >= 1")
    return threads


@dataclass(frozen=True)
class GridSpec:
    """Rectangular sweep over ``L x K x N x scenario`` with ``trials`` seeded runs per cell."""

    L: tuple[int, ...]
    K: tuple[int, ...]
    N: tuple[int, ...]
    scenarios: tuple[str, ...] = ("gaussian",)
    trials: int = 25
    seed: int = 0
    S: int | None = None
    threshold: float = 0.1
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        for name in ("L", "K", "N", "scenarios"):
            vals = tuple(getattr(self, name))
            if not vals:
                raise ValueError(f"axis {name} is empty")
            object.__setattr__(self, name, vals)
        for s in self.scenarios:
            if s not in SCENARIOS:
                raise ValueError(f"scenario must be one of {SCENARIOS}, got {s!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if max(self.K) > min(self.L):
            raise ValueError(f"K={max(self.K)} exceeds L={min(self.L)}")

    def cells(self):
        for sc, L, K, N in product(self.scenarios, self.L, self.K, self.N):
            yield cell_id(sc, L, K, N), (sc, L, K, N)

    def trial_config(self, scenario: str, L: int, K: int, N: int, t: int) -> TrialConfig:
        # the seed ignores the scenario so both coding models see the same h, m
        seed = derive_seed(self.seed, L, K, N, t) % (2**63)
        return TrialConfig(L=L, K=K, N=N, S=self.S, scenario=scenario, solver=self.solver,
                           seed=seed, threshold=self.threshold)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["solver"] = self.solver.to_dict()
        return d


def cell_id(scenario: str, L: int, K: int, N: int) -> str:
    return f"{scenario}-L{L}-K{K}-N{N}"


@dataclass(frozen=True)
class CellResult:
    cell_id: str
    L: int
    K: int
    N: int
    scenario: str
    trials: int
    successes: int
    mean_error: float
    mean_seconds: float

    @property
    def rate(self) -> float:
        return self.successes / self.trials if self.trials else math.nan


@dataclass
class PhaseGrid:
    spec: GridSpec
    records: list[dict]

    def cells(self) -> list[CellResult]:
        by_cell: dict[str, list[dict]] = {}
        for r in self.records:
            by_cell.setdefault(r["cell_id"], []).append(r)
        out = []
        for cid, (sc, L, K, N) in self.spec.cells():
            recs = by_cell.get(cid, [])
            errs = [r["error"] for r in recs if np.isfinite(r["error"])]
            out.append(CellResult(
                cell_id=cid, L=L, K=K, N=N, scenario=sc, trials=len(recs),
                successes=sum(bool(r["success"]) for r in recs),
                mean_error=float(np.mean(errs)) if errs else math.nan,
                mean_seconds=float(np.mean([r["seconds"] for r in recs])) if recs else math.nan,
            ))
        return out

    def rates(self) -> dict[tuple[str, int, int, int], float]:
        return {(c.scenario, c.L, c.K, c.N): c.rate for c in self.cells()}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for c in self.cells():
                w.writerow([getattr(c, k) for k in CSV_COLUMNS])


def _load_checkpoint(path: Path) -> list[dict]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError:
                log.warning("skipping truncated checkpoint line")
    return out


def _run_task(task):
    cid, t, cfg = task
    rec = run_trial(cfg)
    rec["cell_id"], rec["trial"] = cid, t
    return rec


def phase_grid(
    spec: GridSpec,
    threads: int | None = None,
    checkpoint=None,
    resume: bool = False,
    progress=None,
) -> PhaseGrid:
    """Run every trial of the grid, optionally in a process pool.

    Trial records are appended by this (single) process to the NDJSON
    ``checkpoint``; with ``resume=True`` trials already present there are
    skipped.  ``progress(done, total)`` is called after every trial.
    """
    threads = resolve_threads(threads)
    records: list[dict] = []
    done = set()
    ckpt = Path(checkpoint) if checkpoint is not None else None
    if ckpt is not None and resume and ckpt.exists():
        valid = {cid for cid, _ in spec.cells()}
        for r in _load_checkpoint(ckpt):
            key = (r.get("cell_id"), r.get("trial"))
            if key[0] in valid and key[1] is not None and key[1] < spec.trials and key not in done:
                done.add(key)
                records.append(r)
    elif ckpt is not None and ckpt.exists():
        ckpt.unlink()

    tasks = [
        (cid, t, spec.trial_config(*axes, t))
        for cid, axes in spec.cells()
        for t in range(spec.trials)
        if (cid, t) not in done
    ]
    total = len(tasks) + len(records)
    fh = open(ckpt, "a") if ckpt is not None else None

    def collect(rec):
        records.append(rec)
        if fh is not None:
            fh.write(json.dumps(rec) + "\n")
            fh.flush()
        if progress is not None:
            progress(len(records), total)

    try:
        if threads == 1 or len(tasks) <= 1:
            for task in tasks:
                collect(_run_task(task))
        else:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                futures = {pool.submit(_run_task, task): task for task in tasks}
                for fut in as_completed(futures):
                    cid, t, cfg = futures[fut]
                    try:
                        rec = fut.result()
                    except Exception as exc:  # worker crash: record and continue
                        log.error("cell %s trial %d failed: %s", cid, t, exc)
                        rec = {"cell_id": cid, "trial": t, "success": False, "error": math.inf,
                               "seconds": 0.0, "seed": cfg.seed, "message": f"worker failed: {exc}"}
                    collect(rec)
    finally:
        if fh is not None:
            fh.close()
    records.sort(key=lambda r: (r["cell_id"], r["trial"]))
    return PhaseGrid(spec=spec, records=records)


def load_cells_csv(path) -> list[CellResult]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(CellResult(
                cell_id=row["cell_id"], L=int(row["L"]), K=int(row["K"]), N=int(row["N"]),
                scenario=row["scenario"], trials=int(row["trials"]), successes=int(row["successes"]),
                mean_error=float(row["mean_error"]), mean_seconds=float(row["mean_seconds"]),
            ))
    return out


def summarize(grid) -> dict:
    """Per-cell rates, the empirical boundary per ``K`` column and total compute time.

    The boundary of a column is the smallest ``L`` whose success rate is at
    least 0.5 (``None`` when no cell qualifies).  ``slope`` is the geometric
    mean of boundary ``L / K`` over the defined columns.
    """
    cells = grid.cells() if isinstance(grid, PhaseGrid) else list(grid)
    cells = [c for c in cells if c.trials > 0]
    if not cells:
        raise ValueError("grid has no completed trials")
    columns: dict[tuple[str, int, int], list[CellResult]] = {}
    for c in cells:
        columns.setdefault((c.scenario, c.N, c.K), []).append(c)
    boundary = []
    ratios = []
    for (sc, N, K), col in sorted(columns.items()):
        ok = sorted(c.L for c in col if c.rate >= 0.5)
        Lb = ok[0] if ok else None
        boundary.append({"scenario": sc, "N": N, "K": K, "L": Lb, "defined": Lb is not None})
        if Lb is not None:
            ratios.append(Lb / K)
    return {
        "cells": [{**asdict(c), "rate": c.rate} for c in cells],
        "boundary": boundary,
        "slope": float(np.exp(np.mean(np.log(ratios)))) if ratios else None,
        "total_seconds": float(sum(c.mean_seconds * c.trials for c in cells)),
        "trials": int(sum(c.trials for c in cells)),
    }
