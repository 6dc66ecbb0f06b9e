"""Command-line front end.

Every subcommand reads an optional JSON config; unknown keys and invalid
values exit with status 2, runtime failures with status 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import subprocess
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .certificate import (
    ProjectorContext,
    golfing_certificate,
    injectivity_margin,
    iterate_coherences,
    verify_optimality,
)
from .coherence import build_partition, build_S, coherence_report, default_partition_count
from .experiments import GridSpec, PhaseGrid, load_cells_csv, phase_grid, resolve_threads, summarize
from .instance import SCENARIOS, make_instance
from .lifting import operator_norm_A
from .solver import SolverConfig, extract_rank1, factored_error, lifted_error, solve_blind_deconv

log = logging.getLogger("multidecon")


class ConfigError(ValueError):
    pass


_SOLVER_KEYS = {f.name: f.type for f in fields(SolverConfig)}
_INSTANCE = {"L": int, "K": int, "N": int, "S": (int, type(None)), "scenario": str, "seed": int}
SCHEMAS = {
    "gen": dict(_INSTANCE),
    "solve": {**_INSTANCE, "threshold": float, "solver": dict},
    "coherence": {**_INSTANCE, "P": (int, type(None)), "beta": float, "C": float},
    "certify": {**_INSTANCE, "P": (int, type(None)), "beta": float, "gamma": str, "solve": bool},
    "phase": {
        "L": list, "K": list, "N": list, "scenarios": list, "trials": int, "seed": int,
        "S": (int, type(None)), "threshold": float, "solver": dict,
    },
    "summarize": {"input": str},
}
DEFAULTS = {
    "gen": {"L": 128, "K": 8, "N": 20, "S": None, "scenario": "gaussian", "seed": 0},
    "solve": {"L": 128, "K": 8, "N": 20, "S": None, "scenario": "gaussian", "seed": 0,
              "threshold": 0.1, "solver": {}},
    "coherence": {"L": 256, "K": 2, "N": 64, "S": 2, "scenario": "gaussian", "seed": 0,
                  "P": 4, "beta": 4.0, "C": 1.0},
    "certify": {"L": 256, "K": 2, "N": 64, "S": 2, "scenario": "gaussian", "seed": 0,
                "P": 4, "beta": 4.0, "gamma": "exact", "solve": True},
    "phase": {"L": [100, 200, 400, 800], "K": [5, 10, 20, 40, 80], "N": [40], "scenarios": ["gaussian"],
              "trials": 25, "seed": 0, "S": None, "threshold": 0.1, "solver": {}},
    "summarize": {"input": "grid.csv"},
}


def _check_type(key, value, typ):
    types = typ if isinstance(typ, tuple) else (typ,)
    if float in types and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, bool) and bool not in types:
        raise ConfigError(f"{key}: expected {'/'.join(t.__name__ for t in types)}, got bool")
    if not isinstance(value, types):
        raise ConfigError(f"{key}: expected {'/'.join(t.__name__ for t in types)}, got {type(value).__name__}")
    return value


def _solver_config(raw: dict, prefix: str = "solver") -> SolverConfig:
    kwargs = {}
    for k, v in raw.items():
        if k not in _SOLVER_KEYS:
            raise ConfigError(f"{prefix}.{k}: unknown key")
        typ = int if _SOLVER_KEYS[k] in (int, "int") else float
        kwargs[k] = _check_type(f"{prefix}.{k}", v, typ)
    try:
        return SolverConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{prefix}: {exc}") from exc


def resolve_config(command: str, raw: dict | None, seed: int | None = None) -> dict:
    """Merge ``raw`` over the defaults of ``command`` and validate every field."""
    raw = dict(raw or {})
    schema = SCHEMAS[command]
    for k in raw:
        if k not in schema:
            raise ConfigError(f"{k}: unknown key for '{command}'")
    cfg = {**DEFAULTS[command], **raw}
    if seed is not None and "seed" in schema:
        cfg["seed"] = seed
    for k, typ in schema.items():
        cfg[k] = _check_type(k, cfg[k], typ)
    if "solver" in cfg:
        cfg["solver"] = _solver_config(cfg["solver"]).to_dict()

    if command in ("gen", "solve", "coherence", "certify"):
        for k in ("L", "K", "N"):
            if cfg[k] < 1:
                raise ConfigError(f"{k}: must be positive")
        if cfg["K"] > cfg["L"]:
            raise ConfigError(f"K: must not exceed L (K={cfg['K']}, L={cfg['L']})")
        if cfg["S"] is not None and not 1 <= cfg["S"] <= cfg["L"]:
            raise ConfigError("S: must lie in 1..L")
        if cfg["scenario"] not in SCENARIOS:
            raise ConfigError(f"scenario: must be one of {list(SCENARIOS)}")
        if cfg["seed"] < 0:
            raise ConfigError("seed: must be non-negative")
    if command in ("coherence", "certify"):
        if cfg["S"] is None:
            raise ConfigError("S: a sparse impulse response is required")
        if cfg["P"] is not None and not 1 <= cfg["P"] <= cfg["L"]:
            raise ConfigError("P: must lie in 1..L")
        if cfg["beta"] <= 0:
            raise ConfigError("beta: must be positive")
    if command == "coherence" and cfg["C"] <= 0:
        raise ConfigError("C: must be positive")
    if command == "certify" and cfg["gamma"] not in ("exact", "bound"):
        raise ConfigError("gamma: must be 'exact' or 'bound'")
    if command == "solve" and cfg["threshold"] <= 0:
        raise ConfigError("threshold: must be positive")
    if command == "phase":
        for k in ("L", "K", "N"):
            if not cfg[k] or not all(isinstance(v, int) and not isinstance(v, bool) and v > 0 for v in cfg[k]):
                raise ConfigError(f"{k}: must be a non-empty list of positive integers")
        try:
            GridSpec(L=cfg["L"], K=cfg["K"], N=cfg["N"], scenarios=cfg["scenarios"], trials=cfg["trials"],
                     seed=cfg["seed"], S=cfg["S"], threshold=cfg["threshold"])
        except ValueError as exc:
            name = "K" if "exceeds" in str(exc) else "scenarios" if "scenario" in str(exc) else "trials"
            raise ConfigError(f"{name}: {exc}") from exc
    return cfg


def version_string() -> str:
    """Package version with a ``git describe`` suffix when available."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_jsonable(payload), indent=2) + "\n")
    log.info("wrote %s", path)


def _provenance(command: str, cfg: dict) -> dict:
    return {"command": command, "config": cfg, "version": version_string()}


def _instance(cfg: dict, L: int | None = None):
    return make_instance(L or cfg["L"], cfg["K"], cfg["N"], seed=cfg["seed"], S=cfg["S"],
                         scenario=cfg["scenario"], check_forward=True)


def cmd_gen(cfg: dict, out: Path, args) -> int:
    inst = _instance(cfg)
    np.savez(out / "instance.npz", C=inst.C, h=inst.h, m=inst.m, support=inst.support,
             y_hat=inst.y_hat, y=inst.time_domain())
    _write_json(out / "instance.json", {**_provenance("gen", cfg), "S": inst.S, "raw_scale": inst.raw_scale})
    return 0


def cmd_solve(cfg: dict, out: Path, args) -> int:
    inst = _instance(cfg)
    rep = solve_blind_deconv(inst.rows, inst.y_hat, SolverConfig(**cfg["solver"]))
    err = factored_error(rep.H, rep.M, inst.h, inst.m)
    u, v, s = extract_rank1(rep.H, rep.M)
    payload = {
        **_provenance("solve", cfg),
        "success": bool(err <= cfg["threshold"]),
        "error": err,
        "rank1_error": lifted_error(s * u, v, inst.h, inst.m),
        **rep.summary(),
    }
    _write_json(out / "solve_report.json", payload)
    print(f"error={err:.3e} success={payload['success']} seconds={rep.seconds:.2f}", file=sys.stderr)
    return 0


def _partition_setup(cfg: dict):
    P = cfg["P"] or default_partition_count(cfg["L"], cfg["K"], cfg["N"], cfg["S"], cfg["beta"])
    part = build_partition(cfg["L"], cfg["N"], P, cfg["seed"])
    if part.padded:
        log.info("L padded from %d to %d so that P=%d divides it", cfg["L"], part.L, P)
    inst = _instance(cfg, L=part.L)
    return inst, part


def cmd_coherence(cfg: dict, out: Path, args) -> int:
    inst, part = _partition_setup(cfg)
    rep = coherence_report(None, inst.h, inst.m_blocks, part, beta=cfg["beta"], C=cfg["C"])
    _write_json(out / "coherence_report.json",
                {**_provenance("coherence", cfg), "effective_L": part.L, **rep.to_dict()})
    return 0


def cmd_certify(cfg: dict, out: Path, args) -> int:
    inst, part = _partition_setup(cfg)
    S_ops = build_S(part, None, inst.support)
    ctx = ProjectorContext(inst.h, inst.m, inst.support)
    trace = golfing_certificate(ctx, inst.rows, part, S_ops)
    norm = operator_norm_A(inst.rows, cfg["beta"])
    gamma = norm.value if cfg["gamma"] == "exact" else norm.bound
    inj = injectivity_margin(ctx, inst.rows)
    margins = verify_optimality(ctx, inst.rows, trace.Y, gamma=gamma, injectivity=inj.margin)
    coh = [iterate_coherences(ctx, part, S_ops, trace.W[p], p) for p in range(part.P)]
    payload = {
        **_provenance("certify", cfg),
        "effective_L": part.L,
        "P": part.P,
        "Q": part.Q,
        "W_norms": trace.W_norms,
        "W_strictly_decreasing": trace.strictly_decreasing,
        **margins.to_dict(),
        "injectivity_deviation": inj.deviation,
        "iterate_coherences": [{"p": c.p, "rho": c.rho, "nu": c.nu, "mu": c.mu} for c in coh],
        "note": "PASS is sufficient for unique recovery by nuclear-norm minimisation; FAIL is inconclusive",
    }
    if cfg["solve"]:
        rep = solve_blind_deconv(inst.rows, inst.y_hat, SolverConfig(seed=cfg["seed"]))
        payload["solver_error"] = factored_error(rep.H, rep.M, inst.h, inst.m)
    _write_json(out / "certificate.json", payload)
    print(f"pass={margins.passed} frobenius={margins.frobenius:.3f} spectral={margins.spectral:.3f} "
          f"injectivity={margins.injectivity:.3f}", file=sys.stderr)
    return 0


def cmd_phase(cfg: dict, out: Path, args) -> int:
    spec = GridSpec(L=cfg["L"], K=cfg["K"], N=cfg["N"], scenarios=cfg["scenarios"], trials=cfg["trials"],
                    seed=cfg["seed"], S=cfg["S"], threshold=cfg["threshold"],
                    solver=SolverConfig(**cfg["solver"]))
    t0 = time.perf_counter()

    def progress(done, total):
        print(f"\r{done}/{total} trials", end="", file=sys.stderr, flush=True)

    grid = phase_grid(spec, threads=args.threads, checkpoint=out / "checkpoint.ndjson",
                      resume=args.resume, progress=progress)
    print(file=sys.stderr)
    grid.to_csv(out / "grid.csv")
    _write_json(out / "summary.json", {
        **_provenance("phase", cfg), "threads": resolve_threads(args.threads),
        "wall_seconds": time.perf_counter() - t0, **summarize(grid),
    })
    return 0


def cmd_summarize(cfg: dict, out: Path, args) -> int:
    path = Path(cfg["input"])
    if not path.exists():
        raise FileNotFoundError(f"grid file {path} not found")
    _write_json(out / "summary.json", {**_provenance("summarize", cfg), **summarize(load_cells_csv(path))})
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "solve": cmd_solve,
    "coherence": cmd_coherence,
    "certify": cmd_certify,
    "phase": cmd_phase,
    "summarize": cmd_summarize,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--threads", type=int, help="worker processes (default: $MULTIDECON_THREADS or all cores)")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--resume", action="store_true", help="resume a phase grid from its checkpoint")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="multidecon", description="Blind deconvolution from diverse inputs")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "summarize":
            p.add_argument("--input", help="grid CSV to summarise")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        raw = {}
        if args.config is not None:
            try:
                raw = json.loads(args.config.read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{args.config}: line {exc.lineno}: {exc.msg}") from exc
            except OSError as exc:
                raise ConfigError(f"{args.config}: {exc.strerror}") from exc
            if not isinstance(raw, dict):
                raise ConfigError("config: top level must be a JSON object")
        if args.command == "summarize" and args.input:
            raw["input"] = args.input
        if args.threads is not None and args.threads < 1:
            raise ConfigError("threads: must be >= 1")
        cfg = resolve_config(args.command, raw, seed=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args.out, args)
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
