"""Experiment harness: flat configs, sweeps, result files and manifests.

A config is a text file of ``key = value`` lines (``#`` starts a comment).
``sweep_<name> = a, b, c`` lists values for ``alpha``, ``beta``, ``delta``,
``rate`` or ``sigma``; runs cover the cartesian product in that key order.
Keys starting with ``file.`` are written into manifests and ignored on input,
so a manifest is itself a valid config that reproduces its run.

Output layout::

    <output>/manifest.txt          resolved config plus image scales
    <output>/metrics.csv           one row per run
    <output>/ground_truth.{pgm,f64}, labels_gt.{pgm,f64}
    <output>/run_###/              mask, data.ksp, recon, seg, relaxation, report.csv
"""

from __future__ import annotations

import csv
import io as _io
import itertools
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import io as fio
from .joint import constrained_joint_solve, joint_solve
from .metrics import evaluate
from .operators import ForwardOperator
from .recon import bregman_tv_reconstruct, tv_reconstruct
from .segment import segment, threshold
from .simulate import MASK_KINDS, PHANTOM_KINDS, MaskSpec, PhantomSpec, make_mask, make_phantom, simulate_kspace
from .types import Grid, IterationRecord, JointConfig, LabelRelaxation, RegionMeans, SolveReport, SolverDivergence

log = logging.getLogger(__name__)

METHODS = ("zero_fill", "tv_seq", "bregman_seq", "joint", "constrained_joint")
SWEEP_KEYS = ("alpha", "beta", "delta", "rate", "sigma")
CSV_COLUMNS = (
    "method", "alpha", "beta", "delta", "rate", "sigma",
    "rre", "psnr_norm", "psnr_standard", "rse", "outer_iters", "stop_reason", "wall_ms",
)
REPORT_COLUMNS = tuple(f.name for f in fields(IterationRecord))
THREADS_ENV = "JOINTRECON_THREADS"

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    phantom: PhantomSpec = PhantomSpec()
    mask: MaskSpec = MaskSpec()
    sigma: float = 0.0
    noise_seed: int = 1
    method: str = "joint"
    solver: JointConfig = JointConfig()
    sweep: dict = field(default_factory=dict)
    output: str = "out"
    seed: int = 0
    means: Optional[tuple] = None
    timing: bool = False


_PHANTOM_KEYS = {
    "phantom_seed": ("seed", int),
    "background": ("background", float),
    "radius": ("radius", float),
    "value": ("value", float),
    "n_bubbles": ("n_bubbles", int),
    "r_min": ("r_min", float),
    "r_max": ("r_max", float),
    "pipe_radius": ("pipe_radius", float),
    "liquid": ("liquid", float),
    "gas": ("gas", float),
}
_MASK_KEYS = {
    "rate": ("rate", float),
    "mask_seed": ("seed", int),
    "mask_symmetric": ("symmetric", "bool"),
    "turns": ("turns", float),
    "samples_per_turn": ("samples_per_turn", int),
    "density_power": ("density_power", float),
}
_SOLVER_KEYS = {
    "alpha": float, "beta": float, "delta": float, "tol_v": float, "max_outer": int, "inner_iters": int,
    "cg_tol": float, "cg_max": int, "epsilon_aug": float, "mu": float, "inner_tol": float,
    "linear_solver": str, "update_means": "bool",
}
_TOP_KEYS = {"method", "output", "seed", "phantom", "n1", "n2", "mask", "sigma", "noise_seed", "means", "timing", "disks"}


def parse_flat(text: str) -> dict:
    """Parse ``key = value`` lines; later keys override earlier ones."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value
    return out


def _convert(key, value, kind):
    try:
        if kind == "bool":
            low = value.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if kind in (int, float) and value.lower() in ("none", ""):
            return None
        return kind(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r}") from None


def _floats(key, value) -> tuple:
    try:
        return tuple(float(x) for x in value.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"{key}: expected a comma-separated list of numbers, got {value!r}") from None


def config_from_mapping(kv: dict) -> ExperimentConfig:
    kv = {k: v for k, v in kv.items() if not k.startswith("file.")}
    known = _TOP_KEYS | set(_PHANTOM_KEYS) | set(_MASK_KEYS) | set(_SOLVER_KEYS)
    unknown = [k for k in kv if k not in known and not k.startswith("sweep_")]
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(sorted(unknown))}")
    seed = _convert("seed", kv.get("seed", "0"), int)
    method = kv.get("method", "joint")
    if method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}, got {method!r}")
    try:
        grid = Grid(_convert("n1", kv.get("n1", "64"), int), _convert("n2", kv.get("n2", "64"), int))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    pkw = {"kind": kv.get("phantom", "two_region"), "grid": grid, "seed": seed}
    if pkw["kind"] not in PHANTOM_KINDS:
        raise ConfigError(f"phantom must be one of {PHANTOM_KINDS}, got {pkw['kind']!r}")
    for key, (name, kind) in _PHANTOM_KEYS.items():
        if key in kv:
            pkw[name] = _convert(key, kv[key], kind)
    if "disks" in kv:
        vals = _floats("disks", kv["disks"])
        if len(vals) % 4:
            raise ConfigError("disks: expected groups of four numbers cy, cx, r, value")
        pkw["disks"] = tuple(tuple(vals[i : i + 4]) for i in range(0, len(vals), 4))

    mkw = {"kind": kv.get("mask", "uniform_random"), "seed": seed}
    if mkw["kind"] not in MASK_KINDS:
        raise ConfigError(f"mask must be one of {MASK_KINDS}, got {mkw['kind']!r}")
    for key, (name, kind) in _MASK_KEYS.items():
        if key in kv:
            mkw[name] = _convert(key, kv[key], kind)

    skw = {}
    for key, kind in _SOLVER_KEYS.items():
        if key in kv:
            skw[key] = _convert(key, kv[key], kind)
    solver = JointConfig(**skw)

    sweep = {}
    for key, value in kv.items():
        if key.startswith("sweep_"):
            name = key[len("sweep_"):]
            if name not in SWEEP_KEYS:
                raise ConfigError(f"{key}: can only sweep over {SWEEP_KEYS}")
            vals = _floats(key, value)
            if not vals:
                raise ConfigError(f"{key}: empty sweep")
            sweep[name] = vals
    means = _floats("means", kv["means"]) if "means" in kv else None
    cfg = ExperimentConfig(
        phantom=PhantomSpec(**pkw),
        mask=MaskSpec(**mkw),
        sigma=_convert("sigma", kv.get("sigma", "0"), float),
        noise_seed=_convert("noise_seed", kv.get("noise_seed", str(seed + 1)), int),
        method=method,
        solver=solver,
        sweep={k: sweep[k] for k in SWEEP_KEYS if k in sweep},
        output=kv.get("output", "out"),
        seed=seed,
        means=means,
        timing=_convert("timing", kv.get("timing", "false"), "bool"),
    )
    problems = check_config(cfg)
    if problems:
        raise ConfigError("; ".join(problems))
    return cfg


def check_config(cfg: ExperimentConfig) -> list[str]:
    """Sign and range constraints on every run the config expands to."""
    out = []
    for run in expand(cfg):
        s, m = run.solver, run.mask
        if not 0 < m.rate <= 1:
            out.append(f"rate must lie in (0, 1], got {m.rate}")
        if run.sigma < 0:
            out.append(f"sigma must be nonnegative, got {run.sigma}")
        if not s.alpha > 0:
            out.append(f"alpha must be positive, got {s.alpha}")
        if not s.beta > 0:
            out.append(f"beta must be positive, got {s.beta}")
        if s.delta < 0 or (s.delta == 0 and run.method not in ("joint", "constrained_joint")):
            out.append(f"delta must be positive for segmentation, got {s.delta}")
        if s.epsilon_aug < 0:
            out.append(f"epsilon_aug must be nonnegative, got {s.epsilon_aug}")
        if s.max_outer < 1 or s.inner_iters < 1 or s.cg_max < 1:
            out.append("max_outer, inner_iters and cg_max must be positive")
        if not 0 < s.mu < 1:
            out.append(f"mu must lie in (0, 1), got {s.mu}")
        if s.linear_solver not in ("fft", "cg"):
            out.append(f"linear_solver must be 'fft' or 'cg', got {s.linear_solver!r}")
    if cfg.means is not None and (len(cfg.means) < 2 or len(set(cfg.means)) != len(cfg.means)):
        out.append("means must list at least two distinct values")
    return sorted(set(out))


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return config_from_mapping(parse_flat(text))


def expand(cfg: ExperimentConfig) -> list[ExperimentConfig]:
    """One config per sweep point, in cartesian order over ``SWEEP_KEYS``."""
    names = list(cfg.sweep)
    runs = []
    for combo in itertools.product(*(cfg.sweep[n] for n in names)):
        run = replace(cfg, sweep={})
        for name, val in zip(names, combo):
            if name == "rate":
                run = replace(run, mask=replace(run.mask, rate=val))
            elif name == "sigma":
                run = replace(run, sigma=val)
            else:
                run = replace(run, solver=run.solver.replace(**{name: val}))
        runs.append(run)
    return runs


def to_mapping(cfg: ExperimentConfig) -> dict:
    """Flat key/value form of a config, the inverse of :func:`config_from_mapping`."""
    p, m, s = cfg.phantom, cfg.mask, cfg.solver
    kv = {
        "method": cfg.method,
        "output": cfg.output,
        "seed": str(cfg.seed),
        "phantom": p.kind,
        "n1": str(p.grid.n1),
        "n2": str(p.grid.n2),
    }
    for key, (name, _) in _PHANTOM_KEYS.items():
        kv[key] = repr(getattr(p, name))
    if p.disks:
        kv["disks"] = ", ".join(repr(float(x)) for d in p.disks for x in d)
    kv["mask"] = m.kind
    for key, (name, kind) in _MASK_KEYS.items():
        val = getattr(m, name)
        kv[key] = "none" if val is None else (str(val).lower() if kind == "bool" else repr(val))
    kv["sigma"] = repr(cfg.sigma)
    kv["noise_seed"] = str(cfg.noise_seed)
    for key, kind in _SOLVER_KEYS.items():
        val = getattr(s, key)
        kv[key] = "none" if val is None else (str(val).lower() if kind == "bool" else (val if kind is str else repr(val)))
    if cfg.means is not None:
        kv["means"] = ", ".join(repr(float(x)) for x in cfg.means)
    kv["timing"] = str(cfg.timing).lower()
    for name, vals in cfg.sweep.items():
        kv[f"sweep_{name}"] = ", ".join(repr(float(x)) for x in vals)
    return kv


def format_flat(kv: dict) -> str:
    return "".join(f"{k} = {v}\n" for k, v in kv.items())


def _fmt(x) -> str:
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    return str(x)


@dataclass
class RunResult:
    row: dict
    files: dict


def run_single(cfg: ExperimentConfig, run_dir: Path) -> RunResult:
    """Simulate data, solve, segment and write the per-run files."""
    run_dir = fio.ensure_dir(run_dir)
    u_gt, seg_gt, gt_means = make_phantom(cfg.phantom)
    c = np.asarray(cfg.means if cfg.means is not None else gt_means, dtype=float)
    if c.size < 2:
        raise ConfigError("the phantom has fewer than two intensities; set 'means' explicitly")
    mask = make_mask(cfg.mask, cfg.phantom.grid)
    data = simulate_kspace(u_gt, mask, cfg.sigma, seed=cfg.noise_seed)
    s = cfg.solver
    start = time.perf_counter()
    report = SolveReport(max_outer=1)
    if cfg.method == "zero_fill":
        u = ForwardOperator(mask).adjoint(data.samples)
        v, _ = segment(u, c, s.beta, s.delta, cfg=s)
    elif cfg.method == "tv_seq":
        u, report = tv_reconstruct(data, s.alpha, s)
        v, _ = segment(u, c, s.beta, s.delta, cfg=s)
    elif cfg.method == "bregman_seq":
        u, report = bregman_tv_reconstruct(data, s.alpha, s)
        v, _ = segment(u, c, s.beta, s.delta, cfg=s)
    elif cfg.method == "joint":
        u, v, report = joint_solve(data, c, s)
    else:
        u, v, report = constrained_joint_solve(data, c, s.beta, s.delta, s, return_report=True)
    wall_ms = (time.perf_counter() - start) * 1e3 if cfg.timing else 0.0
    u = np.asarray(u)
    v = np.asarray(v)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise SolverDivergence(f"{cfg.method} produced non-finite output")
    seg = threshold(v, s.mu)
    metrics = evaluate(u, u_gt, seg, seg_gt)

    files = {
        "mask": fio.write_mask(run_dir / "mask", mask),
        "recon": fio.write_image(run_dir / "recon", u),
        "seg": fio.write_image(run_dir / "seg", np.asarray(seg, dtype=float)),
        "relaxation": fio.write_image(run_dir / "relaxation", v),
    }
    fio.write_kspace(run_dir / "data.ksp", data)
    _write_report(run_dir / "report.csv", report)
    row = {
        "method": cfg.method,
        "alpha": s.alpha,
        "beta": s.beta,
        "delta": s.delta,
        "rate": cfg.mask.rate,
        "sigma": cfg.sigma,
        "rre": metrics.rre,
        "psnr_norm": metrics.psnr_norm,
        "psnr_standard": metrics.psnr_standard,
        "rse": metrics.rse,
        "outer_iters": report.outer_iters,
        "stop_reason": report.stop_reason.value,
        "wall_ms": wall_ms,
    }
    return RunResult(row, files)


def _write_report(path, report: SolveReport) -> None:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in report.records:
        w.writerow([_fmt(getattr(r, c)) for c in REPORT_COLUMNS])
    Path(path).write_text(buf.getvalue())


def _run_entry(args):
    cfg, run_dir = args
    return run_single(cfg, run_dir)


def _workers() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def run_experiment(cfg: ExperimentConfig, output=None) -> int:
    """Run every sweep point and write results; returns a process exit code.

    Sweep entries run in up to ``$JOINTRECON_THREADS`` worker processes
    (default 1). Each entry owns its directory, so the outputs do not depend
    on the worker count.
    """
    try:
        if output is not None:
            cfg = replace(cfg, output=str(output))
        problems = check_config(cfg)
        if problems:
            raise ConfigError("; ".join(problems))
        out = fio.ensure_dir(cfg.output)
        runs = expand(cfg)
        jobs = [(run, out / f"run_{i:03d}") for i, run in enumerate(runs)]
        workers = min(_workers(), len(jobs))
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_run_entry, jobs))
        else:
            results = [_run_entry(j) for j in jobs]
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (SolverDivergence, FloatingPointError) as exc:
        log.error("solver failure: %s", exc)
        return EXIT_SOLVER
    except ValueError as exc:
        log.error("invalid experiment: %s", exc)
        return EXIT_CONFIG

    u_gt, seg_gt, _ = make_phantom(cfg.phantom)
    manifest = to_mapping(cfg)
    for name, arr in (("ground_truth", np.asarray(u_gt)), ("labels_gt", np.asarray(seg_gt, dtype=float))):
        for k, val in fio.write_image(out / name, arr).items():
            manifest[f"file.{name}.{k}"] = val
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for i, res in enumerate(results):
        w.writerow([_fmt(res.row[c]) for c in CSV_COLUMNS])
        for name, entry in res.files.items():
            for k, val in entry.items():
                manifest[f"file.run_{i:03d}.{name}.{k}"] = val
    (out / "metrics.csv").write_text(buf.getvalue())
    (out / "manifest.txt").write_text(format_flat(manifest))
    return EXIT_OK
