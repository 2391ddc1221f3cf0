"""Monte Carlo experiments: estimator tables, coverage studies, field scans.

Replication ``k`` of every cell draws its paths from substream
``(seed, k)``, so results do not depend on the number of workers, and cells
that share a seed share their random numbers (common random numbers across
designs and drivers).
"""

from __future__ import annotations

import csv
import json
import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import __version__, _kernels
from .avar import confidence_intervals, estimate_sigma, studentize
from .errors import LevyGQLError
from .estimator import FitOptions, fit
from .gql import contrast
from .levy import LevyDriver
from .model import ModelSpec, ParamBox, get_model
from .simulate import Observations, simulate_batch

STUDIES = ("table1", "coverage", "fieldscan")
BATCH = 16


@dataclass
class ExperimentConfig:
    model: str = "nig-hyperbolic"
    theta0: tuple = (1.0, 1.0)
    drivers: list = field(default_factory=lambda: [{"kind": "nig", "delta": 10.0}])
    designs: list = field(default_factory=lambda: [(100.0, 0.01)])
    replications: int = 1000
    seed: int = 0
    fine_div: int = 30
    output: Optional[str] = None
    study: str = "table1"
    starts: int = 8
    box: Optional[str] = None
    burn: float = 0.0
    level: float = 0.95
    workers: int = 1
    # fieldscan settings
    radii: list = field(default_factory=lambda: [0, 1, 2, 3, 4, 5, 6, 8, 10, 15, 20])
    angles: int = 16
    power: float = 2.0

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.study not in STUDIES:
            raise ValueError(f"study must be one of {STUDIES}")
        if self.fine_div < 1 or self.starts < 1:
            raise ValueError("fine_div and starts must be >= 1")
        self.designs = [(float(T), float(h)) for T, h in self.designs]
        for T, h in self.designs:
            ratio = T / h
            if not (T > 0 and h > 0) or abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
                raise ValueError(f"design (T={T}, h={h}) needs T/h integral")
        self.theta0 = tuple(float(v) for v in self.theta0)
        self.drivers = [d if isinstance(d, dict) else d.to_config() for d in self.drivers]

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            raw = json.load(fh)
        if "driver" in raw and "drivers" not in raw:
            raw["drivers"] = [raw.pop("driver")]
        return cls(**raw)

    def model_spec(self) -> ModelSpec:
        base = get_model(self.model)
        if self.box is None:
            return base
        return get_model(self.model, ParamBox.parse(self.box, base.dim_alpha))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["designs"] = [list(d) for d in self.designs]
        return out


@dataclass
class CellResult:
    driver: str
    T: float
    h: float
    M: int
    converged: int
    boundary: int
    failed: int
    mean: np.ndarray
    sd: np.ndarray
    corr: float
    wall_time: float
    estimates: np.ndarray  # (M, p), NaN rows for failures
    status: np.ndarray  # (M,) 'converged' | 'boundary' | 'failed'
    coverage: Optional[np.ndarray] = None
    stud_cov: Optional[np.ndarray] = None
    studentized: Optional[np.ndarray] = None

    @property
    def mask(self) -> np.ndarray:
        return self.status == "converged"


@dataclass
class MCResult:
    config: ExperimentConfig
    cells: list
    param_names: tuple
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)

    def cell(self, driver_label: str, T: float, h: float) -> CellResult:
        for c in self.cells:
            if c.driver == driver_label and math.isclose(c.T, T) and math.isclose(c.h, h):
                return c
        raise KeyError((driver_label, T, h))


# --------------------------------------------------------------------------
# per-replication work
# --------------------------------------------------------------------------


def _fit_one(obs: Observations, model: ModelSpec, theta0: np.ndarray, opts: FitOptions, coverage: bool, level: float):
    """Returns (status, theta_hat, studentized, ci hits)."""
    p = model.p
    nan = np.full(p, np.nan)
    try:
        rep = fit(obs, model, opts)
    except (LevyGQLError, FloatingPointError, np.linalg.LinAlgError):
        return "failed", nan, nan, nan
    status = "boundary" if rep.boundary_hit else ("converged" if rep.converged else "failed")
    est = rep.theta_hat.stacked
    if not coverage or status != "converged":
        return status, est, nan, nan
    try:
        sig = estimate_sigma(obs, model, rep.theta_hat)
        z = studentize(obs, rep.theta_hat, sig, theta0)
        ci = confidence_intervals(rep.theta_hat, sig, obs.T, level)
    except (LevyGQLError, ArithmeticError, AssertionError, np.linalg.LinAlgError):
        return "failed", est, nan, nan
    hits = ((ci[:, 0] <= theta0) & (theta0 <= ci[:, 1])).astype(float)
    return status, est, z, hits


def _cell_chunk(args):
    """Worker: simulate and fit replications ``keys`` of one cell."""
    cfg_dict, driver_cfg, T, h, keys, coverage = args
    cfg = ExperimentConfig(**cfg_dict)
    model = cfg.model_spec()
    theta0 = np.asarray(cfg.theta0)
    th = model.theta(theta0)
    driver = LevyDriver.from_config(driver_cfg)
    opts = FitOptions(starts=cfg.starts, seed=cfg.seed)
    rows = []
    for i in range(0, len(keys), BATCH):
        block = keys[i : i + BATCH]
        grid, states, ok = simulate_batch(model, th, driver, T, h, block, cfg.seed, cfg.fine_div, burn=cfg.burn)
        for b, k in enumerate(block):
            if not ok[b]:
                nan = np.full(model.p, np.nan)
                rows.append((k, "failed", nan, nan, nan))
                continue
            obs = Observations(grid, states[b])
            rows.append((k,) + _fit_one(obs, model, theta0, opts, coverage, cfg.level))
    return rows


def _split(keys: list, parts: int) -> list:
    size = max(1, math.ceil(len(keys) / parts))
    return [keys[i : i + size] for i in range(0, len(keys), size)]


def _run_cell(cfg: ExperimentConfig, driver_cfg: dict, T: float, h: float, coverage: bool, pool) -> CellResult:
    t0 = time.perf_counter()
    keys = list(range(cfg.replications))
    jobs = [(cfg.to_dict(), driver_cfg, T, h, chunk, coverage) for chunk in _split(keys, max(1, cfg.workers) * 4)]
    results = pool.map(_cell_chunk, jobs) if pool is not None else map(_cell_chunk, jobs)
    rows = sorted((r for chunk in results for r in chunk), key=lambda r: r[0])
    status = np.array([r[1] for r in rows])
    est = np.array([r[2] for r in rows])
    stud = np.array([r[3] for r in rows])
    hits = np.array([r[4] for r in rows])
    good = status == "converged"
    sel = est[good]
    p = est.shape[1]
    mean = sel.mean(axis=0) if sel.shape[0] else np.full(p, np.nan)
    sd = sel.std(axis=0, ddof=1) if sel.shape[0] > 1 else np.full(p, np.nan)
    corr = float(np.corrcoef(sel[:, 0], sel[:, -1])[0, 1]) if sel.shape[0] > 2 and p > 1 else float("nan")
    cell = CellResult(
        driver=LevyDriver.from_config(driver_cfg).label,
        T=T,
        h=h,
        M=cfg.replications,
        converged=int(good.sum()),
        boundary=int((status == "boundary").sum()),
        failed=int((status == "failed").sum()),
        mean=mean,
        sd=sd,
        corr=corr,
        wall_time=0.0,
        estimates=est,
        status=status,
    )
    if coverage:
        ok = good & np.all(np.isfinite(stud), axis=1)
        cell.studentized = stud
        cell.coverage = hits[ok].mean(axis=0) if ok.any() else np.full(p, np.nan)
        zs = stud[ok]
        cell.stud_cov = (zs.T @ zs) / zs.shape[0] if zs.shape[0] else np.full((p, p), np.nan)
    cell.wall_time = time.perf_counter() - t0
    return cell


def _run_mc(cfg: ExperimentConfig, coverage: bool) -> MCResult:
    t0 = time.perf_counter()
    model = cfg.model_spec()
    if len(cfg.theta0) != model.p:
        raise ValueError(f"theta0 must have {model.p} entries for model {cfg.model}")
    pool = ProcessPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        cells = [_run_cell(cfg, d, T, h, coverage, pool) for d in cfg.drivers for (T, h) in cfg.designs]
    finally:
        if pool is not None:
            pool.shutdown()
    return MCResult(cfg, cells, model.param_names, time.perf_counter() - t0)


def run_table1(config: ExperimentConfig) -> MCResult:
    """Mean and sd of the estimator per (driver, design) cell."""
    return _run_mc(config, coverage=False)


def run_coverage(config: ExperimentConfig) -> MCResult:
    """Adds Studentized statistics, CI coverage and their empirical covariance."""
    return _run_mc(config, coverage=True)


# --------------------------------------------------------------------------
# random-field tail scan
# --------------------------------------------------------------------------


def shell_grid(p: int, radii: Sequence[float], angles: int) -> np.ndarray:
    """Points u on spheres of the given radii: polar grid for p = 2, axes and diagonals otherwise."""
    pts = [np.zeros(p)]
    for r in radii:
        if r <= 0:
            continue
        if p == 1:
            dirs = np.array([[1.0], [-1.0]])
        elif p == 2:
            ang = 2 * np.pi * np.arange(angles) / angles
            dirs = np.column_stack([np.cos(ang), np.sin(ang)])
        else:
            eye = np.eye(p)
            dirs = np.vstack([eye, -eye, np.ones((1, p)) / math.sqrt(p), -np.ones((1, p)) / math.sqrt(p)])
        pts.extend(r * dirs)
    return np.array(pts)


def run_fieldscan(config: ExperimentConfig, theta0=None, radius=None, grid_points: Optional[int] = None) -> MCResult:
    """Monte Carlo estimate of P[sup_{|u| >= r} Z_n(u) >= exp(-r)] per radius r.

    The supremum runs over a shell grid (``radius`` values x ``grid_points``
    directions) intersected with the set where theta0 + u / sqrt(T) stays in
    the box; points outside are skipped and counted.  Only the first driver
    and design of the config are used.
    """
    t0 = time.perf_counter()
    cfg = config
    model = cfg.model_spec()
    th0 = np.asarray(theta0 if theta0 is not None else cfg.theta0, dtype=np.float64)
    radii = sorted(float(r) for r in (radius if radius is not None else cfg.radii))
    angles = grid_points or cfg.angles
    driver = LevyDriver.from_config(cfg.drivers[0])
    T, h = cfg.designs[0]
    U = shell_grid(model.p, radii, angles)
    norms = np.linalg.norm(U, axis=1)
    inside = np.array([model.param_box.contains(th0 + u / math.sqrt(T)) for u in U])
    tp = model.theta(th0)
    sup_hits = np.zeros(len(radii))
    used = 0
    failed = 0
    keys = list(range(cfg.replications))
    for i in range(0, len(keys), BATCH):
        block = keys[i : i + BATCH]
        grid, states, ok = simulate_batch(model, tp, driver, T, h, block, cfg.seed, cfg.fine_div, burn=cfg.burn)
        for b in range(len(block)):
            if not ok[b]:
                failed += 1
                continue
            obs = Observations(grid, states[b])
            m0 = contrast(obs, model, tp, with_q=False).m
            logz = np.full(U.shape[0], -np.inf)
            for j in np.flatnonzero(inside):
                logz[j] = contrast(obs, model, model.theta(th0 + U[j] / math.sqrt(T)), with_q=False).m - m0
            for ri, r in enumerate(radii):
                shell = (norms >= r - 1e-12) & inside if r > 0 else (norms == 0)
                if shell.any() and np.max(logz[shell]) >= -r:
                    sup_hits[ri] += 1
            used += 1
    prob = sup_hits / max(used, 1)
    table = [
        {"r": r, "probability": float(pr), "r_pow_probability": float(r**cfg.power * pr), "grid_points": int(((norms >= r - 1e-12) & inside).sum()) if r > 0 else 1}
        for r, pr in zip(radii, prob)
    ]
    res = MCResult(cfg, [], model.param_names, time.perf_counter() - t0)
    res.extra = {"fieldscan": table, "skipped_points": int((~inside).sum()), "replications_used": used, "failed": failed, "power": cfg.power}
    return res


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------


def cell_rows(result: MCResult) -> list[dict]:
    """Flat rows: design columns first, then statistics."""
    rows = []
    for c in result.cells:
        row = {"study": result.config.study, "model": result.config.model, "driver": c.driver, "T": c.T, "h": c.h, "M": c.M}
        row.update({"converged": c.converged, "boundary": c.boundary, "failed": c.failed})
        for i, name in enumerate(result.param_names):
            row[f"mean_{name}"] = float(c.mean[i])
            row[f"sd_{name}"] = float(c.sd[i])
        row["corr"] = c.corr
        if c.coverage is not None:
            for i, name in enumerate(result.param_names):
                row[f"coverage_{name}"] = float(c.coverage[i])
            p = len(result.param_names)
            for i in range(p):
                for j in range(i, p):
                    row[f"studcov_{i + 1}{j + 1}"] = float(c.stud_cov[i, j])
        row["wall_time"] = round(c.wall_time, 3)
        rows.append(row)
    return rows


def _write_csv(path, rows: list[dict]) -> None:
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def versions() -> dict:
    import numpy
    import scipy

    out = {"levygql": __version__, "python": platform.python_version(), "numpy": numpy.__version__, "scipy": scipy.__version__}
    out["backend"] = _kernels.backend()
    if _kernels.HAVE_NUMBA:
        import numba

        out["numba"] = numba.__version__
    return out


def write_outputs(result: MCResult, output: str) -> tuple[str, str]:
    """Write ``<output>.csv`` and ``<output>.manifest.json``; returns both paths."""
    base = output[:-4] if output.endswith(".csv") else output
    os.makedirs(os.path.dirname(os.path.abspath(base)), exist_ok=True)
    csv_path, manifest_path = base + ".csv", base + ".manifest.json"
    if result.config.study == "fieldscan":
        _write_csv(csv_path, result.extra["fieldscan"])
    else:
        _write_csv(csv_path, cell_rows(result))
    manifest = {
        "config": result.config.to_dict(),
        "seed": result.config.seed,
        "versions": versions(),
        "timings": {"total": round(result.wall_time, 3), "cells": [round(c.wall_time, 3) for c in result.cells]},
        "outputs": {"csv": os.path.basename(csv_path)},
    }
    if result.extra:
        manifest["extra"] = {k: v for k, v in result.extra.items() if k != "fieldscan"}
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2)
    return csv_path, manifest_path
