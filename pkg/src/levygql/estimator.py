"""GQMLE: maximize the contrast M_n over the closed parameter box.

The search is a multistart Nelder-Mead on -M_n (or -Q_n/n) with the
simplex clipped to the box, started from a scrambled Halton design over the
box, followed by Newton polishing of G_n(theta) = 0 when the best point is
interior.  The returned estimate is the best point evaluated anywhere in the
run, ranked by (largest M_n, smallest |G_n|, lexicographically smallest theta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .errors import AllStartsFailed, LevyGQLError
from .gql import contrast, quasi_score, score_jacobian
from .model import ModelSpec, ThetaPoint
from .simulate import Observations


@dataclass(frozen=True)
class FitOptions:
    starts: int = 8
    max_iter: int = 2000
    grad_tol: float = 1e-8
    simplex_tol: float = 1e-6
    newton_refine: bool = True
    objective: str = "contrast"
    seed: int = 0
    newton_iter: int = 50

    def __post_init__(self):
        if self.starts < 1:
            raise ValueError("starts must be >= 1")
        if not (self.grad_tol > 0 and self.simplex_tol > 0 and self.max_iter > 0):
            raise ValueError("tolerances and max_iter must be positive")
        if self.objective not in ("contrast", "gql"):
            raise ValueError("objective must be 'contrast' or 'gql'")


@dataclass
class EstimateReport:
    theta_hat: ThetaPoint
    m_at_hat: float
    q_at_hat: float
    score_norm: float
    converged: bool
    boundary_hit: bool
    iterations: int
    evaluations: int
    starts: list = field(default_factory=list)
    trace: list = field(default_factory=list)

    def as_dict(self, names=None) -> dict:
        vec = self.theta_hat.stacked
        names = names or [f"theta{i + 1}" for i in range(vec.size)]
        return {
            "theta_hat": dict(zip(names, vec.tolist())),
            "m_at_hat": self.m_at_hat,
            "q_at_hat": self.q_at_hat,
            "score_norm": self.score_norm,
            "converged": self.converged,
            "boundary_hit": self.boundary_hit,
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "starts": self.starts,
        }


class _Tracker:
    """Objective wrapper remembering the best point ever evaluated."""

    def __init__(self, obs, model, objective):
        self.obs, self.model, self.objective = obs, model, objective
        self.best = None  # (m, gnorm, theta tuple, q)
        self.nfev = 0
        self.n = obs.n

    def eval(self, vec):
        vec = np.asarray(vec, dtype=np.float64)
        cv = contrast(self.obs, self.model, self.model.theta(vec), with_q=self.objective == "gql")
        self.nfev += 1
        cand = (cv.m, cv.score.norm, tuple(vec.tolist()), cv.q)
        if math.isfinite(cv.m) and (self.best is None or _better(cand, self.best)):
            self.best = cand
        return cv

    def __call__(self, vec):
        try:
            cv = self.eval(vec)
        except (LevyGQLError, FloatingPointError, np.linalg.LinAlgError):
            return math.inf
        val = -cv.m if self.objective == "contrast" else -cv.q / self.n
        return val if math.isfinite(val) else math.inf


def _better(a, b) -> bool:
    """Tie-break order: larger M, then smaller |G|, then smaller theta."""
    if a[0] != b[0]:
        return a[0] > b[0]
    if a[1] != b[1]:
        return a[1] < b[1]
    return a[2] < b[2]


def start_points(model: ModelSpec, starts: int, seed: int = 0) -> np.ndarray:
    """Scrambled Halton points mapped into the box."""
    sampler = qmc.Halton(d=model.p, scramble=True, seed=seed)
    return model.param_box.scale(sampler.random(starts))


def _newton(obs, model, theta0: np.ndarray, opts: FitOptions, tracker: _Tracker, trace):
    box = model.param_box
    th = theta0.copy()
    sqrtT = math.sqrt(obs.T)
    it = 0
    for it in range(1, opts.newton_iter + 1):
        g = quasi_score(obs, model, model.theta(th)).stacked
        if np.linalg.norm(g) / sqrtT < opts.grad_tol:
            break
        J = score_jacobian(obs, model, model.theta(th))
        try:
            step = np.linalg.solve(J, g)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)):
            break
        # backtrack on |G| so that a poor Jacobian cannot throw us away
        g0 = float(g @ g)
        lam = 1.0
        while lam > 1e-6:
            cand = box.clip(th - lam * step)
            try:
                cv = tracker.eval(cand)
            except (LevyGQLError, FloatingPointError):
                lam *= 0.5
                continue
            if trace is not None:
                trace.append(("newton", cand.copy(), cv.q, cv.m, cv.score.norm))
            gc = cv.score.stacked
            if float(gc @ gc) < g0:
                th = cand
                break
            lam *= 0.5
        else:
            break
    return th, it


def fit(
    obs: Observations,
    model: ModelSpec,
    options: Optional[FitOptions] = None,
    starts: Optional[np.ndarray] = None,
    trace: bool = False,
) -> EstimateReport:
    """Compute the GQMLE; see the module docstring for the search strategy."""
    opts = options or FitOptions()
    if obs.n < model.p:
        raise ValueError(f"need at least {model.p} observations, got {obs.n}")
    box = model.param_box
    tracker = _Tracker(obs, model, opts.objective)
    pts = start_points(model, opts.starts, opts.seed) if starts is None else np.atleast_2d(starts)
    rows: list = [] if trace else None
    per_start = []
    total_iter = 0

    for k, x0 in enumerate(pts):
        callback: Optional[Callable] = None
        if trace:
            def callback(xk, k=k):
                cv = tracker.eval(xk)
                rows.append((f"start{k}", np.array(xk), cv.q, cv.m, cv.score.norm))
        res = minimize(
            tracker,
            box.clip(x0),
            method="Nelder-Mead",
            bounds=list(zip(box.lower, box.upper)),
            callback=callback,
            options={"maxiter": opts.max_iter, "xatol": opts.simplex_tol, "fatol": opts.simplex_tol**2, "adaptive": model.p > 3},
        )
        total_iter += int(res.nit)
        per_start.append(
            {"start": x0.tolist(), "end": np.asarray(res.x).tolist(), "objective": float(res.fun), "nit": int(res.nit), "success": bool(res.success)}
        )

    if tracker.best is None:
        raise AllStartsFailed("every start produced a non-finite objective")

    best = np.array(tracker.best[2])
    if opts.newton_refine and not box.on_boundary(best):
        _, nit = _newton(obs, model, best, opts, tracker, rows)
        total_iter += nit

    m_hat, gnorm, theta_t, q_hat = tracker.best
    theta_hat = model.theta(np.array(theta_t))
    if not math.isfinite(q_hat):
        q_hat = contrast(obs, model, theta_hat).q
    boundary = box.on_boundary(theta_hat.stacked)
    converged = (gnorm / math.sqrt(obs.T) < opts.grad_tol) and not boundary
    return EstimateReport(
        theta_hat=theta_hat,
        m_at_hat=m_hat,
        q_at_hat=q_hat,
        score_norm=gnorm,
        converged=converged,
        boundary_hit=boundary,
        iterations=total_iter,
        evaluations=tracker.nfev,
        starts=per_start,
        trace=rows or [],
    )


def scan_path(obs: Observations, model: ModelSpec, thetas) -> np.ndarray:
    """Rows (M_n, Q_n) at each parameter vector in ``thetas``."""
    out = []
    for vec in np.atleast_2d(thetas):
        cv = contrast(obs, model, model.theta(vec))
        out.append((cv.m, cv.q))
    return np.array(out)


def profile_scan(obs: Observations, model: ModelSpec, theta: ThetaPoint, axis: int, grid) -> np.ndarray:
    """Table of (value, M_n, Q_n) varying coordinate ``axis`` over ``grid``.

    A flat M_n ridge across the grid signals non-identifiability.
    """
    grid = np.atleast_1d(np.asarray(grid, dtype=np.float64))
    pts = np.tile(theta.stacked, (grid.size, 1))
    pts[:, axis] = grid
    return np.column_stack([grid, scan_path(obs, model, pts)])


def maximality_audit(obs: Observations, model: ModelSpec, report: EstimateReport, width: float = 0.1, points: int = 10) -> float:
    """Largest M_n on a points x points grid (first two coordinates) around theta_hat,
    minus M_n(theta_hat).  Non-positive when theta_hat is a grid-local maximum."""
    th = report.theta_hat.stacked
    box = model.param_box
    offsets = np.linspace(-width, width, points)
    worst = -math.inf
    for di in offsets:
        for dj in offsets:
            v = th.copy()
            v[0] += di
            if v.size > 1:
                v[1] += dj
            v = box.clip(v)
            worst = max(worst, contrast(obs, model, model.theta(v), with_q=False).m)
    return worst - report.m_at_hat
