"""Euler simulation on a fine grid and decimation onto observation grids."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .errors import GridMismatch, InvalidDuration, NonFinite
from .levy import LevyDriver, split_stream
from .model import ModelSpec, ThetaPoint

# Random draws are made in blocks of this many Euler steps.  Changing it
# changes which numbers a seed produces, so it is part of the seed contract.
CHUNK = 8192

IRREGULARITY_WARN = 0.5


@dataclass(frozen=True)
class Observations:
    """States X_{t_0}, ..., X_{t_n} on a strictly increasing grid with t_0 = 0."""

    times: np.ndarray
    states: np.ndarray
    warnings: tuple = field(default=(), compare=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64).ravel()
        x = np.asarray(self.states, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if t.size != x.shape[0]:
            raise ValueError("times and states must have the same length")
        if t.size < 2:
            raise ValueError("need at least two observation times")
        if t[0] != 0.0:
            raise ValueError("observation times must start at t_0 = 0")
        dt = np.diff(t)
        if not np.all(dt > 0):
            raise ValueError("observation times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", x)
        notes = list(self.warnings)
        ratio = float(dt.min() / dt.max())
        if ratio < IRREGULARITY_WARN:
            notes.append(f"irregular sampling: min/max step ratio {ratio:.3g} < {IRREGULARITY_WARN}")
        object.__setattr__(self, "warnings", tuple(notes))

    @property
    def n(self) -> int:
        return self.times.size - 1

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def h(self) -> float:
        return float(self.steps.max())

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def irregularity(self) -> float:
        s = self.steps
        return float(s.min() / s.max())

    @property
    def equidistant(self) -> bool:
        s = self.steps
        return bool(s.max() - s.min() <= 1e-9 * s.max())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{i + 1}" for i in range(self.dim)])
            for t, row in zip(self.times, self.states):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "Observations":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1:])


@dataclass(frozen=True)
class FinePath:
    times: np.ndarray
    states: np.ndarray
    fine_step: float


# --------------------------------------------------------------------------
# engine
# --------------------------------------------------------------------------

def _draw(model: ModelSpec, driver: LevyDriver, w_rng, j_rng, dts):
    m = dts.size
    if model.dim_w:
        dW = w_rng.standard_normal((m, model.dim_w)) * np.sqrt(dts)[:, None]
    else:
        dW = np.zeros((m, 0))
    dJ = driver.sample(j_rng, dts)
    return dW, dJ


def _check(model: ModelSpec, driver: LevyDriver, theta: ThetaPoint):
    if driver.dim != model.dim_j:
        raise ValueError(f"driver dimension {driver.dim} != model jump dimension {model.dim_j}")
    if theta.alpha.size != model.dim_alpha or theta.beta.size != model.dim_beta:
        raise ValueError("theta does not match the model dimensions")
    if not model.param_box.contains(theta.stacked, atol=1e-12):
        raise ValueError(f"theta {theta} lies outside the parameter box")


def _use_numba(model: ModelSpec, backend: Optional[str]) -> bool:
    if backend == "numpy":
        return False
    if backend == "numba" and (not _kernels.HAVE_NUMBA or model.nb_coefs is None):
        raise RuntimeError("numba backend requested but unavailable for this model")
    return _kernels.HAVE_NUMBA and model.nb_coefs is not None


def _run_paths(model, theta, x0, dts, rec, streams, driver, backend=None):
    """Simulate len(streams) paths over steps ``dts``; record after steps ``rec``.

    Returns (states (B, len(rec), d), finite mask (B,)).
    """
    B, d = len(streams), model.dim_x
    out = np.full((B, rec.size, d), np.nan)
    ok = np.ones(B, dtype=bool)
    n_steps = dts.size
    if _use_numba(model, backend):
        for i, (w_rng, j_rng) in enumerate(streams):
            x = np.array(x0, dtype=np.float64).reshape(d)
            for start in range(0, n_steps, CHUNK):
                sl = dts[start : start + CHUNK]
                dW, dJ = _draw(model, driver, w_rng, j_rng, sl)
                lo, hi = np.searchsorted(rec, [start, start + sl.size])
                finite = _kernels.euler_numba(
                    model.nb_coefs, x, theta.alpha, theta.beta, sl, dW, dJ,
                    rec[lo:hi] - start, out[i, lo:hi], model.dim_w, model.dim_j,
                )
                if not finite:
                    ok[i] = False
                    out[i] = np.nan
                    break
        return out, ok
    x = np.tile(np.asarray(x0, dtype=np.float64).reshape(1, d), (B, 1))
    for start in range(0, n_steps, CHUNK):
        sl = dts[start : start + CHUNK]
        draws = [_draw(model, driver, w, j, sl) for w, j in streams]
        dW = np.stack([dw for dw, _ in draws])
        dJ = np.stack([dj for _, dj in draws])
        lo, hi = np.searchsorted(rec, [start, start + sl.size])
        buf = np.empty((B, hi - lo, d))
        with np.errstate(all="ignore"):
            finite = _kernels.euler_numpy(
                model.drift, model.diff, model.jump_coef, x, theta.alpha, theta.beta,
                sl, dW, dJ, rec[lo:hi] - start, buf,
            )
        out[:, lo:hi] = buf
        ok &= finite
        x[~ok] = 0.0  # keep dead paths from producing overflow noise
    out[~ok] = np.nan
    return out, ok


def euler_from_increments(model: ModelSpec, theta: ThetaPoint, x0, dts, dW, dJ, backend: Optional[str] = None) -> np.ndarray:
    """Euler recursion driven by caller-supplied increments; returns all states.

    Output has shape (len(dts) + 1, d), the first row being ``x0``.
    """
    dts = np.asarray(dts, dtype=np.float64)
    dW = np.asarray(dW, dtype=np.float64).reshape(dts.size, model.dim_w)
    dJ = np.asarray(dJ, dtype=np.float64).reshape(dts.size, model.dim_j)
    d = model.dim_x
    out = np.empty((dts.size + 1, d))
    out[0] = np.asarray(x0, dtype=np.float64).reshape(d)
    rec = np.arange(dts.size)
    if _use_numba(model, backend):
        x = out[0].copy()
        finite = _kernels.euler_numba(model.nb_coefs, x, theta.alpha, theta.beta, dts, dW, dJ, rec, out[1:], model.dim_w, model.dim_j)
    else:
        x = out[:1].copy()
        buf = np.empty((1, dts.size, d))
        with np.errstate(all="ignore"):
            finite = _kernels.euler_numpy(model.drift, model.diff, model.jump_coef, x, theta.alpha, theta.beta, dts, dW[None], dJ[None], rec, buf)[0]
        out[1:] = buf[0]
    if not finite or not np.all(np.isfinite(out)):
        raise NonFinite("Euler path became non-finite")
    return out


def _prefix_burn(dts: np.ndarray, rec: np.ndarray, fine_step: float, burn: float):
    if burn <= 0:
        return dts, rec, False
    nb = max(1, int(round(burn / fine_step)))
    dts = np.concatenate([np.full(nb, fine_step), dts])
    rec = np.concatenate([[nb - 1], rec + nb])
    return dts, rec, True


def euler_path(
    model: ModelSpec,
    theta: ThetaPoint,
    x0,
    horizon: float,
    fine_step: float,
    wiener_rng: np.random.Generator,
    jump_driver: LevyDriver,
    jump_rng: np.random.Generator,
    backend: Optional[str] = None,
) -> FinePath:
    """Fine Euler path X_0, X_delta, ..., X_T with delta = ``fine_step``."""
    if not fine_step > 0 or not horizon > 0:
        raise InvalidDuration("horizon and fine_step must be positive")
    _check(model, jump_driver, theta)
    ratio = horizon / fine_step
    n = int(round(ratio))
    if abs(ratio - n) > 1e-9 * max(1.0, ratio):
        raise GridMismatch(f"horizon {horizon} is not a multiple of fine step {fine_step}")
    dts = np.full(n, float(fine_step))
    rec = np.arange(n)
    out, ok = _run_paths(model, theta, x0, dts, rec, [(wiener_rng, jump_rng)], jump_driver, backend)
    if not ok[0]:
        raise NonFinite("Euler path became non-finite")
    states = np.vstack([np.asarray(x0, dtype=np.float64).reshape(1, -1), out[0]])
    return FinePath(np.arange(n + 1) * float(fine_step), states, float(fine_step))


def subsample(fine: FinePath, h: float) -> Observations:
    """Keep the fine-path states at times j*h."""
    ratio = h / fine.fine_step
    stride = int(round(ratio))
    if stride < 1 or abs(ratio - stride) > 1e-9 * max(1.0, ratio):
        raise GridMismatch(f"h = {h} is not an integer multiple of the fine step {fine.fine_step}")
    idx = np.arange(0, fine.states.shape[0], stride)
    return Observations(np.arange(idx.size) * float(h), fine.states[idx])


def _regular_plan(T: float, h: float, fine_div: int):
    ratio = T / h
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > 1e-9 * max(1.0, ratio):
        raise GridMismatch(f"T = {T} is not an integer multiple of h = {h}")
    fine = h / fine_div
    dts = np.full(n * fine_div, fine)
    rec = np.arange(1, n + 1) * fine_div - 1
    return np.arange(n + 1) * float(h), dts, rec, fine


def _irregular_plan(times: np.ndarray, fine_div: int):
    times = np.asarray(times, dtype=np.float64)
    steps = np.diff(times)
    if times[0] != 0.0 or not np.all(steps > 0):
        raise ValueError("irregular grid must start at 0 and increase strictly")
    target = steps.max() / fine_div
    k = np.maximum(1, np.ceil(steps / target - 1e-9).astype(int))
    dts = np.repeat(steps / k, k)
    rec = np.cumsum(k) - 1
    return times, dts, rec, float(target)


def simulate_batch(
    model: ModelSpec,
    theta: ThetaPoint,
    driver: LevyDriver,
    T: float,
    h: float,
    keys: Sequence[int],
    seed: int = 0,
    fine_div: int = 30,
    x0=None,
    burn: float = 0.0,
    times=None,
    backend: Optional[str] = None,
):
    """Simulate one path per key in ``keys`` using substreams (seed, key).

    Returns ``(times, states, ok)`` where states has shape (B, n+1, d) and
    ``ok`` flags paths that stayed finite (failed paths are all-NaN).
    """
    _check(model, driver, theta)
    if fine_div < 1:
        raise ValueError("fine_div must be at least 1")
    if times is None:
        grid, dts, rec, fine = _regular_plan(T, h, fine_div)
    else:
        grid, dts, rec, fine = _irregular_plan(times, fine_div)
    x0 = np.zeros(model.dim_x) if x0 is None else np.asarray(x0, dtype=np.float64).reshape(model.dim_x)
    dts, rec, burned = _prefix_burn(dts, rec, fine, burn)
    streams = [tuple(split_stream(seed, k, n=2)) for k in keys]
    out, ok = _run_paths(model, theta, x0, dts, rec, streams, driver, backend)
    if burned:
        states = out
    else:
        states = np.concatenate([np.broadcast_to(x0, (len(streams), 1, model.dim_x)), out], axis=1)
        states[~ok] = np.nan
    return grid, states, ok


def simulate_observations(
    model: ModelSpec,
    theta: ThetaPoint,
    driver: LevyDriver,
    T: float,
    h: float,
    seed: int = 0,
    key: int = 0,
    fine_div: int = 30,
    x0=None,
    burn: float = 0.0,
    times=None,
    backend: Optional[str] = None,
) -> Observations:
    """Simulate and subsample one path; raises NonFinite on explosion."""
    grid, states, ok = simulate_batch(model, theta, driver, T, h, [key], seed, fine_div, x0, burn, times, backend)
    if not ok[0]:
        raise NonFinite("simulated path became non-finite")
    obs = Observations(grid, states[0])
    for note in obs.warnings:
        warnings.warn(note, stacklevel=2)
    return obs


def read_times(path) -> np.ndarray:
    """Times from a one-column text/CSV file (header lines starting with a letter are skipped)."""
    vals = []
    with open(path) as fh:
        for line in fh:
            line = line.strip().split(",")[0]
            if not line:
                continue
            try:
                vals.append(float(line))
            except ValueError:
                continue
    return np.asarray(vals)

