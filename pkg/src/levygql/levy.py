"""Centered, unit-covariance Levy drivers and their mixed jump moments.

Three kinds are supported: the Wiener process, compound Poisson processes
with a closed-form jump law, and the symmetric normal inverse Gaussian
process NIG(delta, 0, delta*t, 0).  Multi-dimensional drivers have
independent, identically distributed coordinates.

Random streams are plain :class:`numpy.random.Generator` objects backed by
PCG64.  A stream for replication ``k`` of a run with seed ``s`` is built from
the seed sequence ``(s, k)``, so streams never have to be shared between
threads or processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InvalidDuration, MomentsUnavailable


def make_stream(seed: int, *key: int) -> np.random.Generator:
    """PCG64 generator for substream ``(seed, *key)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))))


def split_stream(seed: int, *key: int, n: int = 2) -> list[np.random.Generator]:
    """``n`` independent child streams of substream ``(seed, *key)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return [np.random.Generator(np.random.PCG64(child)) for child in ss.spawn(n)]


# Raw moments E[z^m], m = 1..4, of the supported compound-Poisson jump laws.
_JUMP_LAWS = {
    "rademacher": (0.0, 1.0, 0.0, 1.0),
    "normal": (0.0, 1.0, 0.0, 3.0),
    "exponential": (1.0, 2.0, 6.0, 24.0),
}


@dataclass(frozen=True)
class NuMoments:
    """Third and fourth mixed moments of the Levy measure."""

    nu3: np.ndarray
    nu4: np.ndarray


@dataclass(frozen=True)
class LevyDriver:
    """Configuration of the driving Levy process J.

    ``kind`` is ``"wiener"``, ``"cp"`` (compound Poisson, intensity ``lam``
    and jump law ``jump``) or ``"nig"`` (tail parameter ``delta``).
    """

    kind: str
    dim: int = 1
    delta: float = 1.0
    lam: float = 1.0
    jump: str = "rademacher"

    def __post_init__(self):
        if self.kind not in ("wiener", "cp", "nig"):
            raise ValueError(f"unknown driver kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("driver dimension must be positive")
        if self.kind == "nig" and not self.delta > 0:
            raise ValueError("NIG delta must be positive")
        if self.kind == "cp":
            if not self.lam > 0:
                raise ValueError("compound Poisson intensity must be positive")
            if self.jump not in _JUMP_LAWS:
                raise ValueError(f"unknown jump law {self.jump!r}; choose from {sorted(_JUMP_LAWS)}")

    @classmethod
    def from_config(cls, cfg: dict) -> "LevyDriver":
        kind = cfg["kind"]
        dim = int(cfg.get("dim", 1))
        if kind == "wiener":
            return cls("wiener", dim)
        if kind == "nig":
            return cls("nig", dim, delta=float(cfg["delta"]))
        if kind == "cp":
            return cls("cp", dim, lam=float(cfg.get("lambda", 1.0)), jump=cfg.get("jump", "rademacher"))
        raise ValueError(f"unknown driver kind {kind!r}")

    def to_config(self) -> dict:
        if self.kind == "wiener":
            cfg = {"kind": "wiener"}
        elif self.kind == "nig":
            cfg = {"kind": "nig", "delta": self.delta}
        else:
            cfg = {"kind": "cp", "lambda": self.lam, "jump": self.jump}
        if self.dim != 1:
            cfg["dim"] = self.dim
        return cfg

    @property
    def label(self) -> str:
        if self.kind == "wiener":
            return "diffusion"
        if self.kind == "nig":
            return f"nig(delta={self.delta:g})"
        return f"cp(lambda={self.lam:g},{self.jump})"

    def _cp_scale(self) -> float:
        m1, m2, _, _ = _JUMP_LAWS[self.jump]
        return 1.0 / math.sqrt(self.lam * m2)

    def sample(self, rng: np.random.Generator, dts) -> np.ndarray:
        """Increments over consecutive intervals of lengths ``dts``: shape (m, dim)."""
        dts = np.asarray(dts, dtype=np.float64)
        if dts.ndim != 1:
            raise ValueError("dts must be one-dimensional")
        if dts.size and not np.all(dts > 0):
            raise InvalidDuration("increment durations must be positive")
        m, r = dts.size, self.dim
        if self.kind == "wiener":
            return rng.standard_normal((m, r)) * np.sqrt(dts)[:, None]
        if self.kind == "nig":
            y = rng.standard_normal((m, r))
            y *= y
            u = rng.random((m, r))
            z = rng.standard_normal((m, r))
            mu = np.broadcast_to(dts[:, None], (m, r))
            lam = (self.delta * mu) ** 2
            s = _kernels.ig_transform(mu, lam, y, u)
            return np.sqrt(s) * z
        return self._sample_cp(rng, dts)

    def _sample_cp(self, rng, dts):
        m, r = dts.size, self.dim
        m1 = _JUMP_LAWS[self.jump][0]
        scale = self._cp_scale()
        counts = rng.poisson(self.lam * np.repeat(dts, r)).reshape(m, r)
        total = int(counts.sum())
        if self.jump == "rademacher":
            z = 2.0 * rng.integers(0, 2, size=total) - 1.0
        elif self.jump == "normal":
            z = rng.standard_normal(total)
        else:
            z = rng.standard_exponential(total)
        owner = np.repeat(np.arange(m * r), counts.ravel())
        sums = np.bincount(owner, weights=z, minlength=m * r).reshape(m, r)
        return scale * (sums - self.lam * m1 * dts[:, None])


def sample_increment(driver: LevyDriver, h: float, rng: np.random.Generator) -> np.ndarray:
    """One draw of J_h, an r''-vector."""
    if not h > 0:
        raise InvalidDuration(f"duration must be positive, got {h}")
    return driver.sample(rng, np.array([float(h)]))[0]


def nu_moments(driver: LevyDriver) -> NuMoments:
    r = driver.dim
    nu3 = np.zeros((r,) * 3)
    nu4 = np.zeros((r,) * 4)
    if driver.kind == "wiener":
        return NuMoments(nu3, nu4)
    if driver.kind == "nig":
        diag3, diag4 = 0.0, 3.0 / driver.delta**2
    elif driver.kind == "cp":
        if driver.jump not in _JUMP_LAWS:
            raise MomentsUnavailable(driver.jump)
        _, _, m3, m4 = _JUMP_LAWS[driver.jump]
        s = driver._cp_scale()
        diag3, diag4 = driver.lam * m3 * s**3, driver.lam * m4 * s**4
    else:  # pragma: no cover - guarded by LevyDriver validation
        raise MomentsUnavailable(driver.kind)
    for i in range(r):
        nu3[i, i, i] = diag3
        nu4[i, i, i, i] = diag4
    return NuMoments(nu3, nu4)


def parse_driver(text: str) -> LevyDriver:
    """Parse a JSON object or the shorthands ``wiener``, ``nig:10``, ``cp:1:rademacher``."""
    import json

    text = text.strip()
    if text.startswith("{"):
        return LevyDriver.from_config(json.loads(text))
    parts = text.split(":")
    if parts[0] in ("wiener", "diffusion"):
        return LevyDriver("wiener")
    if parts[0] == "nig":
        return LevyDriver("nig", delta=float(parts[1]))
    if parts[0] == "cp":
        lam = float(parts[1]) if len(parts) > 1 else 1.0
        jump = parts[2] if len(parts) > 2 else "rademacher"
        return LevyDriver("cp", lam=lam, jump=jump)
    raise ValueError(f"cannot parse driver {text!r}")
