"""Parametric SDE  dX = a(X, alpha) dt + b(X, beta) dW + c(X-, beta) dJ.

Coefficient callables are vectorized over a leading sample axis:

* ``drift(x, alpha)``        x: (n, d)  ->  (n, d)
* ``drift_dalpha(x, alpha)`` ->  (n, d, p_alpha)
* ``diff(x, beta)``          ->  (n, d, r')    (r' may be 0)
* ``jump_coef(x, beta)``     ->  (n, d, r'')
* ``dbeta_V(x, beta)``       ->  (n, p_beta, d, d)

Optional second derivatives ``drift_dalpha2`` -> (n, d, p_alpha, p_alpha)
and ``dbeta2_V`` -> (n, p_beta, p_beta, d, d) feed the score Jacobian.
Missing derivatives are replaced by central differences with step
``1e-6 * (1 + |theta_k|)`` and the substitution is recorded in
``ModelSpec.fd_flags``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._kernels import HAVE_NUMBA, njit
from .errors import NonPositiveDefinite

Array = np.ndarray


def _fd_step(v: float) -> float:
    return 1e-6 * (1.0 + abs(v))


@dataclass(frozen=True)
class ParamBox:
    """Closed hyper-rectangle [lower, upper] split into alpha and beta blocks."""

    lower: Array
    upper: Array
    p_alpha: int

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=np.float64).ravel()
        hi = np.asarray(self.upper, dtype=np.float64).ravel()
        if lo.shape != hi.shape:
            raise ValueError("lower and upper must have the same length")
        if not np.all(lo < hi):
            raise ValueError(f"box needs lower < upper componentwise, got {lo} / {hi}")
        if not 0 < self.p_alpha < lo.size:
            raise ValueError("p_alpha must split the box into two non-empty blocks")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def p_beta(self) -> int:
        return self.dim - self.p_alpha

    def contains(self, theta, atol: float = 0.0) -> bool:
        v = np.asarray(theta, dtype=np.float64)
        return bool(np.all(v >= self.lower - atol) and np.all(v <= self.upper + atol))

    def clip(self, theta) -> Array:
        return np.clip(np.asarray(theta, dtype=np.float64), self.lower, self.upper)

    def on_boundary(self, theta, rtol: float = 1e-9) -> bool:
        v = np.asarray(theta, dtype=np.float64)
        tol = rtol * (self.upper - self.lower)
        return bool(np.any(v <= self.lower + tol) or np.any(v >= self.upper - tol))

    def scale(self, unit) -> Array:
        """Map points of the unit cube onto the box."""
        return self.lower + np.asarray(unit) * (self.upper - self.lower)

    @classmethod
    def parse(cls, text: str, p_alpha: int) -> "ParamBox":
        """Parse ``"lo:hi,lo:hi,..."``."""
        pairs = [seg.split(":") for seg in text.split(",") if seg.strip()]
        lo = [float(a) for a, _ in pairs]
        hi = [float(b) for _, b in pairs]
        return cls(np.array(lo), np.array(hi), p_alpha)

    def to_string(self) -> str:
        return ",".join(f"{a:g}:{b:g}" for a, b in zip(self.lower, self.upper))


@dataclass(frozen=True)
class ThetaPoint:
    alpha: Array
    beta: Array

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.atleast_1d(np.asarray(self.alpha, dtype=np.float64)))
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=np.float64)))

    @property
    def stacked(self) -> Array:
        return np.concatenate([self.alpha, self.beta])

    @classmethod
    def from_vector(cls, vec, p_alpha: int) -> "ThetaPoint":
        v = np.asarray(vec, dtype=np.float64).ravel()
        return cls(v[:p_alpha].copy(), v[p_alpha:].copy())

    @classmethod
    def parse(cls, text: str, p_alpha: int) -> "ThetaPoint":
        return cls.from_vector([float(s) for s in text.split(",")], p_alpha)

    def __repr__(self) -> str:
        return f"ThetaPoint(alpha={self.alpha.tolist()}, beta={self.beta.tolist()})"


@dataclass(frozen=True)
class ModelSpec:
    dim_x: int
    dim_w: int
    dim_j: int
    dim_alpha: int
    dim_beta: int
    drift: Callable
    diff: Callable
    jump_coef: Callable
    param_box: ParamBox
    drift_dalpha: Optional[Callable] = None
    dbeta_V: Optional[Callable] = None
    drift_dalpha2: Optional[Callable] = None
    dbeta2_V: Optional[Callable] = None
    name: str = "user"
    param_names: tuple = ()
    # numba kernel coef(x, alpha, beta, a_out, b_out, c_out) for the Euler loop
    nb_coefs: Optional[Callable] = None
    fd_flags: frozenset = field(default=frozenset(), init=False)

    def __post_init__(self):
        if self.dim_x < 1 or self.dim_j < 1 or self.dim_w < 0:
            raise ValueError("need dim_x >= 1, dim_j >= 1, dim_w >= 0")
        if self.dim_alpha < 1 or self.dim_beta < 1:
            raise ValueError("need dim_alpha >= 1 and dim_beta >= 1")
        if self.param_box.p_alpha != self.dim_alpha or self.param_box.p_beta != self.dim_beta:
            raise ValueError("param_box does not match (dim_alpha, dim_beta)")
        flags = set()
        if self.drift_dalpha is None:
            flags.add("drift_dalpha")
        if self.dbeta_V is None:
            flags.add("dbeta_V")
        if self.drift_dalpha2 is None:
            flags.add("drift_dalpha2")
        if self.dbeta2_V is None:
            flags.add("dbeta2_V")
        object.__setattr__(self, "fd_flags", frozenset(flags))
        if not self.param_names:
            names = tuple(f"alpha{i + 1}" for i in range(self.dim_alpha)) + tuple(
                f"beta{i + 1}" for i in range(self.dim_beta)
            )
            if self.dim_alpha == 1 and self.dim_beta == 1:
                names = ("alpha", "beta")
            object.__setattr__(self, "param_names", names)

    @property
    def p(self) -> int:
        return self.dim_alpha + self.dim_beta

    def theta(self, vec) -> ThetaPoint:
        return ThetaPoint.from_vector(vec, self.dim_alpha)

    # -- derivative evaluation (analytic or finite-differenced) ------------

    def dalpha(self, x: Array, alpha: Array) -> Array:
        if self.drift_dalpha is not None:
            return self.drift_dalpha(x, alpha)
        cols = []
        for k in range(self.dim_alpha):
            e = np.zeros_like(alpha)
            e[k] = _fd_step(alpha[k])
            cols.append((self.drift(x, alpha + e) - self.drift(x, alpha - e)) / (2 * e[k]))
        return np.stack(cols, axis=-1)

    def dalpha2(self, x: Array, alpha: Array) -> Array:
        if self.drift_dalpha2 is not None:
            return self.drift_dalpha2(x, alpha)
        cols = []
        for k in range(self.dim_alpha):
            e = np.zeros_like(alpha)
            e[k] = _fd_step(alpha[k])
            cols.append((self.dalpha(x, alpha + e) - self.dalpha(x, alpha - e)) / (2 * e[k]))
        return np.stack(cols, axis=-1)

    def dV(self, x: Array, beta: Array) -> Array:
        if self.dbeta_V is not None:
            return self.dbeta_V(x, beta)
        cols = []
        for k in range(self.dim_beta):
            e = np.zeros_like(beta)
            e[k] = _fd_step(beta[k])
            cols.append((_V(self, x, beta + e) - _V(self, x, beta - e)) / (2 * e[k]))
        return np.stack(cols, axis=1)

    def dV2(self, x: Array, beta: Array) -> Array:
        if self.dbeta2_V is not None:
            return self.dbeta2_V(x, beta)
        cols = []
        for k in range(self.dim_beta):
            e = np.zeros_like(beta)
            e[k] = _fd_step(beta[k])
            cols.append((self.dV(x, beta + e) - self.dV(x, beta - e)) / (2 * e[k]))
        return np.stack(cols, axis=2)


def _as_states(x, d: int) -> tuple[Array, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim <= 1
    return x.reshape(-1, d), single


def _V(model: ModelSpec, x2: Array, beta: Array) -> Array:
    c = model.jump_coef(x2, beta)
    V = np.einsum("nir,njr->nij", c, c)
    if model.dim_w:
        b = model.diff(x2, beta)
        V = V + np.einsum("nir,njr->nij", b, b)
    return 0.5 * (V + np.swapaxes(V, -1, -2))


def eval_V(model: ModelSpec, x, beta) -> Array:
    """V(x, beta) = b b^T + c c^T for one state (d,) or a batch (n, d)."""
    x2, single = _as_states(x, model.dim_x)
    V = _V(model, x2, np.asarray(beta, dtype=np.float64))
    return V[0] if single else V


def inv_logdet(V: Array) -> tuple[Array, Array]:
    """Batched inverse and log-determinant of SPD matrices via Cholesky."""
    V = np.asarray(V, dtype=np.float64)
    if V.shape[-1] == 1:
        v = V[..., 0, 0]
        if not np.all(v > 0.0) or not np.all(np.isfinite(v)):
            raise NonPositiveDefinite("V(x, beta) is not positive definite at some state")
        return (1.0 / v)[..., None, None], np.log(v)
    try:
        L = np.linalg.cholesky(V)
    except np.linalg.LinAlgError as exc:
        raise NonPositiveDefinite("V(x, beta) is not positive definite at some state") from exc
    logdet = 2.0 * np.sum(np.log(np.diagonal(L, axis1=-2, axis2=-1)), axis=-1)
    eye = np.broadcast_to(np.eye(V.shape[-1]), V.shape)
    Linv = np.linalg.solve(L, eye)
    Vi = np.swapaxes(Linv, -1, -2) @ Linv
    return 0.5 * (Vi + np.swapaxes(Vi, -1, -2)), logdet


def eval_V_inverse_and_logdet(model: ModelSpec, x, beta) -> tuple[Array, Array]:
    V = eval_V(model, x, beta)
    return inv_logdet(V)


def check_model(model: ModelSpec, n_probes: int = 20, seed: int = 0, x_scale: float = 3.0, rtol: float = 1e-5) -> dict:
    """Probe symmetry, positive definiteness and derivative consistency.

    Draws ``n_probes`` random (x, theta) pairs, states from N(0, x_scale^2)
    and parameters uniformly inside the box.  Returns the worst observed
    discrepancies and a boolean ``ok``.
    """
    rng = np.random.default_rng(seed)
    x = rng.normal(scale=x_scale, size=(n_probes, model.dim_x))
    thetas = model.param_box.scale(rng.uniform(0.05, 0.95, size=(n_probes, model.p)))
    worst = {"asymmetry": 0.0, "min_eig": math.inf, "dalpha": 0.0, "dbeta_V": 0.0}

    def rel(a, b):
        return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))

    for i in range(n_probes):
        th = model.theta(thetas[i])
        xi = x[i : i + 1]
        V = eval_V(model, xi, th.beta)[0]
        worst["asymmetry"] = max(worst["asymmetry"], float(np.max(np.abs(V - V.T)) / max(1e-300, np.max(np.abs(V)))))
        worst["min_eig"] = min(worst["min_eig"], float(np.linalg.eigvalsh(V)[0]))
        if model.drift_dalpha is not None:
            fd = np.stack(
                [
                    (model.drift(xi, th.alpha + e) - model.drift(xi, th.alpha - e)) / (2 * e[k])
                    for k, e in enumerate(np.diag([_fd_step(a) for a in th.alpha]))
                ],
                axis=-1,
            )
            worst["dalpha"] = max(worst["dalpha"], rel(fd, model.drift_dalpha(xi, th.alpha)))
        if model.dbeta_V is not None:
            fd = np.stack(
                [
                    (eval_V(model, xi, th.beta + e) - eval_V(model, xi, th.beta - e)) / (2 * e[k])
                    for k, e in enumerate(np.diag([_fd_step(b) for b in th.beta]))
                ],
                axis=1,
            )
            worst["dbeta_V"] = max(worst["dbeta_V"], rel(fd, model.dbeta_V(xi, th.beta)))
    worst["ok"] = (
        worst["asymmetry"] < 1e-12 and worst["min_eig"] > 0 and worst["dalpha"] < rtol and worst["dbeta_V"] < rtol
    )
    return worst


# --------------------------------------------------------------------------
# built-in models
# --------------------------------------------------------------------------

def _hyp_drift(x, alpha):
    return -alpha[0] * x / np.sqrt(1.0 + x * x)


def _hyp_dalpha(x, alpha):
    return (-x / np.sqrt(1.0 + x * x))[..., None]


def _zeros_dalpha2(x, alpha):
    return np.zeros(x.shape + (alpha.size, alpha.size))


def _sqrt_beta_col(x, beta):
    return np.full(x.shape + (1,), math.sqrt(beta[0]))


def _no_wiener(x, beta):
    return np.zeros(x.shape + (0,))


def _zero_col(x, beta):
    return np.zeros(x.shape + (1,))


def _unit_dV(x, beta):
    return np.ones((x.shape[0], 1, 1, 1))


def _zero_dV2(x, beta):
    return np.zeros((x.shape[0], beta.size, beta.size, 1, 1))


def _lin_drift(x, alpha):
    return -alpha[0] * x


def _lin_dalpha(x, alpha):
    return (-x)[..., None]


@njit(cache=True)
def _nb_hyp_jump(x, alpha, beta, a, b, c):
    a[0] = -alpha[0] * x[0] / math.sqrt(1.0 + x[0] * x[0])
    c[0, 0] = math.sqrt(beta[0])


@njit(cache=True)
def _nb_hyp_diffusion(x, alpha, beta, a, b, c):
    a[0] = -alpha[0] * x[0] / math.sqrt(1.0 + x[0] * x[0])
    b[0, 0] = math.sqrt(beta[0])
    c[0, 0] = 0.0


@njit(cache=True)
def _nb_ou_levy(x, alpha, beta, a, b, c):
    a[0] = -alpha[0] * x[0]
    b[0, 0] = beta[0]
    c[0, 0] = beta[1]


@njit(cache=True)
def _nb_ou_jump(x, alpha, beta, a, b, c):
    a[0] = -alpha[0] * x[0]
    c[0, 0] = math.sqrt(beta[0])


def _nb(fn):
    return fn if HAVE_NUMBA else None


def nig_hyperbolic(box: Optional[ParamBox] = None) -> ModelSpec:
    """dX = -alpha X / sqrt(1 + X^2) dt + sqrt(beta) dJ  (pure jump)."""
    return ModelSpec(
        dim_x=1, dim_w=0, dim_j=1, dim_alpha=1, dim_beta=1,
        drift=_hyp_drift, diff=_no_wiener, jump_coef=_sqrt_beta_col,
        drift_dalpha=_hyp_dalpha, dbeta_V=_unit_dV,
        drift_dalpha2=_zeros_dalpha2, dbeta2_V=_zero_dV2,
        param_box=box or ParamBox(np.array([0.1, 0.1]), np.array([5.0, 5.0]), 1),
        name="nig-hyperbolic", nb_coefs=_nb(_nb_hyp_jump),
    )


def diffusion_hyperbolic(box: Optional[ParamBox] = None) -> ModelSpec:
    """Hyperbolic diffusion: same drift, b = sqrt(beta), c = 0."""
    return ModelSpec(
        dim_x=1, dim_w=1, dim_j=1, dim_alpha=1, dim_beta=1,
        drift=_hyp_drift, diff=_sqrt_beta_col, jump_coef=_zero_col,
        drift_dalpha=_hyp_dalpha, dbeta_V=_unit_dV,
        drift_dalpha2=_zeros_dalpha2, dbeta2_V=_zero_dV2,
        param_box=box or ParamBox(np.array([0.1, 0.1]), np.array([5.0, 5.0]), 1),
        name="diffusion-hyperbolic", nb_coefs=_nb(_nb_hyp_diffusion),
    )


def _ou_levy_diff(x, beta):
    return np.full(x.shape + (1,), beta[0])


def _ou_levy_jump(x, beta):
    return np.full(x.shape + (1,), beta[1])


def _ou_levy_dV(x, beta):
    out = np.empty((x.shape[0], 2, 1, 1))
    out[:, 0] = 2.0 * beta[0]
    out[:, 1] = 2.0 * beta[1]
    return out


def _ou_levy_dV2(x, beta):
    out = np.zeros((x.shape[0], 2, 2, 1, 1))
    out[:, 0, 0] = 2.0
    out[:, 1, 1] = 2.0
    return out


def ou_levy(box: Optional[ParamBox] = None) -> ModelSpec:
    """dX = -alpha X dt + beta1 dW + beta2 dJ.

    Constant b and c make (beta1, beta2) non-identifiable by the Gaussian
    quasi-likelihood: only beta1^2 + beta2^2 is estimable.
    """
    return ModelSpec(
        dim_x=1, dim_w=1, dim_j=1, dim_alpha=1, dim_beta=2,
        drift=_lin_drift, diff=_ou_levy_diff, jump_coef=_ou_levy_jump,
        drift_dalpha=_lin_dalpha, dbeta_V=_ou_levy_dV,
        drift_dalpha2=_zeros_dalpha2, dbeta2_V=_ou_levy_dV2,
        param_box=box or ParamBox(np.array([0.1, 0.1, 0.1]), np.array([5.0, 5.0, 5.0]), 1),
        name="ou-levy", param_names=("alpha", "beta1", "beta2"), nb_coefs=_nb(_nb_ou_levy),
    )


def ou_jump(box: Optional[ParamBox] = None) -> ModelSpec:
    """dX = -alpha X dt + sqrt(beta) dJ."""
    return ModelSpec(
        dim_x=1, dim_w=0, dim_j=1, dim_alpha=1, dim_beta=1,
        drift=_lin_drift, diff=_no_wiener, jump_coef=_sqrt_beta_col,
        drift_dalpha=_lin_dalpha, dbeta_V=_unit_dV,
        drift_dalpha2=_zeros_dalpha2, dbeta2_V=_zero_dV2,
        param_box=box or ParamBox(np.array([0.1, 0.1]), np.array([5.0, 5.0]), 1),
        name="ou-jump", nb_coefs=_nb(_nb_ou_jump),
    )


_REGISTRY: dict[str, Callable[..., ModelSpec]] = {
    "nig-hyperbolic": nig_hyperbolic,
    "diffusion-hyperbolic": diffusion_hyperbolic,
    "ou-levy": ou_levy,
    "ou-jump": ou_jump,
}


def register_model(name: str, factory: Callable[..., ModelSpec]) -> None:
    """Make a user model selectable by string id (e.g. from the CLI)."""
    _REGISTRY[name] = factory


def available_models() -> list[str]:
    return sorted(_REGISTRY)


def get_model(name: str, box: Optional[ParamBox] = None) -> ModelSpec:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; choose from {available_models()}") from None
    return factory(box)
