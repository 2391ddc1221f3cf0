"""Gaussian quasi-likelihood, quasi-score, contrast and random field.

For observations X_{t_0}, ..., X_{t_n} with steps dt_j and residuals

    chi_j(alpha) = X_{t_j} - X_{t_{j-1}} - dt_j * a(X_{t_{j-1}}, alpha)

the quasi-log-likelihood is

    Q_n(theta) = -sum_j { log|V_{j-1}(beta)| + V_{j-1}(beta)^{-1}[chi_j^2] / dt_j }

and the quasi-score G_n = (G^alpha, G^beta) satisfies G^alpha = dQ/dalpha / 2
and G^beta = h dQ/dbeta on equidistant grids.  All per-observation terms
are vectorized; sums over observations are compensated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import colsum
from .errors import DomainExceeded
from .model import ModelSpec, ThetaPoint, _V, inv_logdet
from .simulate import Observations


@dataclass(frozen=True)
class ScoreValue:
    g_alpha: np.ndarray
    g_beta: np.ndarray

    @property
    def stacked(self) -> np.ndarray:
        return np.concatenate([self.g_alpha, self.g_beta])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.stacked))


@dataclass(frozen=True)
class ContrastValue:
    m: float
    score: ScoreValue
    q: float


class _Terms:
    """Per-observation ingredients at one parameter value."""

    def __init__(self, obs: Observations, model: ModelSpec, theta: ThetaPoint):
        if obs.dim != model.dim_x:
            raise ValueError(f"observations have dimension {obs.dim}, model expects {model.dim_x}")
        self.obs, self.model, self.theta = obs, model, theta
        x = obs.states[:-1]
        self.x = x
        self.dt = obs.steps
        self.a = model.drift(x, theta.alpha)
        self.chi = np.diff(obs.states, axis=0) - self.dt[:, None] * self.a
        self.Vi, self.logdet = inv_logdet(_V(model, x, theta.beta))
        self.Vi_chi = np.einsum("nij,nj->ni", self.Vi, self.chi)

    @property
    def A(self):  # d a / d alpha, (n, d, p_alpha)
        if not hasattr(self, "_A"):
            self._A = self.model.dalpha(self.x, self.theta.alpha)
        return self._A

    @property
    def D(self):  # d V / d beta, (n, p_beta, d, d)
        if not hasattr(self, "_D"):
            self._D = self.model.dV(self.x, self.theta.beta)
        return self._D

    @property
    def ViD(self):  # V^{-1} dV, (n, p_beta, d, d)
        if not hasattr(self, "_ViD"):
            self._ViD = np.einsum("nij,nkjl->nkil", self.Vi, self.D)
        return self._ViD

    def q_terms(self):
        quad = np.einsum("ni,ni->n", self.chi, self.Vi_chi)
        return -(self.logdet + quad / self.dt)

    def g_alpha_terms(self):
        return np.einsum("ndp,nd->np", self.A, self.Vi_chi)

    def g_beta_terms(self):
        quad = np.einsum("ni,nkij,nj->nk", self.Vi_chi, self.D, self.Vi_chi)
        tr = np.einsum("nkii->nk", self.ViD)
        return quad - self.dt[:, None] * tr

    def score(self) -> ScoreValue:
        return ScoreValue(np.atleast_1d(colsum(self.g_alpha_terms())), np.atleast_1d(colsum(self.g_beta_terms())))


def residual_chi(obs: Observations, j: int, alpha, model: ModelSpec) -> np.ndarray:
    """chi_j(alpha) for 1 <= j <= n."""
    if not 1 <= j <= obs.n:
        raise IndexError(f"j must lie in [1, {obs.n}], got {j}")
    x_prev = obs.states[j - 1 : j]
    dt = obs.times[j] - obs.times[j - 1]
    return obs.states[j] - obs.states[j - 1] - dt * model.drift(x_prev, np.asarray(alpha, dtype=np.float64))[0]


def residuals(obs: Observations, model: ModelSpec, alpha) -> np.ndarray:
    """All residuals chi_1..chi_n as an (n, d) array."""
    x = obs.states[:-1]
    return np.diff(obs.states, axis=0) - obs.steps[:, None] * model.drift(x, np.asarray(alpha, dtype=np.float64))


def quasi_loglik(obs: Observations, model: ModelSpec, theta: ThetaPoint) -> float:
    return float(colsum(_Terms(obs, model, theta).q_terms()))


def quasi_score(obs: Observations, model: ModelSpec, theta: ThetaPoint) -> ScoreValue:
    return _Terms(obs, model, theta).score()


def contrast(obs: Observations, model: ModelSpec, theta: ThetaPoint, with_q: bool = True) -> ContrastValue:
    """M_n(theta) = -|G_n(theta)|^2 / T_n, together with G_n and Q_n."""
    terms = _Terms(obs, model, theta)
    score = terms.score()
    g = score.stacked
    m = -float(g @ g) / obs.T
    q = float(colsum(terms.q_terms())) if with_q else float("nan")
    return ContrastValue(m, score, q)


def random_field_Z(obs: Observations, model: ModelSpec, theta0: ThetaPoint, u) -> float:
    """Z_n(u) = exp{M_n(theta0 + u / sqrt(T_n)) - M_n(theta0)}."""
    u = np.asarray(u, dtype=np.float64).ravel()
    base = theta0.stacked
    if u.size != base.size:
        raise ValueError(f"u must have length {base.size}")
    shifted = base + u / np.sqrt(obs.T)
    if not model.param_box.contains(shifted):
        raise DomainExceeded(f"theta0 + u/sqrt(T) = {shifted} leaves the parameter box")
    m0 = contrast(obs, model, theta0, with_q=False).m
    m1 = contrast(obs, model, model.theta(shifted), with_q=False).m
    return float(np.exp(m1 - m0))


def score_jacobian(obs: Observations, model: ModelSpec, theta: ThetaPoint) -> np.ndarray:
    """d G_n / d theta as a p x p matrix (row = score component)."""
    t = _Terms(obs, model, theta)
    pa = model.dim_alpha
    A, Vi, chi, Vchi, D, dt = t.A, t.Vi, t.chi, t.Vi_chi, t.D, t.dt
    A2 = model.dalpha2(t.x, theta.alpha)  # (n, d, pa, pa)
    D2 = model.dV2(t.x, theta.beta)  # (n, pb, pb, d, d)
    ViA = np.einsum("nij,njp->nip", Vi, A)

    # alpha-alpha: sum (d2a)^T V^-1 chi - dt A^T V^-1 A
    aa = np.einsum("ndlm,nd->nlm", A2, Vchi) - dt[:, None, None] * np.einsum("ndl,ndm->nlm", A, ViA)
    # d/dbeta_k of G^alpha_l = -A_l^T V^-1 D_k V^-1 chi
    ab = -np.einsum("nil,nkij,nj->nlk", ViA, D, Vchi)
    # d/dalpha_m of G^beta_k = -2 dt A_m^T V^-1 D_k V^-1 chi
    ba = -2.0 * dt[:, None, None] * np.einsum("nim,nkij,nj->nkm", ViA, D, Vchi)
    # d/dbeta_m of G^beta_k
    ViD = t.ViD
    P = np.einsum("nkij,njl->nkil", ViD, Vi)  # V^-1 D_k V^-1
    dP = (
        -np.einsum("nmij,nkjl->nkmil", ViD, P)
        + np.einsum("nij,nkmjl,nlo->nkmio", Vi, D2, Vi)
        - np.einsum("nkij,nmjl->nkmil", P, np.einsum("nmij,njl->nmil", D, Vi))
    )
    quad = np.einsum("ni,nkmij,nj->nkm", chi, dP, chi)
    dtr = -np.einsum("nmij,nkji->nkm", ViD, ViD) + np.einsum("nij,nkmji->nkm", Vi, D2)
    bb = quad - dt[:, None, None] * dtr

    p = model.p
    J = np.empty((p, p))
    J[:pa, :pa] = colsum(aa)
    J[:pa, pa:] = colsum(ab)
    J[pa:, :pa] = colsum(ba)
    J[pa:, pa:] = colsum(bb)
    return J
