"""Plug-in asymptotic covariance, Studentization and confidence intervals.

The estimator uses only the data and the fitted parameter: the third and
fourth moments of the Levy measure enter through products of residuals, so
no knowledge of the jump law is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from ._kernels import colsum
from .errors import SingularInformation
from .gql import _Terms
from .model import ModelSpec, ThetaPoint
from .simulate import Observations

COND_LIMIT = 1e12
EIG_FLOOR = 1e-12


@dataclass(frozen=True)
class SigmaHat:
    g_prime_alpha_hat: np.ndarray
    g_prime_beta_hat: np.ndarray
    v_alpha_beta_hat: np.ndarray
    v_beta_beta_hat: np.ndarray
    sigma_hat: np.ndarray

    def standard_errors(self, T: float) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.sigma_hat), 0.0, None) / T)


def _checked_inverse(mat: np.ndarray, label: str) -> np.ndarray:
    cond = np.linalg.cond(mat)
    if not math.isfinite(cond) or cond > COND_LIMIT:
        raise SingularInformation(f"{label} is numerically singular (condition number {cond:.3g})")
    return np.linalg.inv(mat)


def _assert_nsd(mat: np.ndarray, label: str) -> None:
    sym = 0.5 * (mat + mat.T)
    top = float(np.linalg.eigvalsh(sym)[-1])
    scale = max(1.0, float(np.max(np.abs(sym))))
    if top > 1e-10 * scale:
        raise AssertionError(f"{label} should be negative semidefinite, largest eigenvalue {top:.3g}")


def assemble_sigma(g_alpha: np.ndarray, g_beta: np.ndarray, v_ab: np.ndarray, v_bb: np.ndarray) -> np.ndarray:
    """Block matrix [[(-Ga)^-1, Ga^-1 Vab Gb^-1], [sym, Gb^-1 Vbb Gb^-1]], symmetrized."""
    ia = _checked_inverse(g_alpha, "alpha information")
    ib = _checked_inverse(g_beta, "beta information")
    pa, pb = g_alpha.shape[0], g_beta.shape[0]
    sig = np.empty((pa + pb, pa + pb))
    sig[:pa, :pa] = -ia
    sig[:pa, pa:] = ia @ v_ab @ ib
    sig[pa:, :pa] = sig[:pa, pa:].T
    sig[pa:, pa:] = ib @ v_bb @ ib
    return 0.5 * (sig + sig.T)


def estimate_sigma(obs: Observations, model: ModelSpec, theta_hat: ThetaPoint) -> SigmaHat:
    """Plug-in estimate of the asymptotic covariance of sqrt(T)(theta_hat - theta0)."""
    t = _Terms(obs, model, theta_hat)
    n, T = obs.n, obs.T
    A, Vi, chi, Vchi, ViD = t.A, t.Vi, t.chi, t.Vi_chi, t.ViD
    ViA = np.einsum("nij,njp->nip", Vi, A)
    g_alpha = -colsum(np.einsum("ndl,ndm->nlm", A, ViA)).reshape(model.dim_alpha, model.dim_alpha) / n
    g_beta = -colsum(np.einsum("nkij,nmji->nkm", ViD, ViD)).reshape(model.dim_beta, model.dim_beta) / n
    _assert_nsd(g_alpha, "alpha information estimate")
    _assert_nsd(g_beta, "beta information estimate")

    lin = np.einsum("ndl,nd->nl", A, Vchi)  # (V^-1 chi) . d_alpha a
    quad = np.einsum("ni,nkij,nj->nk", Vchi, t.D, Vchi)  # chi^T V^-1 D_k V^-1 chi = -(d_beta V^-1)[chi, chi]
    v_ab = colsum(np.einsum("nl,nk->nlk", lin, quad)).reshape(model.dim_alpha, model.dim_beta) / T
    v_bb = colsum(np.einsum("nk,nm->nkm", quad, quad)).reshape(model.dim_beta, model.dim_beta) / T
    sigma = assemble_sigma(g_alpha, g_beta, v_ab, v_bb)
    return SigmaHat(g_alpha, g_beta, v_ab, v_bb, sigma)


def inverse_sqrt(sigma: np.ndarray) -> np.ndarray:
    """Symmetric inverse square root with eigenvalue floor 1e-12 * largest eigenvalue."""
    sym = 0.5 * (sigma + sigma.T)
    w, U = np.linalg.eigh(sym)
    top = float(w[-1])
    if not top > 0:
        raise SingularInformation("covariance matrix has no positive eigenvalue")
    if float(w[0]) <= 0 or top / float(w[0]) > COND_LIMIT:
        raise SingularInformation(f"covariance matrix is numerically singular (eigenvalues {w[0]:.3g}..{top:.3g})")
    w = np.maximum(w, EIG_FLOOR * top)
    return (U / np.sqrt(w)) @ U.T


def studentize(obs: Observations, theta_hat: ThetaPoint, sigma_hat, theta_ref) -> np.ndarray:
    """Sigma_hat^{-1/2} sqrt(T) (theta_hat - theta_ref)."""
    sig = sigma_hat.sigma_hat if isinstance(sigma_hat, SigmaHat) else np.asarray(sigma_hat, dtype=np.float64)
    ref = theta_ref.stacked if isinstance(theta_ref, ThetaPoint) else np.asarray(theta_ref, dtype=np.float64)
    return inverse_sqrt(sig) @ (math.sqrt(obs.T) * (theta_hat.stacked - ref))


def confidence_intervals(theta_hat: ThetaPoint, sigma_hat, T: float, level: float = 0.95) -> np.ndarray:
    """Rows (lower, upper) per coordinate: theta_i +- z * sqrt(Sigma_ii / T)."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie strictly between 0 and 1")
    sig = sigma_hat.sigma_hat if isinstance(sigma_hat, SigmaHat) else np.asarray(sigma_hat, dtype=np.float64)
    z = norm.ppf(0.5 * (1.0 + level))
    half = z * np.sqrt(np.clip(np.diag(sig), 0.0, None) / T)
    center = theta_hat.stacked
    return np.column_stack([center - half, center + half])
