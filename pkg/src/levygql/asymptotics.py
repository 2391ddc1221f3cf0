"""Limit objects by ergodic averaging, identifiability scans and drift screens.

Integrals against the stationary law pi0 are replaced by averages along one
long simulated path at theta0.  Jump moments nu(3), nu(4) come from the
driver in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .avar import assemble_sigma
from .errors import Unsupported
from .levy import LevyDriver, NuMoments, nu_moments
from .model import ModelSpec, ThetaPoint, _V, inv_logdet
from .simulate import simulate_observations


@dataclass
class LimitReport:
    g_inf_prime_alpha: np.ndarray
    g_inf_prime_beta: np.ndarray
    v_alpha_beta: np.ndarray
    v_beta_beta: np.ndarray
    sigma0: np.ndarray
    averaging_T: float
    nu_moments_used: NuMoments
    pi0: np.ndarray = field(repr=False, default=None)

    def as_dict(self) -> dict:
        return {
            "g_inf_prime_alpha": self.g_inf_prime_alpha.tolist(),
            "g_inf_prime_beta": self.g_inf_prime_beta.tolist(),
            "v_alpha_beta": self.v_alpha_beta.tolist(),
            "v_beta_beta": self.v_beta_beta.tolist(),
            "sigma0": self.sigma0.tolist(),
            "averaging_T": self.averaging_T,
            "nu3": self.nu_moments_used.nu3.tolist(),
            "nu4": self.nu_moments_used.nu4.tolist(),
            "pi0_size": 0 if self.pi0 is None else int(self.pi0.shape[0]),
        }


def stationary_sample(
    model: ModelSpec,
    theta0: ThetaPoint,
    driver: LevyDriver,
    averaging_T: float = 5000.0,
    h_avg: float = 0.01,
    seed: int = 0,
    burn: float = 50.0,
    fine_div: int = 10,
    key: int = 0,
) -> np.ndarray:
    """States of one long path after burn-in, used as a sample from pi0."""
    obs = simulate_observations(model, theta0, driver, averaging_T, h_avg, seed=seed, key=key, fine_div=fine_div, burn=burn)
    return obs.states


def limit_blocks(model: ModelSpec, theta0: ThetaPoint, x: np.ndarray, moments: NuMoments):
    """Averages over states ``x`` of the integrands of G'_alpha, G'_beta, V_ab, V_bb."""
    x = np.asarray(x, dtype=np.float64).reshape(-1, model.dim_x)
    alpha, beta = theta0.alpha, theta0.beta
    Vi, _ = inv_logdet(_V(model, x, beta))
    A = model.dalpha(x, alpha)
    D = model.dV(x, beta)
    c = model.jump_coef(x, beta)
    ViD = np.einsum("nij,nkjl->nkil", Vi, D)
    P = np.einsum("nkij,njl->nkil", ViD, Vi)  # V^-1 D_k V^-1 = -d_beta_k V^-1
    ViA = np.einsum("nij,njp->nip", Vi, A)

    g_alpha = -np.mean(np.einsum("ndl,ndm->nlm", A, ViA), axis=0)
    g_beta = -np.mean(np.einsum("nkij,nmji->nkm", ViD, ViD), axis=0)
    Ac = np.einsum("ndl,nds->nls", ViA, c)  # V^-1[d_alpha a, c_s]
    cPc = np.einsum("nir,nkij,njs->nkrs", c, P, c)  # -(d_beta V^-1)[c_r, c_s]
    # V_ab = -int nu3 V^-1[A, c_s'] (d V^-1)[c_k', c_l'] = +int nu3 Ac cPc
    v_ab = np.mean(np.einsum("abs,nls,nkab->nlk", moments.nu3, Ac, cPc), axis=0)
    v_bb = np.mean(np.einsum("stuv,nkst,nmuv->nkm", moments.nu4, cPc, cPc), axis=0)
    return g_alpha, g_beta, v_ab, v_bb


def population_limits(
    model: ModelSpec,
    theta0: ThetaPoint,
    driver: LevyDriver,
    averaging_T: float = 5000.0,
    h_avg: float = 0.01,
    seed: int = 0,
    burn: float = 50.0,
    fine_div: int = 10,
    pi0: Optional[np.ndarray] = None,
) -> LimitReport:
    """G'_inf, V(theta0) blocks and Sigma0 from a long-path ergodic average.

    Pass ``pi0`` to reuse an existing stationary sample instead of simulating.
    """
    moments = nu_moments(driver)
    if pi0 is None:
        pi0 = stationary_sample(model, theta0, driver, averaging_T, h_avg, seed, burn, fine_div)
    g_alpha, g_beta, v_ab, v_bb = limit_blocks(model, theta0, pi0, moments)
    sigma0 = assemble_sigma(g_alpha, g_beta, v_ab, v_bb)
    return LimitReport(g_alpha, g_beta, v_ab, v_bb, sigma0, float(averaging_T), moments, pi0)


def g_infinity(model: ModelSpec, theta: ThetaPoint, theta0: ThetaPoint, pi0: np.ndarray) -> np.ndarray:
    """Limit of the normalized quasi-score T^-1 G_n(theta) under theta0."""
    x = np.asarray(pi0, dtype=np.float64).reshape(-1, model.dim_x)
    Vi, _ = inv_logdet(_V(model, x, theta.beta))
    A = model.dalpha(x, theta.alpha)
    da = model.drift(x, theta0.alpha) - model.drift(x, theta.alpha)
    ga = np.mean(np.einsum("ndl,nde,ne->nl", A, Vi, da), axis=0)
    P = np.einsum("nij,nkjl,nlm->nkim", Vi, model.dV(x, theta.beta), Vi)
    dV = _V(model, x, theta0.beta) - _V(model, x, theta.beta)
    gb = np.mean(np.einsum("nkij,nij->nk", P, dV), axis=0)
    return np.concatenate([ga, gb])


def _thin(x: np.ndarray, max_points: int) -> np.ndarray:
    stride = max(1, int(math.ceil(x.shape[0] / max_points)))
    return x[::stride]


def identifiability_scan(model: ModelSpec, theta_grid, pi0_path: np.ndarray, max_points: int = 20000) -> list[dict]:
    """Smallest singular values of A-bar and B-bar for every ordered pair of grid points.

    A-bar(a', a'', b') = avg V^-1(b')[d_alpha a(a'), d_alpha a(a'')] and
    B-bar(b', b'') = avg trace{(V^-1 dV V^-1)(b') dV(b'')}.  A value near 0
    flags loss of identifiability.
    """
    x = _thin(np.asarray(pi0_path, dtype=np.float64).reshape(-1, model.dim_x), max_points)
    pts = [model.theta(v) for v in np.atleast_2d(np.asarray(theta_grid, dtype=np.float64))]
    cache = {}

    def parts(th: ThetaPoint):
        key = tuple(th.stacked)
        if key not in cache:
            Vi, _ = inv_logdet(_V(model, x, th.beta))
            D = model.dV(x, th.beta)
            P = np.einsum("nij,nkjl,nlm->nkim", Vi, D, Vi)
            cache[key] = (Vi, model.dalpha(x, th.alpha), D, P)
        return cache[key]

    rows = []
    for t1 in pts:
        Vi1, A1, _, P1 = parts(t1)
        for t2 in pts:
            _, A2, D2, _ = parts(t2)
            abar = np.mean(np.einsum("ndl,nde,nem->nlm", A1, Vi1, A2), axis=0)
            bbar = np.mean(np.einsum("nkij,nmji->nkm", P1, D2), axis=0)
            rows.append(
                {
                    "theta1": t1.stacked.tolist(),
                    "theta2": t2.stacked.tolist(),
                    "smin_A": float(np.linalg.svd(abar, compute_uv=False)[-1]),
                    "smin_B": float(np.linalg.svd(bbar, compute_uv=False)[-1]),
                }
            )
    return rows


@dataclass(frozen=True)
class EfficiencyLoss:
    path_average: float
    closed_form: Optional[float]


def efficiency_loss(model: ModelSpec, theta0: ThetaPoint, pi0_path: np.ndarray) -> EfficiencyLoss:
    """Average of (d_alpha a)^2 / b^2 * c^2 / (b^2 + c^2) over the stationary sample.

    Requires scalar state and drift parameter and a non-vanishing Wiener
    coefficient.  For the built-in OU model the closed form
    (1 / (2 alpha0)) (beta2 / beta1)^2 is reported too.
    """
    if model.dim_x != 1 or model.dim_alpha != 1:
        raise Unsupported("efficiency loss is defined for scalar state and drift parameter only")
    if model.dim_w == 0:
        raise Unsupported("efficiency loss needs a Wiener component")
    x = np.asarray(pi0_path, dtype=np.float64).reshape(-1, 1)
    b2 = np.sum(model.diff(x, theta0.beta)[:, 0, :] ** 2, axis=-1)
    c2 = np.sum(model.jump_coef(x, theta0.beta)[:, 0, :] ** 2, axis=-1)
    if np.any(b2 <= 0):
        raise Unsupported("Wiener coefficient vanishes on the stationary sample")
    da = model.dalpha(x, theta0.alpha)[:, 0, 0]
    avg = float(np.mean(da**2 / b2 * c2 / (b2 + c2)))
    closed = None
    if model.name == "ou-levy":
        a0, (b1, bb2) = float(theta0.alpha[0]), theta0.beta
        closed = (1.0 / (2.0 * a0)) * (bb2 / b1) ** 2
    return EfficiencyLoss(avg, closed)


def ou_efficiency_loss(alpha0: float, beta1: float, beta2: float) -> float:
    return (1.0 / (2.0 * alpha0)) * (beta2 / beta1) ** 2


def ergodicity_diagnostics(
    model: ModelSpec,
    theta0: ThetaPoint,
    driver: Optional[LevyDriver] = None,
    x_lo: float = 10.0,
    x_hi: float = 1e4,
    points: int = 200,
    cutoff: float = -1e-3,
) -> dict:
    """Numerical screen of the drift, coefficient and jump conditions for scalar models.

    Checks on a log-spaced grid of |x| in [x_lo, x_hi]:

    * ``drift_ratio``: max a(x)/x over the top decade is below ``cutoff``;
    * ``drift_sign``: max sgn(x) a(x) over the top decade is below ``cutoff``;
    * ``bounded`` and ``lipschitz``: (b, c) and their difference quotients do
      not grow from the bottom to the top of the grid;
    * ``nonvanishing_c``: |c| stays away from zero on the grid.

    Each entry carries the observed value and ``"pass"`` or ``"warn"``.  This
    is a heuristic screen, not a proof.
    """
    if model.dim_x != 1:
        raise Unsupported("ergodicity diagnostics are implemented for scalar models")
    mags = np.geomspace(x_lo, x_hi, points)
    xs = np.concatenate([-mags[::-1], mags])
    x2 = xs[:, None]
    a = model.drift(x2, theta0.alpha)[:, 0]
    top = np.abs(xs) >= x_hi / 10.0
    ratio = float(np.max((a / xs)[top]))
    sign = float(np.max((np.sign(xs) * a)[top]))

    def coef_norm(x):
        c = np.sqrt(np.sum(model.jump_coef(x, theta0.beta)[:, 0, :] ** 2, axis=-1))
        b = np.sqrt(np.sum(model.diff(x, theta0.beta)[:, 0, :] ** 2, axis=-1)) if model.dim_w else np.zeros(x.shape[0])
        return b, c

    b, c = coef_norm(x2)
    bc = np.hypot(b, c)
    low = ~top
    grow = float(np.max(bc[top]) / max(np.max(bc[low]), 1e-300))
    eps = 1e-3 * (1.0 + np.abs(xs))
    bp, cp = coef_norm((xs + eps)[:, None])
    quot = np.hypot(bp - b, cp - c) / eps
    lip_top, lip_low = float(np.max(quot[top])), float(np.max(quot[low]))
    cmin = float(np.min(c))

    def verdict(ok):
        return "pass" if ok else "warn"

    report = {
        "grid": {"x_lo": x_lo, "x_hi": x_hi, "points": points, "cutoff": cutoff},
        "drift_ratio": {"value": ratio, "status": verdict(ratio < cutoff)},
        "drift_sign": {"value": sign, "status": verdict(sign < cutoff)},
        "bounded": {"value": grow, "status": verdict(grow <= 10.0)},
        "lipschitz": {"value": lip_top, "reference": lip_low, "status": verdict(lip_top <= 10.0 * max(lip_low, 1.0))},
        "nonvanishing_c": {"value": cmin, "status": verdict(cmin > 1e-12 * max(1.0, float(np.max(c))))},
    }
    if driver is not None:
        try:
            nu_moments(driver)
            report["moments"] = {"value": driver.label, "status": "pass"}
        except Exception as exc:  # moments only matter for the limit report
            report["moments"] = {"value": str(exc), "status": "warn"}
    return report
