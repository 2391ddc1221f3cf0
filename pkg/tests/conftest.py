from __future__ import annotations

import numpy as np
import pytest

from levygql.model import ModelSpec, ParamBox
from levygql.simulate import Observations


def toy_model(analytic: bool = True) -> ModelSpec:
    """d = 1, a(x, alpha) = -alpha x, V = beta (pure jump, c = sqrt(beta))."""
    kw = {}
    if analytic:
        kw = dict(
            drift_dalpha=lambda x, a: (-x)[..., None],
            dbeta_V=lambda x, b: np.ones((x.shape[0], 1, 1, 1)),
            drift_dalpha2=lambda x, a: np.zeros((x.shape[0], 1, 1, 1)),
            dbeta2_V=lambda x, b: np.zeros((x.shape[0], 1, 1, 1, 1)),
        )
    return ModelSpec(
        dim_x=1, dim_w=0, dim_j=1, dim_alpha=1, dim_beta=1,
        drift=lambda x, a: -a[0] * x,
        diff=lambda x, b: np.zeros((x.shape[0], 1, 0)),
        jump_coef=lambda x, b: np.full((x.shape[0], 1, 1), np.sqrt(b[0])),
        param_box=ParamBox(np.array([0.1, 0.1]), np.array([5.0, 5.0]), 1),
        name="toy", **kw,
    )


def toy_obs() -> Observations:
    return Observations(np.array([0.0, 1.0, 2.0]), np.array([[0.0], [1.0], [0.5]]))


def linear2d_model() -> ModelSpec:
    """Two-dimensional model with two drift and two dispersion parameters and state-dependent V."""

    def drift(x, a):
        return np.column_stack([-a[0] * x[:, 0] + 0.3 * np.sin(x[:, 1]), -a[1] * x[:, 1] / np.sqrt(1 + x[:, 1] ** 2)])

    def diff(x, b):
        out = np.zeros((x.shape[0], 2, 2))
        out[:, 0, 0] = b[0]
        out[:, 1, 1] = b[0] * (1.0 + 0.2 * np.tanh(x[:, 0]))
        out[:, 1, 0] = 0.1 * b[0]
        return out

    def jump(x, b):
        out = np.zeros((x.shape[0], 2, 1))
        out[:, 0, 0] = b[1] * np.sqrt(1.0 + 0.5 * np.cos(x[:, 1]) ** 2)
        out[:, 1, 0] = 0.5 * b[1]
        return out

    return ModelSpec(
        dim_x=2, dim_w=2, dim_j=1, dim_alpha=2, dim_beta=2,
        drift=drift, diff=diff, jump_coef=jump,
        param_box=ParamBox(np.array([0.2, 0.2, 0.2, 0.2]), np.array([3.0, 3.0, 3.0, 3.0]), 2),
        name="lin2d",
    )


@pytest.fixture
def toy():
    return toy_model()


@pytest.fixture
def toy_data():
    return toy_obs()


def sv1d_model() -> ModelSpec:
    """Scalar model with nonlinear drift parameter and state-dependent V, all derivatives analytic.

    a = -alpha1 x + alpha2^2 tanh(x),  V = beta1^2 + beta2^2 g(x),  g = 1 + x^2 / (2 (1 + x^2)).
    """

    def g(x):
        return 1.0 + 0.5 * x**2 / (1.0 + x**2)

    def dalpha(x, a):
        return np.stack([-x, 2 * a[1] * np.tanh(x)], axis=-1)

    def dalpha2(x, a):
        out = np.zeros(x.shape + (2, 2))
        out[..., 1, 1] = 2 * np.tanh(x)
        return out

    def dV(x, b):
        out = np.empty((x.shape[0], 2, 1, 1))
        out[:, 0, 0, 0] = 2 * b[0]
        out[:, 1, 0, 0] = 2 * b[1] * g(x[:, 0])
        return out

    def dV2(x, b):
        out = np.zeros((x.shape[0], 2, 2, 1, 1))
        out[:, 0, 0, 0, 0] = 2.0
        out[:, 1, 1, 0, 0] = 2 * g(x[:, 0])
        return out

    return ModelSpec(
        dim_x=1, dim_w=1, dim_j=1, dim_alpha=2, dim_beta=2,
        drift=lambda x, a: -a[0] * x + a[1] ** 2 * np.tanh(x),
        diff=lambda x, b: np.full((x.shape[0], 1, 1), b[0]),
        jump_coef=lambda x, b: (b[1] * np.sqrt(g(x)))[..., None],
        drift_dalpha=dalpha, dbeta_V=dV, drift_dalpha2=dalpha2, dbeta2_V=dV2,
        param_box=ParamBox(np.array([0.2, 0.1, 0.2, 0.2]), np.array([3.0, 1.5, 3.0, 3.0]), 2),
        name="sv1d",
    )


def random_probe(model: ModelSpec, rng, n: int = 200, h=None, driver=None):
    """Short simulated path at a random interior parameter and a second random parameter to evaluate at."""
    from levygql.levy import LevyDriver
    from levygql.simulate import simulate_observations

    box = model.param_box
    th0 = box.scale(rng.uniform(0.2, 0.8, model.p))
    th = box.scale(rng.uniform(0.1, 0.9, model.p))
    h = h if h is not None else float(rng.choice([0.005, 0.01, 0.05]))
    drv = driver or LevyDriver("nig", delta=float(rng.uniform(1, 20)), dim=model.dim_j)
    obs = simulate_observations(model, model.theta(th0), drv, n * h, h, seed=int(rng.integers(1 << 30)), fine_div=5)
    return obs, model.theta(th)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
