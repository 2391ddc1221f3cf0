from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levygql.errors import NonPositiveDefinite
from levygql.model import (
    ModelSpec,
    ParamBox,
    ThetaPoint,
    available_models,
    check_model,
    eval_V,
    eval_V_inverse_and_logdet,
    get_model,
    inv_logdet,
    register_model,
)

from conftest import linear2d_model, toy_model


def test_eval_v_scalar_jump_only(toy):
    assert eval_V(toy, np.array([3.7]), np.array([1.0])) == pytest.approx(np.array([[1.0]]))


def test_eval_v_ou_levy_sum_of_squares():
    m = get_model("ou-levy")
    V = eval_V(m, np.array([0.4]), np.array([1.0, 2.0]))
    assert V[0, 0] == pytest.approx(5.0)


def test_eval_v_sim_model_is_one_everywhere():
    m = get_model("nig-hyperbolic")
    x = np.linspace(-50, 50, 101)[:, None]
    V = eval_V(m, x, np.array([1.0]))
    assert np.all(V == 1.0)


def test_inverse_logdet_identity():
    Vi, ld = inv_logdet(np.eye(2)[None])
    np.testing.assert_allclose(Vi[0], np.eye(2))
    assert ld[0] == pytest.approx(0.0)


def test_inverse_logdet_scalar():
    Vi, ld = inv_logdet(np.array([[[5.0]]]))
    assert Vi[0, 0, 0] == pytest.approx(0.2)
    assert ld[0] == pytest.approx(math.log(5.0))


def test_inverse_logdet_diag_2x2_matches_direct_inversion():
    V = np.diag([2.0, 0.5])
    Vi, ld = inv_logdet(V[None])
    # oracle: direct 2x2 inversion formula
    a, b, c, d = V.ravel()
    det = a * d - b * c
    np.testing.assert_allclose(Vi[0], np.array([[d, -b], [-c, a]]) / det)
    assert ld[0] == pytest.approx(math.log(det), abs=1e-15)


def test_inverse_round_trip_general_2d():
    m = linear2d_model()
    x = np.random.default_rng(0).normal(size=(50, 2))
    V = eval_V(m, x, np.array([0.7, 1.3]))
    Vi, ld = eval_V_inverse_and_logdet(m, x, np.array([0.7, 1.3]))
    prod = np.einsum("nij,njk->nik", V, Vi)
    np.testing.assert_allclose(prod, np.broadcast_to(np.eye(2), prod.shape), atol=1e-10)
    np.testing.assert_allclose(ld, np.linalg.slogdet(V)[1], rtol=1e-12)


def test_non_positive_definite_raises():
    m = ModelSpec(
        dim_x=2, dim_w=0, dim_j=1, dim_alpha=1, dim_beta=1,
        drift=lambda x, a: -x, diff=lambda x, b: np.zeros((x.shape[0], 2, 0)),
        jump_coef=lambda x, b: np.ones((x.shape[0], 2, 1)),  # rank one V
        param_box=ParamBox(np.array([0.1, 0.1]), np.array([2.0, 2.0]), 1),
    )
    with pytest.raises(NonPositiveDefinite):
        eval_V_inverse_and_logdet(m, np.zeros(2), np.array([1.0]))
    with pytest.raises(NonPositiveDefinite):
        inv_logdet(np.array([[[0.0]]]))


@pytest.mark.parametrize("name", ["nig-hyperbolic", "diffusion-hyperbolic", "ou-levy", "ou-jump"])
def test_builtin_models_pass_probes(name):
    rep = check_model(get_model(name), n_probes=20, seed=3)
    assert rep["ok"], rep
    assert rep["asymmetry"] < 1e-12 and rep["min_eig"] > 0


def test_user_model_without_derivatives_is_flagged_and_consistent():
    m = linear2d_model()
    assert m.fd_flags == {"drift_dalpha", "dbeta_V", "drift_dalpha2", "dbeta2_V"}
    rep = check_model(m, n_probes=20)
    assert rep["ok"]
    # finite-difference fallback agrees with an analytic derivative of the toy drift
    x = np.array([[0.3], [2.0]])
    fd = toy_model(analytic=False).dalpha(x, np.array([1.3]))
    np.testing.assert_allclose(fd[:, 0, 0], -x[:, 0], rtol=1e-8)


def test_paramsbox_invariants():
    with pytest.raises(ValueError):
        ParamBox(np.array([1.0, 0.0]), np.array([1.0, 2.0]), 1)
    box = ParamBox.parse("0.1:5,0.2:3", 1)
    assert box.contains([1.0, 1.0]) and not box.contains([0.0, 1.0])
    assert box.on_boundary([0.1, 1.0]) and not box.on_boundary([1.0, 1.0])
    np.testing.assert_allclose(box.clip([10.0, -1.0]), [5.0, 0.2])
    assert ParamBox.parse(box.to_string(), 1).to_string() == box.to_string()


def test_theta_point_parse_and_split():
    th = ThetaPoint.parse("1,2,3", 1)
    np.testing.assert_array_equal(th.alpha, [1.0])
    np.testing.assert_array_equal(th.beta, [2.0, 3.0])
    np.testing.assert_array_equal(th.stacked, [1.0, 2.0, 3.0])


def test_registry():
    assert {"nig-hyperbolic", "ou-levy", "diffusion-hyperbolic"} <= set(available_models())
    register_model("toy-registered", lambda box=None: toy_model())
    assert get_model("toy-registered").name == "toy"
    with pytest.raises(KeyError):
        get_model("does-not-exist")


@settings(max_examples=50, deadline=None)
@given(
    x=st.lists(st.floats(-20, 20), min_size=2, max_size=2),
    b=st.lists(st.floats(0.2, 3.0), min_size=2, max_size=2),
)
def test_property_V_symmetric_positive(x, b):
    V = eval_V(linear2d_model(), np.array(x), np.array(b))
    assert np.max(np.abs(V - V.T)) <= 1e-12 * np.max(np.abs(V))
    assert np.linalg.eigvalsh(V)[0] > 0
