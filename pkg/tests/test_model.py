import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from arcs.errors import DivergentTail, DomainError, Unsupported
from arcs.model import (Grid, SensitivitySpec, SystemState, clamp_to_floor, max_alpha,
                        sensitivity_eval, validate_hypotheses)


@pytest.mark.parametrize("kwargs", [
    dict(dim=3, lengths=(1, 1, 1), cells=(8, 8, 8)),
    dict(dim=1, lengths=(1.0,), cells=(3,)),
    dict(dim=2, lengths=(1.0, -1.0), cells=(8, 8)),
    dict(dim=2, lengths=(1.0,), cells=(8, 8)),
])
def test_grid_rejects_bad_input(kwargs):
    with pytest.raises(ValueError):
        Grid(**kwargs)


def test_grid_geometry():
    g = Grid(2, (2.0, 1.0), (8, 4))
    assert g.h == (0.25, 0.25)
    assert g.volume == 2.0
    assert g.integrate(np.ones(g.shape)) == pytest.approx(2.0)
    x, y = g.mesh()
    assert x.shape == (8, 4) and x[0, 0] == 0.125 and y[0, -1] == 0.875


def test_state_shape_check():
    g = Grid(1, (1.0,), (8,))
    s = SystemState(0.0, np.ones(8), np.ones(8), np.ones(7))
    with pytest.raises(ValueError):
        s.check(g)


def test_power_family_closed_forms():
    spec = SensitivitySpec.power(2.0, 3.0, eta_floor=0.5)
    s = np.array([0.5, 1.0, 4.0])
    assert np.allclose(spec.value(s), 2.0 / (1 + s) ** 3)
    assert np.allclose(spec.derivative(s), -6.0 / (1 + s) ** 4)
    assert np.allclose(spec.tail(s), 1.0 / (1 + s) ** 2)
    assert np.allclose(spec.antiderivative(s), 1.0 / 1.5**2 - 1.0 / (1 + s) ** 2)


@pytest.mark.parametrize("spec", [
    SensitivitySpec.power(1.0, 1.0),
    SensitivitySpec.power(1.0, 0.5),
    SensitivitySpec.constant(3.0),
])
def test_divergent_tails(spec):
    with pytest.raises(DivergentTail):
        spec.tail(1.0)


def test_sensitivity_eval_domain():
    spec = SensitivitySpec.power(1.0, 2.0, eta_floor=2.0)
    with pytest.raises(DomainError):
        sensitivity_eval(spec, 1.0)
    val, der, tail = sensitivity_eval(spec, 2.0)
    assert (val, der, tail) == pytest.approx((1 / 9, -2 / 27, 1 / 3))


def test_clamp_counts():
    spec = SensitivitySpec.power(eta_floor=1.0)
    out, n = clamp_to_floor(spec, np.array([0.0, 0.5, 2.0]))
    assert n == 2 and out.tolist() == [1.0, 1.0, 2.0]


def test_max_alpha_formula():
    assert max_alpha(SensitivitySpec.power(1.0, 2.0, eta_floor=13.0)) == pytest.approx(28.0)
    with pytest.raises(Unsupported):
        max_alpha(SensitivitySpec.constant(1.0))


def test_tabulated_follows_power_law():
    s = np.geomspace(0.1, 50, 40) - 0.1
    spec = SensitivitySpec.tabulated(s, (1 + s) ** -2.0)
    probe = np.array([0.5, 3.0, 20.0, 200.0])
    assert np.allclose(spec.value(probe), (1 + probe) ** -2.0, rtol=1e-3)
    assert float(spec.tail(0.0)) == pytest.approx(1.0, rel=1e-3)
    assert float(spec.antiderivative(10.0)) == pytest.approx(1 - 1 / 11, rel=1e-3)


def test_tabulated_antiderivative_matches_quadrature():
    s = (0.0, 1.0, 2.0, 4.0, 8.0)
    spec = SensitivitySpec.tabulated(s, (2.0, 1.5, 0.9, 0.5, 0.2))
    for b in (0.7, 3.0, 8.0, 15.0):
        ref, _ = quad(lambda x: float(spec.value(x)), 0.0, b, limit=200)
        assert float(spec.antiderivative(b)) == pytest.approx(ref, rel=1e-8)


def test_hypotheses_at_the_riccati_limit():
    spec = SensitivitySpec.power(1.0, 2.0, eta_floor=13.24)
    a = max_alpha(spec)
    assert validate_hypotheses(spec, a).passed
    rep = validate_hypotheses(spec, 1.01 * a)
    assert not rep["riccati"].passed
    assert rep["riccati"].worst_s == pytest.approx(13.24)


def test_constant_family_fails():
    rep = validate_hypotheses(SensitivitySpec.constant(1.0), 1.0)
    names = {c.name for c in rep.failures()}
    assert names == {"integrable_tail", "product_bound", "riccati"}


def test_product_bound_constant():
    # sup s/(1+s)^2 = 1/4 at s = 1
    rep = validate_hypotheses(SensitivitySpec.power(1.0, 2.0), 0.5)
    assert rep.c_bound == pytest.approx(1.01 * 0.25, rel=1e-9)


@settings(max_examples=80, deadline=None)
@given(chat=st.floats(0.1, 10), k=st.floats(1.1, 5), eta=st.floats(0, 50),
       frac=st.floats(0.0, 1.0))
def test_riccati_holds_below_max_alpha(chat, k, eta, frac):
    spec = SensitivitySpec.power(chat, k, eta_floor=eta)
    rep = validate_hypotheses(spec, frac * max_alpha(spec))
    assert rep["riccati"].passed
    assert rep["positive"].passed and rep["integrable_tail"].passed
    assert rep["product_bound"].passed


@settings(max_examples=50, deadline=None)
@given(chat=st.floats(0.1, 10), k=st.floats(1.1, 5), eta=st.floats(0, 20),
       a=st.floats(0, 30), b=st.floats(0, 30))
def test_tail_and_antiderivative_consistent(chat, k, eta, a, b):
    spec = SensitivitySpec.power(chat, k, eta_floor=eta)
    lo, hi = eta + min(a, b), eta + max(a, b)
    lhs = float(spec.antiderivative(hi) - spec.antiderivative(lo))
    rhs = float(spec.tail(lo) - spec.tail(hi))
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-12)
    assert math.isfinite(lhs) and lhs >= -1e-15
