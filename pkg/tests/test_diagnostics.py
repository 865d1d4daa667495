import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from arcs.certifier import AuxConstants
from arcs.diagnostics import (DiagnosticsRecord, Monitor, SERIES_COLUMNS, blowup_check,
                              bounds_check, central_gradient, energy_monitor,
                              quadratic_form_max, read_series, weight_field,
                              weighted_energy, write_series, xyz_fields)
from arcs.errors import InsufficientSamples
from arcs.model import Grid, SensitivitySpec, SystemState

G = Grid(2, (1.0, 1.0), (8, 8))
CHI = SensitivitySpec.power(1.0, 2.0, eta_floor=1.0)


def bump_state(t=0.0):
    x, y = G.mesh()
    u = 1 + np.exp(-((x - 0.5) ** 2 + (y - 0.5) ** 2) / 0.05)
    v = 2 + x
    return SystemState(t, u, v, v.copy())


def record(**kw):
    base = dict(t=0.0, mass_u=1.0, linf_u=1.0, linf_v=1.0, linf_w=1.0, min_v=1.0, min_w=1.0,
                grad_linf_v=0.0, grad_linf_w=0.0, energy_p=1.0, f_min=0.9, f_max=1.0,
                Q_max=-1.0, excluded_cells=0, blowup=False)
    base.update(kw)
    return DiagnosticsRecord(**base)


def test_energy_with_unit_weight_is_mass():
    s = bump_state()
    f = weight_field(s, CHI, CHI, 0.0, 0.0)
    assert np.all(f == 1.0)
    assert weighted_energy(s, 1.0, f, G) == pytest.approx(G.integrate(s.u))


def test_weight_field_closed_form():
    s = bump_state()
    f = weight_field(s, CHI, CHI, 0.5, 0.25)
    anti = 1 / 2 - 1 / (1 + s.v)
    assert np.allclose(f, np.exp(-0.75 * anti))
    assert np.all(f <= 1.0)


def test_weight_field_clamps_below_floor():
    s = SystemState(0.0, np.ones(G.shape), np.zeros(G.shape), np.zeros(G.shape))
    f, n = weight_field(s, CHI, CHI, 1.0, 1.0, return_clamped=True)
    assert n == 2 * 64 and np.all(f == 1.0)


def test_central_gradient_linear():
    x, y = G.mesh()
    gx, gy = central_gradient(3 * x - 2 * y, G)
    assert np.allclose(gx[1:-1], 3.0) and np.allclose(gy[:, 1:-1], -2.0)


def test_xyz_excludes_tiny_u():
    s = bump_state()
    u = s.u.copy()
    u[0, 0] = 0.0
    x, y, z, excl = xyz_fields(SystemState(0.0, u, s.v, s.w), CHI, CHI, G)
    assert excl[0, 0] and excl.sum() == 1 and x[0, 0] == 0.0
    assert np.all(y >= 0) and np.all(z >= 0)


def test_quadratic_form_max_all_masked():
    z = np.zeros((2, 2))
    assert quadratic_form_max((1, 1, 1, 1, 1, 1), (z, z, z), np.ones((2, 2), bool)) == 0.0


def test_blowup_check():
    s = bump_state()
    assert not blowup_check(s, 10.0)
    assert blowup_check(s, 1.5)
    bad = SystemState(0.0, s.u, s.v * np.nan, s.w)
    assert blowup_check(bad, 1e9)


def test_bounds_check_flags():
    aux = AuxConstants(eta1=1.0, eta2=1.0, c0=0.3, c4=0.9, theta=0.5)
    assert bounds_check(record(), aux) == []
    out = bounds_check(record(min_v=0.5, f_min=0.8, f_max=1.1), aux)
    assert len(out) == 3
    assert bounds_check(record(min_v=0.97), aux) == []
    assert len(bounds_check(record(min_v=0.97), aux, grid_tol=0.0)) == 1


def test_series_round_trip(tmp_path):
    recs = [record(t=0.1 * i, energy_p=1 / 3 + i, excluded_cells=i, blowup=i == 2)
            for i in range(3)]
    path = tmp_path / "series.csv"
    write_series(path, recs)
    assert path.read_text().splitlines()[0] == ",".join(SERIES_COLUMNS)
    assert read_series(path) == recs


def test_energy_monitor_plateau_and_growth():
    flat = [(t, 2 - math.exp(-5 * t)) for t in np.linspace(0, 5, 41)]
    rep = energy_monitor(flat, 0.3)
    assert rep.plateau and rep.n_samples == 41 and rep.max_energy == pytest.approx(2.0, rel=1e-9)
    grow = [(t, math.exp(t)) for t in np.linspace(0, 5, 41)]
    assert not energy_monitor(grow, 0.3).plateau
    with pytest.raises(InsufficientSamples):
        energy_monitor(flat[:2], 0.3)


def test_monitor_records():
    mon = Monitor(G, CHI, CHI, 2.0, 0.1, 0.1, coeffs=None, cap=100.0)
    rec = mon(bump_state())
    assert math.isnan(rec.Q_max) and not rec.blowup
    assert rec.mass_u == pytest.approx(G.integrate(bump_state().u))
    assert rec.f_max <= 1.0 and rec.f_min > 0


@settings(max_examples=30, deadline=None)
@given(r=st.floats(0, 5), sigma=st.floats(0, 5))
def test_weight_bounded_below_by_c4(r, sigma):
    from arcs.certifier import c4_bound
    s = bump_state()
    f = weight_field(s, CHI, CHI, r, sigma)
    assert np.all(f >= c4_bound(CHI, CHI, r, sigma) * (1 - 1e-12))
