import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logchemo.grid import FaceField, GridSpec, MacVelocity, ScalarField, gradient, integrate
from logchemo.oracle import homogeneous_ode
from logchemo.taxis import (PositivityError, SensitivityRangeError, SensitivitySpec,
                            SpeciesParams, advance_c, advance_n, log_transform, sensitivity_eval,
                            taxis_drift)


def test_sensitivity_examples():
    assert sensitivity_eval(SensitivitySpec.power(2), 0.5) == (0.25, 1.0)
    assert sensitivity_eval(SensitivitySpec.power(2), 0.0) == (0.0, 0.0)
    assert sensitivity_eval(SensitivitySpec.linear(), 0.0) == (0.0, 1.0)
    assert SensitivitySpec.power(2).flat_at_origin
    assert not SensitivitySpec.linear().flat_at_origin


def test_sensitivity_range():
    spec = SensitivitySpec.table([0, 0.5, 1, 2], [0, 0.25, 1, 4])
    assert spec.c_max == 2.0
    with pytest.raises(SensitivityRangeError):
        sensitivity_eval(spec, 2.5)
    with pytest.raises(SensitivityRangeError):
        sensitivity_eval(SensitivitySpec.power(2), -1e-3)


def test_table_ratio_extension():
    spec = SensitivitySpec.table([0, 0.25, 0.5, 1], [0, 0.0625, 0.25, 1])
    r = spec.ratio(np.array([0.0, 0.5]))
    assert r[0] == pytest.approx(spec.derivative_at_zero())
    assert r[1] == pytest.approx(0.5, rel=1e-12)


def test_species_params_invariants():
    with pytest.raises(ValueError):
        SpeciesParams(delta=0.0)
    with pytest.raises(ValueError):
        SpeciesParams(chi=0.0)
    with pytest.raises(ValueError):
        SpeciesParams(c0_inf=0.5, delta=1.0)
    assert SpeciesParams(eps=0.0).classical_mode


def test_drift_constant_c_is_zero(unit8):
    d = taxis_drift(ScalarField.constant(unit8, 0.7), ScalarField.constant(unit8, 2.0), SpeciesParams())
    assert d.max_abs() == 0.0


def _drift_err(nx):
    g = GridSpec(nx, 4)
    x, _ = g.centers()
    p = SpeciesParams(chi=2.0, eps=0.0, c0_inf=math.e, delta=1.0)
    d = taxis_drift(ScalarField(g, np.exp(x)), ScalarField.constant(g, 5.0), p)
    return np.max(np.abs(d.x[1:-1] - 2.0))


def test_drift_log_gradient_second_order():
    e1, e2 = _drift_err(32), _drift_err(64)
    assert e2 < 1e-4
    assert math.log2(e1 / e2) >= 1.9


def test_drift_damped_by_eps(unit8, rng):
    c = ScalarField(unit8, rng.uniform(0.5, 1.0, unit8.shape))
    n = ScalarField.constant(unit8, 1.0)
    p0 = SpeciesParams(chi=1.5, eps=0.0)
    pe = SpeciesParams(chi=1.5, eps=1e6)
    assert np.all(np.abs(taxis_drift(c, n, pe).x) <= np.abs(taxis_drift(c, n, p0).x) / (1 + 1e6) * (1 + 1e-12))


def test_drift_rejects_nonpositive_c(unit8):
    c = np.ones(unit8.shape)
    c[3, 4] = 0.0
    with pytest.raises(PositivityError) as err:
        taxis_drift(ScalarField(unit8, c), ScalarField.constant(unit8, 1.0), SpeciesParams())
    assert err.value.cell == (3, 4)


def _zero_u(g):
    return MacVelocity(g, np.zeros((g.nx + 1, g.ny)), np.zeros((g.nx, g.ny + 1)))


def test_advance_n_constant_fixed_point(unit8):
    n = ScalarField.constant(unit8, 2.0)
    out = advance_n(n, FaceField.zeros(unit8), _zero_u(unit8), 1e-3)
    np.testing.assert_allclose(out.values, 2.0, rtol=1e-14)


@pytest.mark.parametrize("implicit", [True, False])
def test_diffusion_bump_mass_1000_steps(implicit):
    g = GridSpec(32, 32)
    x, y = g.centers()
    n = ScalarField(g, np.exp(-((x - 0.5) ** 2 + (y - 0.5) ** 2) / 0.01))
    m0 = integrate(n)
    dt = 0.4 * g.dx ** 2 / 4 if not implicit else 1e-3
    zero = FaceField.zeros(g)
    for _ in range(1000):
        n = advance_n(n, zero, None, dt, implicit=implicit)
    assert abs(integrate(n) - m0) <= 1e-12 * m0
    assert n.values.min() >= 0


def test_constant_drift_moves_center():
    g = GridSpec(256, 4)
    x, _ = g.centers()
    # fast drift over a short time so the pulse stays clear of the walls
    v = 40.0
    n = ScalarField(g, np.exp(-((x - 0.3) ** 2) / (2 * 0.05 ** 2)))
    drift = FaceField.zeros(g)
    dx = drift.x.copy()
    dx[1:-1] = v
    drift = FaceField(g, dx, drift.y)
    dt = 0.5 * g.dx / v
    t_end = 0.01
    steps = int(round(t_end / dt))
    c0 = integrate(n.values * x, g) / integrate(n)
    for _ in range(steps):
        n = advance_n(n, drift, None, dt)
    c1 = integrate(n.values * x, g) / integrate(n)
    assert (c1 - c0) == pytest.approx(v * steps * dt, rel=0.02)


def test_advance_c_no_consumption_sup_nonincreasing(rng):
    g = GridSpec(16, 16)
    c = ScalarField(g, rng.uniform(0.2, 1.0, g.shape))
    n = ScalarField.constant(g, 0.0)
    spec = SensitivitySpec.power(2)
    for _ in range(50):
        new = advance_c(c, n, None, spec, 1e-3)
        assert new.values.max() <= c.values.max() * (1 + 1e-12)
        assert new.values.min() > 0
        c = new


def test_advance_c_homogeneous_decay():
    g = GridSpec(8, 8)
    c = ScalarField.constant(g, 1.0)
    n = ScalarField.constant(g, 1.0)
    spec = SensitivitySpec.power(2)
    for _ in range(1000):
        c = advance_c(c, n, None, spec, 1e-3)
    assert c.values.mean() == pytest.approx(0.5, abs=1e-3)
    assert c.values.mean() == pytest.approx(homogeneous_ode(1.0, 1.0, spec, 1.0), rel=1e-4)


def test_advance_c_tiny_values_stay_positive():
    g = GridSpec(8, 8)
    c = ScalarField.constant(g, 1e-8)
    n = ScalarField.constant(g, 1.0)
    dt = 1e-3
    new = advance_c(c, n, None, SensitivitySpec.power(2), dt)
    assert np.all(new.values > 0)
    rel = 1 - new.values / c.values
    assert np.all(rel <= dt * 1.0 * 1e-8 * (1 + 1e-6))


def test_advance_c_rejects_nonpositive(unit8):
    c = np.ones(unit8.shape)
    c[0, 0] = -1.0
    with pytest.raises(PositivityError):
        advance_c(ScalarField(unit8, c), ScalarField.constant(unit8, 1.0), None, SensitivitySpec.power(2), 1e-3)


def test_log_transform_examples(unit8):
    assert np.all(log_transform(ScalarField.constant(unit8, 2.0), 2.0).values == 0.0)
    w = log_transform(ScalarField.constant(unit8, 2.0 * math.exp(-1)), 2.0)
    np.testing.assert_allclose(w.values, 1.0, rtol=1e-15)
    with pytest.raises(ValueError):
        log_transform(ScalarField.constant(unit8, 3.0), 2.0)


def _chain_err(nx):
    g = GridSpec(nx, nx)
    x, y = g.centers()
    c = ScalarField(g, (2 + np.cos(np.pi * x) * np.cos(np.pi * y)) / 3)
    gw = gradient(log_transform(c, 1.0))
    gc = gradient(c)
    cx = 0.5 * (c.values[1:] + c.values[:-1])
    return np.max(np.abs(gw.x[1:-1] + gc.x[1:-1] / cx))


def test_log_transform_chain_rule_second_order():
    assert math.log2(_chain_err(32) / _chain_err(64)) >= 1.9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(1e-4, 5e-3))
def test_property_positivity_and_mass(seed, dt):
    r = np.random.default_rng(seed)
    g = GridSpec(8, 8)
    n = ScalarField(g, r.uniform(0.01, 2.0, g.shape))
    c = ScalarField(g, r.uniform(0.05, 1.0, g.shape))
    d = taxis_drift(c, n, SpeciesParams(chi=1.0))
    rate = (np.abs(d.x).max() / g.dx + np.abs(d.y).max() / g.dy) * 2
    dt = min(dt, 0.9 / rate)
    out = advance_n(n, d, None, dt)
    assert out.values.min() >= 0
    assert integrate(out) == pytest.approx(integrate(n), rel=1e-13)
    cn = advance_c(c, n, None, SensitivitySpec.power(2), dt)
    assert cn.values.min() > 0
    assert cn.values.max() <= c.values.max() * (1 + 1e-12)
