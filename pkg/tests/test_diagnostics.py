import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from logchemo.config import SimConfig
from logchemo.diagnostics import (ConditionalHypothesisError, FunctionalReport, ReportParams,
                                  conditional_functional, conditional_parameters, csiszar_check,
                                  csiszar_scale, evaluate_report, fisher, g_function,
                                  heihoff_ratio, poincare_constant, quasi_energy_check,
                                  relative_entropy, small_c_gradient, stabilization_metrics,
                                  uniform_integrability)
from logchemo.driver import run
from logchemo.grid import GridSpec, MacVelocity, ScalarField
from logchemo.state import State
from logchemo.taxis import SensitivitySpec

# 0.5 ln(1/2) + 1.5 ln(3/2)
TWO_VALUED_ENTROPY = 0.26162407188227393
# 4 * TWO_VALUED_ENTROPY - 1
TWO_VALUED_CK_MARGIN = 0.04649628752909574
# discrete ratio for psi = 2 + cos(2 pi x) at 256^2; continuous value 94.48498 by quadrature
HEIHOFF_GOLDEN_256 = 94.48023463188359

POWER2 = SensitivitySpec.power(2)


def _zero_u(g):
    return MacVelocity(g, np.zeros((g.nx + 1, g.ny)), np.zeros((g.nx, g.ny + 1)))


def _params(g, nbar0=1.0, c0_inf=1.0, cond=None, spec=POWER2, chi=1.0):
    return ReportParams(g, chi, 1e-3, c0_inf, nbar0, spec, None, cond)


def _two_valued(nx=8):
    g = GridSpec(nx, nx)
    x, _ = g.centers()
    return g, np.where(x < 0.5, 1.0, 3.0)


def test_homogeneous_report():
    g = GridSpec(16, 16)
    cp = conditional_parameters(g, 1.0, 1.0, 1.0, POWER2)
    st_ = State(g, 0.0, np.ones(g.shape), np.ones(g.shape), _zero_u(g))
    r = evaluate_report(st_, _params(g, cond=cp))
    assert r.entropy_n == 0 and r.w_mass == 0
    assert r.fisher_n == r.dirichlet_w == r.dirichlet_c == r.dirichlet_u == 0
    assert r.cond_F == pytest.approx(0.5 * cp.M * 1.0, rel=1e-14)
    assert math.isnan(r.quasi_energy_lhs_rate)


def test_two_valued_entropy():
    g, n = _two_valued()
    st_ = State(g, 0.0, n, np.ones(g.shape), _zero_u(g))
    r = evaluate_report(st_, _params(g, nbar0=2.0))
    assert r.entropy_n == pytest.approx(TWO_VALUED_ENTROPY, abs=1e-12)
    assert TWO_VALUED_ENTROPY == pytest.approx(0.2616, abs=1e-4)


def test_report_fields_and_invariants(rng):
    g = GridSpec(16, 16)
    st_ = State(g, 0.3, rng.uniform(0.1, 2, g.shape), rng.uniform(0.2, 1, g.shape), _zero_u(g))
    r = evaluate_report(st_, _params(g))
    assert FunctionalReport.columns()[:19] == [
        "t", "mass_n", "sup_c", "entropy_n", "neg_log_mass", "w_mass", "fisher_n", "dirichlet_w",
        "kinetic", "dirichlet_u", "c_l2", "dirichlet_c", "lap_w_l2", "quasi_energy_lhs_rate",
        "quasi_energy_rhs", "cond_F", "uniform_int", "ck_margin", "heihoff_ratio"]
    vals = [v for k, v in r.as_dict().items() if k not in ("quasi_energy_lhs_rate", "cond_F", "quasi_energy_margin",
                                                          "quasi_energy_slack", "eta0")]
    assert all(math.isfinite(v) for v in vals)
    assert r.mass_n > 0 and r.sup_c <= 1.0


def test_flooring_is_counted():
    g = GridSpec(8, 8)
    n = np.ones(g.shape)
    n[2, 2] = 0.0
    n[3, 3] = 1e-40
    r = evaluate_report(State(g, 0.0, n, np.ones(g.shape), _zero_u(g)), _params(g))
    assert r.n_floored == 2
    assert math.isfinite(r.neg_log_mass)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_property_entropy_nonnegative(seed):
    r = np.random.default_rng(seed)
    g = GridSpec(8, 8)
    n = r.uniform(0, 5, g.shape) ** r.uniform(0.5, 3)
    mean = n.mean()
    assert relative_entropy(n, mean, g.cell_volume) >= -1e-14 * mean


def test_entropy_and_fisher_vanish_only_for_constants(rng):
    g = GridSpec(8, 8)
    assert relative_entropy(np.full(g.shape, 2.0), 2.0, g.cell_volume) == 0.0
    assert fisher(np.full(g.shape, 2.0), g.dx, g.dy) == 0.0
    n = np.full(g.shape, 2.0)
    n[4, 4] = 2.001
    assert relative_entropy(n, n.mean(), g.cell_volume) > 0
    assert fisher(n, g.dx, g.dy) > 0


def test_quasi_energy_homogeneous_run():
    cfg = SimConfig(grid=GridSpec(8, 8)).with_(
        init__n="constant", init__u="zero", fluid__mode="none", fluid__phi="zero",
        run__t_end=0.5, run__dt_max=1e-3, run__report_every=1)
    s = run(cfg)
    reps = s.reports
    margins = [quasi_energy_check(a, b, b.t - a.t, 1.0) for a, b in zip(reps, reps[1:])]
    assert min(margins) >= -1e-6


@pytest.mark.parametrize("kw", [
    dict(init__n="constant", init__c="bump", init__c_amp=0.9, species__delta=0.1),
    dict(init__n="constant", init__n_mean=1e-3, init__c="bump", init__c_amp=0.9,
         species__delta=0.1, sensitivity=SensitivitySpec.linear()),
])
def test_quasi_energy_margin_over_1000_steps(kw):
    cfg = SimConfig().with_(init__u="zero", fluid__mode="none", fluid__phi="zero",
                            run__t_end=0.5, run__dt_max=5e-4, **kw)
    s = run(cfg)
    tr = s.traces
    assert s.accepted >= 1000
    margin = tr["qe_rhs"][1:] - tr["qe_lhs"][1:]
    assert np.all(margin >= -tr["qe_slack"][1:])


def test_conditional_parameters_unit_square():
    g = GridSpec(64, 64)
    assert poincare_constant(g) == pytest.approx(1 / math.pi ** 2, rel=1e-15)
    cp = conditional_parameters(g, 1.0, 1.0, 1.0, POWER2)
    assert cp.K == pytest.approx(16 / math.pi ** 2, rel=1e-12)
    assert cp.K == pytest.approx(1.6211, abs=1e-4)
    for v in (cp.K, cp.L, cp.M, cp.eta0, cp.A, cp.g_max, cp.cP, cp.cS, cp.cG):
        assert v > 0
    s = np.linspace(0, cp.A, 5001)
    assert np.all(g_function(POWER2, cp.K, s) <= 1 / (16 * cp.cP * cp.nbar0))
    assert g_function(POWER2, cp.K, np.array([0.0]))[0] == 0.0


def test_conditional_parameters_rejects_linear():
    with pytest.raises(ConditionalHypothesisError, match=r"f'\(0\) = 0 required"):
        conditional_parameters(GridSpec(16, 16), 1.0, 1.0, 1.0, SensitivitySpec.linear())


def test_conditional_functional_examples(rng):
    g = GridSpec(16, 16)
    cp = conditional_parameters(g, 1.0, 1.0, 1.0, POWER2)
    rest = State(g, 0.0, np.ones(g.shape), np.full(g.shape, 0.5), _zero_u(g))
    assert conditional_functional(rest, cp, 0.5) == pytest.approx(0.5 * cp.M * 0.25, rel=1e-14)
    tiny = State(g, 0.0, np.ones(g.shape), np.full(g.shape, 1e-150), _zero_u(g))
    assert conditional_functional(tiny, cp, 1e-150) == pytest.approx(0.0, abs=1e-250)
    for _ in range(20):
        s = State(g, 0.0, rng.uniform(0.1, 3, g.shape), rng.uniform(0.1, 1, g.shape), _zero_u(g))
        assert conditional_functional(s, cp, 1.0) >= 0


def test_csiszar_examples():
    g = GridSpec(8, 8)
    assert csiszar_check(ScalarField.constant(g, 2.0)) == 0.0
    _, phi = _two_valued()
    assert csiszar_check(ScalarField(g, phi)) == pytest.approx(TWO_VALUED_CK_MARGIN, abs=1e-12)


def test_csiszar_random_sweep():
    r = np.random.default_rng(7)
    g = GridSpec(8, 8)
    worst = math.inf
    for _ in range(1000):
        phi = ScalarField(g, r.uniform(0, 1, g.shape) ** r.uniform(0.2, 6))
        worst = min(worst, csiszar_check(phi) / csiszar_scale(phi))
    assert worst >= -1e-10


def test_heihoff_golden():
    g = GridSpec(256, 256)
    x, _ = g.centers()
    val = heihoff_ratio(ScalarField(g, 2 + np.cos(2 * np.pi * x)))
    assert val == pytest.approx(HEIHOFF_GOLDEN_256, rel=1e-10)
    m = quad(lambda s: 2 + math.cos(2 * math.pi * s), 0, 1)[0]
    fi = quad(lambda s: (2 * math.pi * math.sin(2 * math.pi * s)) ** 2 / (2 + math.cos(2 * math.pi * s)) ** 2,
              0, 1, limit=200)[0]
    ent = quad(lambda s: (2 + math.cos(2 * math.pi * s)) * math.log((2 + math.cos(2 * math.pi * s)) / 2),
               0, 1, limit=200)[0]
    assert val == pytest.approx(m * fi / ent, rel=1e-4)


def test_heihoff_family_and_small_amplitude():
    g = GridSpec(64, 64)
    x, _ = g.centers()
    ratios = [heihoff_ratio(ScalarField(g, np.exp(k * np.cos(2 * np.pi * x))))
              for k in (0.1, 0.3, 0.5, 1.0, 2.0, 3.0)]
    assert min(ratios) > 0
    small = [heihoff_ratio(ScalarField(g, 1 + a * np.cos(2 * np.pi * x))) for a in (1e-2, 1e-4, 1e-6)]
    assert all(math.isfinite(v) for v in small)
    assert small[1] == pytest.approx(small[0], rel=1e-3)
    assert small[2] == pytest.approx(small[1], rel=1e-3)


def test_heihoff_constant_rejected():
    with pytest.raises(ValueError):
        heihoff_ratio(ScalarField.constant(GridSpec(8, 8), 1.0))


def test_uniform_integrability_examples():
    g = GridSpec(8, 8)
    zero = ScalarField.constant(g, 0.0)
    assert uniform_integrability(zero, ScalarField.constant(g, 0.5), POWER2) == 0.0
    c = ScalarField.constant(g, math.sqrt(math.e))
    val = uniform_integrability(ScalarField.constant(g, 1.0), c, POWER2)
    assert val == pytest.approx(math.e, rel=1e-14)


def test_small_c_gradient_examples():
    g = GridSpec(16, 16)
    x, _ = g.centers()
    assert small_c_gradient(ScalarField(g, 2 + x), 1.0) == 0.0
    assert small_c_gradient(ScalarField.constant(g, 0.25), 0.5) == 0.0


def test_small_c_gradient_linear_profile():
    g = GridSpec(128, 128)
    x, _ = g.centers()
    A = 0.6
    val = small_c_gradient(ScalarField(g, 0.1 + x), A)
    # |grad c|^2 / c^2 = 1/(0.1 + x)^2 over {x <= 0.5}
    ref = quad(lambda s: 1.0 / (0.1 + s) ** 2, 0.0, A - 0.1)[0]
    assert val == pytest.approx(ref, rel=0.05)


def test_stabilization_metrics(rng):
    g = GridSpec(16, 16)
    steady = State(g, 0.0, np.full(g.shape, 1.5), np.zeros(g.shape), _zero_u(g))
    m = stabilization_metrics(steady, 1.5)
    assert all(v == 0 for v in m.values())
    for _ in range(20):
        n = rng.uniform(0.1, 3, g.shape)
        s = State(g, 0.0, n, np.ones(g.shape), _zero_u(g))
        nbar = n.sum() * g.cell_volume
        mass = nbar
        ent = relative_entropy(n, nbar, g.cell_volume)
        assert stabilization_metrics(s, nbar)["dist_n_l1"] ** 2 <= 2 * mass * ent + 1e-10
