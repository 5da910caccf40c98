"""Energy/entropy functionals, functional-inequality margins and large-time metrics.

Everything here is a pure function of a published :class:`~logchemo.state.State`.
Gradient terms are face sums over interior faces (boundary faces carry zero
normal flux), quadratures are midpoint sums with pairwise reduction.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .fluid import dissipation, forcing_power, interpolate_to_cells, kinetic_energy, buoyancy
from .grid import GridSpec, ScalarField, lap_neumann, total
from .state import State
from .taxis import SensitivitySpec

LN_FLOOR = 1e-30
SLACK_KAPPA = 10.0


class ConditionalHypothesisError(ValueError):
    """The conditional-energy construction needs ``f'(0) = 0``."""


class SmallnessError(ValueError):
    """No cutoff ``A > 0`` satisfies the small-``c`` bound on ``g``."""


# elementary discrete functionals ------------------------------------------

def face_dirichlet(a: np.ndarray, dx: float, dy: float) -> float:
    """Sum over interior faces of ``|grad a|^2`` times the cell volume."""
    gx = (a[1:] - a[:-1]) / dx
    gy = (a[:, 1:] - a[:, :-1]) / dy
    return (total(gx * gx) + total(gy * gy)) * dx * dy


def fisher(n: np.ndarray, dx: float, dy: float) -> float:
    """``int |grad n|^2 / n^2`` with the geometric mean of the two cells on each face."""
    m = np.maximum(n, LN_FLOOR)
    gx = (m[1:] - m[:-1]) ** 2 / (dx * dx * m[1:] * m[:-1])
    gy = (m[:, 1:] - m[:, :-1]) ** 2 / (dy * dy * m[:, 1:] * m[:, :-1])
    return (total(gx) + total(gy)) * dx * dy


def relative_entropy(n: np.ndarray, nbar: float, vol: float) -> float:
    pos = n > 0
    integrand = np.zeros_like(n)
    integrand[pos] = n[pos] * np.log(n[pos] / nbar)
    return total(integrand) * vol


def _s_abs_log_s(s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = s[pos] * np.abs(np.log(s[pos]))
    return out


def inequality_slack(dt: float, dx: float, scale: float) -> float:
    """Allowed negative margin ``kappa (dt + dx^2) scale`` with ``kappa = 10``."""
    return SLACK_KAPPA * (dt + dx * dx) * scale


# report --------------------------------------------------------------------

@dataclass(frozen=True)
class ReportParams:
    """Fixed data needed to turn a state into a report."""

    grid: GridSpec
    chi: float
    eps: float
    c0_inf: float
    nbar0: float
    sensitivity: SensitivitySpec
    phi: np.ndarray | None = None
    conditional: "ConditionalParams | None" = None


@dataclass(frozen=True)
class FunctionalReport:
    t: float
    mass_n: float
    sup_c: float
    entropy_n: float
    neg_log_mass: float
    w_mass: float
    fisher_n: float
    dirichlet_w: float
    kinetic: float
    dirichlet_u: float
    c_l2: float
    dirichlet_c: float
    lap_w_l2: float
    quasi_energy_lhs_rate: float
    quasi_energy_rhs: float
    cond_F: float
    uniform_int: float
    ck_margin: float
    heihoff_ratio: float
    # appended columns
    quasi_energy_slack: float = math.nan
    quasi_energy_margin: float = math.nan
    eta0: float = math.nan
    n_floored: int = 0

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def row(self) -> list:
        return [getattr(self, k) for k in self.columns()]

    def as_dict(self) -> dict:
        return asdict(self)


def quasi_energy_terms(n: np.ndarray, c: np.ndarray, p: ReportParams) -> dict:
    """Pieces of the quasi-energy inequality at one time level."""
    g = p.grid
    vol = g.cell_volume
    w = -np.log(c / p.c0_inf)
    return {
        "neg_log_mass": -total(np.log(np.maximum(n, LN_FLOOR))) * vol,
        "w_mass": total(w) * vol,
        "fisher_n": fisher(n, g.dx, g.dy),
        "dirichlet_w": face_dirichlet(w, g.dx, g.dy),
        "rhs": p.chi ** 2 * total(n * p.sensitivity.ratio(c)) * vol,
    }


def quasi_energy_rate(prev: dict, cur: dict, dt: float, chi: float) -> tuple[float, float, float]:
    """``(lhs_rate, rhs, slack_scale)`` for one step.

    Dissipation is taken at the new level and the source ``chi^2 int n f(c)/c`` at
    the old one, matching the implicit diffusion and the Patankar sink, for which
    ``ln(c_k / c_{k+1}) <= dt n_k f(c_k)/c_k`` in the homogeneous case.
    """
    q0 = prev["neg_log_mass"] + chi ** 2 * prev["w_mass"]
    q1 = cur["neg_log_mass"] + chi ** 2 * cur["w_mass"]
    dq = (q1 - q0) / dt
    diss_n = 0.5 * cur["fisher_n"]
    diss_w = 0.5 * chi ** 2 * cur["dirichlet_w"]
    scale = max(abs(dq), diss_n, diss_w, abs(prev["rhs"]), abs(cur["rhs"]),
                abs(cur["neg_log_mass"] - prev["neg_log_mass"]) / dt,
                chi ** 2 * abs(cur["w_mass"] - prev["w_mass"]) / dt)
    return dq + diss_n + diss_w, prev["rhs"], scale


def evaluate_report(state: State, params: ReportParams, prev: State | None = None,
                    dt: float | None = None) -> FunctionalReport:
    """All functionals of ``state``; the quasi-energy rate needs the previous state and ``dt``."""
    g = params.grid
    vol = g.cell_volume
    n, c = state.n, state.c
    ux, uy = state.u.x, state.u.y
    w = -np.log(c / params.c0_inf)
    mass = total(n) * vol
    nbar = params.nbar0

    ent = relative_entropy(n, nbar, vol)
    terms = quasi_energy_terms(n, c, params)
    kin = kinetic_energy(ux, uy, vol)
    c_l2 = total(c * c) * vol
    dir_w = terms["dirichlet_w"]
    lap_w = lap_neumann(w, g.dx, g.dy)
    nf = n * params.sensitivity(c)
    mean = mass / g.area
    l1 = total(np.abs(n - mean)) * vol
    ck = 2.0 * mass * relative_entropy(n, mean, vol) - l1 * l1

    if prev is not None and dt:
        lhs, rhs_old, scale = quasi_energy_rate(quasi_energy_terms(prev.n, prev.c, params),
                                                terms, dt, params.chi)
        slack = inequality_slack(dt, g.dx, scale)
        margin = rhs_old - lhs
    else:
        lhs, slack, margin = math.nan, math.nan, math.nan

    cp = params.conditional
    if cp is not None:
        cond = ent + 0.5 * cp.K * dir_w + kin / cp.L + 0.5 * cp.M * c_l2
        eta0 = cp.eta0
    else:
        cond, eta0 = math.nan, math.nan

    return FunctionalReport(
        t=state.t,
        mass_n=mass,
        sup_c=float(np.max(c)),
        entropy_n=ent,
        neg_log_mass=terms["neg_log_mass"],
        w_mass=terms["w_mass"],
        fisher_n=terms["fisher_n"],
        dirichlet_w=dir_w,
        kinetic=kin,
        dirichlet_u=dissipation(ux, uy, g.dx, g.dy),
        c_l2=c_l2,
        dirichlet_c=face_dirichlet(c, g.dx, g.dy),
        lap_w_l2=total(lap_w * lap_w) * vol,
        quasi_energy_lhs_rate=lhs,
        quasi_energy_rhs=terms["rhs"],
        cond_F=cond,
        uniform_int=total(_s_abs_log_s(nf)) * vol,
        ck_margin=ck,
        heihoff_ratio=_heihoff_or_nan(n, nbar, g),
        quasi_energy_slack=slack,
        quasi_energy_margin=margin,
        eta0=eta0,
        n_floored=int(np.count_nonzero(n < LN_FLOOR)),
    )


def _heihoff_or_nan(n, nbar, g) -> float:
    try:
        return heihoff_ratio(ScalarField(g, n))
    except ValueError:
        return math.nan


def quasi_energy_check(report_prev: FunctionalReport, report_next: FunctionalReport,
                       dt: float, chi: float) -> float:
    """Margin ``rhs - [d/dt(-int ln n + chi^2 int w) + fisher/2 + chi^2/2 int|grad w|^2]``.

    Dissipation is read from ``report_next`` and the source term from ``report_prev``.
    """
    q0 = report_prev.neg_log_mass + chi ** 2 * report_prev.w_mass
    q1 = report_next.neg_log_mass + chi ** 2 * report_next.w_mass
    lhs = (q1 - q0) / dt + 0.5 * report_next.fisher_n + 0.5 * chi ** 2 * report_next.dirichlet_w
    return report_prev.quasi_energy_rhs - lhs


# functional inequalities ----------------------------------------------------

def csiszar_check(phi: ScalarField) -> float:
    """``2 (int phi)(int phi ln(phi/mean)) - (int |phi - mean|)^2``; nonnegative by Csiszar-Kullback."""
    a = phi.values
    if np.any(a < 0) or not np.any(a > 0):
        raise ValueError("csiszar_check needs phi >= 0, not identically zero")
    vol = phi.grid.cell_volume
    mass = total(a) * vol
    mean = mass / phi.grid.area
    ent = relative_entropy(a, mean, vol)
    l1 = total(np.abs(a - mean)) * vol
    return 2.0 * mass * ent - l1 * l1


def csiszar_scale(phi: ScalarField) -> float:
    a = phi.values
    vol = phi.grid.cell_volume
    mass = total(a) * vol
    return max(mass * mass, 1e-300)


def heihoff_ratio(psi: ScalarField) -> float:
    """``(int psi) * int |grad psi|^2/psi^2  /  int psi ln(psi/mean)``.

    The second Heihoff inequality bounds this from below by a domain constant;
    the value is reported, the constant itself is not known in closed form.
    """
    a = psi.values
    g = psi.grid
    if np.any(a <= 0):
        raise ValueError("heihoff_ratio needs psi > 0")
    vol = g.cell_volume
    mass = total(a) * vol
    ent = relative_entropy(a, mass / g.area, vol)
    fi = fisher(a, g.dx, g.dy)
    if fi == 0.0 or ent <= 0.0:
        raise ValueError("heihoff_ratio undefined for constant psi (0/0)")
    return mass * fi / ent


def uniform_integrability(n: ScalarField, c: ScalarField, spec: SensitivitySpec) -> float:
    """``int n f(c) |ln(n f(c))|`` with ``s|ln s|`` extended by 0 at ``s = 0``."""
    if np.any(n.values < 0) or np.any(c.values <= 0):
        raise ValueError("uniform_integrability needs n >= 0 and c > 0")
    return total(_s_abs_log_s(n.values * spec(c.values))) * n.grid.cell_volume


def small_c_gradient(c: ScalarField, A: float) -> float:
    """``int_{c <= A} |grad c|^2 / c^2`` over faces whose two cells both satisfy ``c <= A``."""
    a = c.values
    g = c.grid
    if np.any(a <= 0):
        raise ValueError("small_c_gradient needs c > 0")
    sel = a <= A
    mx = sel[1:] & sel[:-1]
    my = sel[:, 1:] & sel[:, :-1]
    gx = np.where(mx, (a[1:] - a[:-1]) ** 2 / (g.dx ** 2 * a[1:] * a[:-1]), 0.0)
    gy = np.where(my, (a[:, 1:] - a[:, :-1]) ** 2 / (g.dy ** 2 * a[:, 1:] * a[:, :-1]), 0.0)
    return (total(gx) + total(gy)) * g.cell_volume


def stabilization_metrics(state: State, nbar0: float) -> dict:
    """``{dist_n_l1, c_l1, u_l1, dist_n_c0}``: L1 and sup distances to ``(nbar0, 0, 0)``."""
    vol = state.grid.cell_volume
    ucx, ucy = interpolate_to_cells(state.u)
    return {
        "dist_n_l1": total(np.abs(state.n - nbar0)) * vol,
        "c_l1": total(state.c) * vol,
        "u_l1": total(np.hypot(ucx, ucy)) * vol,
        "dist_n_c0": float(np.max(np.abs(state.n - nbar0))),
    }


def c2_proxy(state: State, nbar0: float) -> dict:
    """Discrete stand-in for C^2 norms: sup of values, first and second difference quotients."""
    g = state.grid

    def norms(a, hx, hy):
        out = float(np.max(np.abs(a)))
        if a.shape[0] > 1:
            out = max(out, float(np.max(np.abs(np.diff(a, axis=0)))) / hx)
        if a.shape[1] > 1:
            out = max(out, float(np.max(np.abs(np.diff(a, axis=1)))) / hy)
        if a.shape[0] > 2:
            out = max(out, float(np.max(np.abs(np.diff(a, 2, axis=0)))) / hx ** 2)
        if a.shape[1] > 2:
            out = max(out, float(np.max(np.abs(np.diff(a, 2, axis=1)))) / hy ** 2)
        return out

    return {
        "n": norms(state.n - nbar0, g.dx, g.dy),
        "c": norms(state.c, g.dx, g.dy),
        "u": max(norms(state.u.x, g.dx, g.dy), norms(state.u.y, g.dx, g.dy)),
    }


def fluid_energy_residual(u0x, u0y, u1x, u1y, n, phi, dt: float, grid: GridSpec):
    """Residual of ``d/dt 1/2 int|u|^2 + int|grad u|^2 - int n grad(phi).u`` over one step.

    Dissipation and forcing power are evaluated at the step midpoint. Returns
    ``(residual, scale)`` with ``scale`` the largest of the three terms.
    """
    vol = grid.cell_volume
    de = (kinetic_energy(u1x, u1y, vol) - kinetic_energy(u0x, u0y, vol)) / dt
    mx = 0.5 * (u0x + u1x)
    my = 0.5 * (u0y + u1y)
    diss = dissipation(mx, my, grid.dx, grid.dy)
    if phi is None:
        power = 0.0
    else:
        fx, fy = buoyancy(n, phi, grid.dx, grid.dy)
        power = forcing_power(mx, my, fx, fy, vol)
    return de + diss - power, max(abs(de), abs(diss), abs(power))


# conditional energy functional -------------------------------------------

@dataclass(frozen=True)
class ConditionalParams:
    K: float
    L: float
    M: float
    eta0: float
    A: float
    g_max: float
    cP: float
    cS: float
    cG: float
    nbar0: float
    chi: float
    c_grad_weight: float = field(default=0.0)  # K*(K*L + 1/2)
    c_l4_weight: float = field(default=0.0)
    f_factor: float = field(default=0.0)


def poincare_constant(grid: GridSpec) -> float:
    """Largest of the Neumann scalar and Dirichlet vector Poincare constants on the rectangle."""
    lam_neumann = math.pi ** 2 * min(1.0 / grid.lx ** 2, 1.0 / grid.ly ** 2)
    lam_dirichlet = math.pi ** 2 * (1.0 / grid.lx ** 2 + 1.0 / grid.ly ** 2)
    return max(1.0 / lam_neumann, 1.0 / lam_dirichlet)


def _test_library(grid: GridSpec) -> list[np.ndarray]:
    """64 fixed smooth fields: cosine modes, Gaussian bumps, smoothed fronts and mixtures."""
    x, y = grid.centers()
    X, Y = x / grid.lx, y / grid.ly
    lib = []
    for k, l in [(1, 0), (0, 1), (1, 1), (2, 0), (0, 2), (2, 1), (1, 2), (2, 2),
                 (3, 0), (0, 3), (3, 1), (1, 3), (3, 3), (4, 0), (4, 4), (5, 2)]:
        lib.append(np.cos(k * np.pi * X) * np.cos(l * np.pi * Y))
    for cx, cy in [(0.5, 0.5), (0.0, 0.0), (0.0, 0.5), (0.25, 0.75)]:
        for width in (0.05, 0.1, 0.2, 0.4):
            lib.append(np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / (2 * width ** 2)))
    for pos in (0.25, 0.5):
        for width in (0.02, 0.05, 0.1, 0.2):
            lib.append(np.tanh((X - pos) / width))
            lib.append(np.tanh((X + Y - 2 * pos) / width))
    rng = np.random.default_rng(20240101)
    while len(lib) < 64:
        coef = rng.standard_normal((4, 4)) / (1.0 + np.add.outer(np.arange(4), np.arange(4)))
        f = sum(coef[k, l] * np.cos(k * np.pi * X) * np.cos(l * np.pi * Y)
                for k in range(4) for l in range(4) if k + l > 0)
        lib.append(f)
    return lib[:64]


def sobolev_ratio(a: np.ndarray, grid: GridSpec) -> float:
    """``int (a - mean)^2 / (int |grad a|)^2`` with face-averaged gradient magnitude at cells."""
    vol = grid.cell_volume
    mean = total(a) * vol / grid.area
    gx = np.diff(np.pad(a, ((1, 1), (0, 0)), mode="edge"), axis=0) / grid.dx
    gy = np.diff(np.pad(a, ((0, 0), (1, 1)), mode="edge"), axis=1) / grid.dy
    cx = 0.5 * (gx[1:] + gx[:-1])
    cy = 0.5 * (gy[:, 1:] + gy[:, :-1])
    tv = total(np.hypot(cx, cy)) * vol
    return total((a - mean) ** 2) * vol / (tv * tv)


def gagliardo_ratio(a: np.ndarray, grid: GridSpec) -> float:
    """``int |grad a|^4 / (int |lap a|^2 * int |grad a|^2)`` for Neumann data."""
    vol = grid.cell_volume
    gx = np.diff(np.pad(a, ((1, 1), (0, 0)), mode="edge"), axis=0) / grid.dx
    gy = np.diff(np.pad(a, ((0, 0), (1, 1)), mode="edge"), axis=1) / grid.dy
    cx = 0.5 * (gx[1:] + gx[:-1])
    cy = 0.5 * (gy[:, 1:] + gy[:, :-1])
    g2 = cx * cx + cy * cy
    lap = lap_neumann(a, grid.dx, grid.dy)
    return total(g2 * g2) * vol / (total(lap * lap) * vol * total(g2) * vol)


def estimate_embedding_constants(grid: GridSpec) -> tuple[float, float]:
    """Doubled maxima of the Sobolev and Gagliardo-Nirenberg ratios over the test library.

    Evaluated on a 64x64 grid of the same rectangle so the constants do not drift
    with the simulation resolution.
    """
    probe = GridSpec(64, 64, grid.lx, grid.ly)
    lib = _test_library(probe)
    cs = max(sobolev_ratio(f, probe) for f in lib)
    cg = max(gagliardo_ratio(f, probe) for f in lib)
    return 2.0 * cs, 2.0 * cg


def g_function(spec: SensitivitySpec, K: float, s: np.ndarray) -> np.ndarray:
    """``K (f(s)/s)^2 + f(s)/s + |f'(s)|``."""
    r = spec.ratio(s)
    return K * r * r + r + np.abs(spec.derivative(s))


def conditional_parameters(grid: GridSpec, chi: float, n0_mass: float, c0_inf: float,
                           spec: SensitivitySpec, phi_grad_sup: float = 0.0,
                           samples: int = 20001) -> ConditionalParams:
    """Weights ``K, L, M``, cutoff ``A`` and threshold ``eta0`` of the conditional functional."""
    if not spec.flat_at_origin:
        raise ConditionalHypothesisError(
            "f'(0) = 0 required: the conditional energy functional is not available for this f")
    area = grid.area
    nbar = n0_mass / area
    cP = poincare_constant(grid)
    cS, cG = estimate_embedding_constants(grid)
    K = 16.0 * cP * chi ** 2 * nbar
    s = np.linspace(0.0, c0_inf, samples)
    gs = g_function(spec, K, s)
    g_max = float(np.max(gs))
    threshold = 1.0 / (16.0 * cP * nbar)
    above = np.nonzero(gs > threshold)[0]
    if len(above) == 0:
        A = float(c0_inf)
    elif above[0] <= 1:
        raise SmallnessError(
            f"no A > 0 with g <= 1/(16 cP nbar0) = {threshold:.4g} on [0, A]")
    else:
        A = float(s[above[0] - 1])
    L = 2.0 * cP * cS * phi_grad_sup ** 2 * n0_mass + 1.0
    M = 2.0 * K * g_max * nbar / (A * A)
    c5 = K * (K * L + 0.5)
    c6 = 2.0 * cS * area * nbar * (K * g_max + chi ** 2) ** 2
    c7 = 2.0 * cG * (c5 + c6) / K
    eta0 = K / (8.0 * c7)
    return ConditionalParams(K=K, L=L, M=M, eta0=eta0, A=A, g_max=g_max, cP=cP, cS=cS, cG=cG,
                             nbar0=nbar, chi=chi, c_grad_weight=c5, c_l4_weight=c6, f_factor=c7)


def conditional_functional(state: State, params: ConditionalParams, c0_inf: float) -> float:
    """``int n ln(n/nbar0) + K/2 int|grad w|^2 + 1/(2L) int|u|^2 + M/2 int c^2``."""
    g = state.grid
    vol = g.cell_volume
    w = -np.log(state.c / c0_inf)
    ent = relative_entropy(state.n, params.nbar0, vol)
    kin = kinetic_energy(state.u.x, state.u.y, vol)
    return (ent + 0.5 * params.K * face_dirichlet(w, g.dx, g.dy) + kin / params.L
            + 0.5 * params.M * total(state.c * state.c) * vol)
