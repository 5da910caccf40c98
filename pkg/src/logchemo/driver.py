"""Coupled time stepping and whole-experiment orchestration.

A step uses old-state couplings only: the fluid is advanced with the old ``n``,
the taxis drift comes from the old ``c``, ``n`` and ``c`` are transported by the
old velocity, and the consumption sink uses the old ``n``. A step that would
break positivity is retried with half the time step.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .config import SimConfig, initial_state
from .diagnostics import (ConditionalHypothesisError, ConditionalParams, FunctionalReport,
                          ReportParams, conditional_parameters, evaluate_report,
                          fluid_energy_residual, inequality_slack, kinetic_energy,
                          quasi_energy_rate, quasi_energy_terms, relative_entropy,
                          stabilization_metrics)
from .fluid import advance_u_array
from .grid import MacVelocity, total
from .state import State
from .taxis import (PositivityError, advance_c_array, advance_n_array, drift_faces,
                    outflow_rate)

log = logging.getLogger(__name__)


class SimulationAborted(RuntimeError):
    """Too many consecutive rejections; carries the last good state and the partial summary."""

    def __init__(self, message: str, state: State, summary: "RunSummary | None" = None):
        self.state = state
        self.summary = summary
        super().__init__(message)


@dataclass
class StepResult:
    state: State
    dt: float
    rejections: int


@dataclass
class RunSummary:
    config: SimConfig
    reports: list[FunctionalReport] = field(default_factory=list)
    accepted: int = 0
    rejected: int = 0
    wall_time: float = 0.0
    checksum: str = ""
    stabilization_time: float | None = None
    t_below_eta0: float | None = None
    t_search: float | None = None
    final_state: State | None = None
    initial_state: State | None = None
    traces: dict[str, np.ndarray] = field(default_factory=dict)
    snapshots: list[State] = field(default_factory=list)
    conditional: ConditionalParams | None = None
    initial_metrics: dict | None = None
    final_metrics: dict | None = None
    aborted: str | None = None

    @property
    def final_time(self) -> float:
        return self.final_state.t if self.final_state is not None else 0.0


class Simulator:
    """Holds the per-config constants (potential, report parameters) for stepping."""

    def __init__(self, config: SimConfig, conditional: bool | None = None):
        self.config = config
        g = config.grid
        self.grid = g
        phi = config.fluid.phi_field(g)
        self.phi = None if phi is None else phi.values
        self.state0 = initial_state(config)
        self.mass0 = total(self.state0.n) * g.cell_volume
        self.nbar0 = self.mass0 / g.area
        want_cond = config.run.conditional if conditional is None else conditional
        self.conditional = None
        if want_cond:
            self.conditional = conditional_parameters(
                g, config.species.chi, self.mass0, config.species.c0_inf,
                config.sensitivity, config.fluid.phi_grad_sup())
        self.report_params = ReportParams(
            grid=g, chi=config.species.chi, eps=config.species.eps,
            c0_inf=config.species.c0_inf, nbar0=self.nbar0,
            sensitivity=config.sensitivity, phi=self.phi, conditional=self.conditional)

    # time step -------------------------------------------------------------

    def cfl_dt(self, state: State) -> float:
        cfg = self.config
        g = self.grid
        sp = cfg.species
        vx, vy = drift_faces(state.c, state.n, sp.chi, sp.eps, g.dx, g.dy)
        ux, uy = state.u.x, state.u.y
        rate = max(float(np.max(outflow_rate(vx + ux, vy + uy, g.dx, g.dy))),
                   float(np.max(outflow_rate(ux, uy, g.dx, g.dy))))
        if not math.isfinite(rate):
            raise FloatingPointError("non-finite face speed in CFL estimate")
        limits = [cfg.run.dt_max]
        if rate > 0:
            limits.append(cfg.run.cfl_safety / rate)
        h2 = min(g.dx, g.dy) ** 2
        if not cfg.run.implicit_diffusion:
            limits.append(cfg.run.cfl_safety * h2 / 8.0)
        if cfg.fluid.mode != "none" and cfg.fluid.viscous == "explicit":
            limits.append(cfg.run.cfl_safety * h2 / 8.0)
        return min(limits)

    def try_step(self, state: State, dt: float) -> State:
        cfg = self.config
        g = self.grid
        sp = cfg.species
        implicit = cfg.run.implicit_diffusion
        n, c = state.n, state.c
        ux, uy = state.u.x, state.u.y
        vx, vy = drift_faces(c, n, sp.chi, sp.eps, g.dx, g.dy)
        if cfg.fluid.mode == "none":
            u_new = state.u
        else:
            nux, nuy, _ = advance_u_array(ux, uy, n, self.phi, cfg.fluid.mode, dt, g.dx, g.dy,
                                          cfg.fluid.poisson_tol, cfg.fluid.viscous)
            u_new = MacVelocity(g, nux, nuy)
        n_new = advance_n_array(n, vx + ux, vy + uy, dt, g.dx, g.dy, implicit)
        c_new = advance_c_array(c, n, ux, uy, cfg.sensitivity, dt, g.dx, g.dy, implicit)
        if not (np.all(np.isfinite(n_new)) and np.all(np.isfinite(c_new))):
            raise PositivityError("non-finite values after step", suggested_dt=0.5 * dt)
        return State(g, state.t + dt, n_new, c_new, u_new)

    def step(self, state: State, dt: float | None = None) -> StepResult:
        """Advance one accepted step, halving ``dt`` on positivity failure."""
        dt = self.cfl_dt(state) if dt is None else dt
        rejections = 0
        while True:
            try:
                return StepResult(self.try_step(state, dt), dt, rejections)
            except PositivityError as err:
                rejections += 1
                if rejections > self.config.run.max_halvings:
                    raise SimulationAborted(
                        f"step rejected {rejections} times at t={state.t:.6g}: {err}", state) from err
                log.debug("rejecting step at t=%g (dt=%g): %s", state.t, dt, err)
                dt *= 0.5

    def report(self, state: State, prev: State | None = None, dt: float | None = None):
        return evaluate_report(state, self.report_params, prev, dt)

    def cond_value(self, state: State, terms: dict) -> float:
        cp = self.conditional
        vol = self.grid.cell_volume
        return (relative_entropy(state.n, self.nbar0, vol) + 0.5 * cp.K * terms["dirichlet_w"]
                + kinetic_energy(state.u.x, state.u.y, vol) / cp.L
                + 0.5 * cp.M * total(state.c * state.c) * vol)

    # whole run -------------------------------------------------------------

    def run(self) -> RunSummary:
        cfg = self.config
        rc = cfg.run
        g = self.grid
        vol = g.cell_volume
        clock = time.perf_counter()
        summary = RunSummary(config=cfg, conditional=self.conditional)
        state = self.state0
        summary.initial_state = state
        summary.reports.append(self.report(state))
        if rc.snapshot_dt > 0:
            summary.snapshots.append(state)
            next_snap = rc.snapshot_dt
        else:
            next_snap = math.inf

        metrics0 = stabilization_metrics(state, self.nbar0)
        summary.initial_metrics = metrics0
        thresholds = {k: max(rc.stabilization_fraction * v, 1e-12) for k, v in metrics0.items()}

        tr: dict[str, list] = {k: [] for k in (
            "t", "dt", "mass_n", "min_n", "min_c", "max_c", "int_c", "qe_lhs", "qe_rhs",
            "qe_slack", "fluid_residual", "fluid_scale", "cond_F", "kinetic")}
        terms_prev = quasi_energy_terms(state.n, state.c, self.report_params) if rc.track else None
        cond_tracking = self.conditional is not None
        if cond_tracking:
            f0 = self.cond_value(state, terms_prev or quasi_energy_terms(state.n, state.c, self.report_params))
            if f0 < self.conditional.eta0:
                summary.t_below_eta0 = 0.0
            if f0 < 0.9 * self.conditional.eta0:
                summary.t_search = 0.0
        if rc.track:
            self._record(tr, state, 0.0, terms_prev, math.nan, math.nan, math.nan, math.nan, math.nan,
                         self.cond_value(state, terms_prev) if cond_tracking else math.nan)

        stop_at = None
        eps_t = 1e-12 * max(1.0, rc.t_end)
        try:
            while state.t < rc.t_end - eps_t:
                if stop_at is not None and state.t >= stop_at - eps_t:
                    break
                dt = self.cfl_dt(state)
                horizon = min(rc.t_end, next_snap)
                if state.t + dt > horizon - eps_t:
                    dt = horizon - state.t
                res = self.step(state, dt)
                summary.rejected += res.rejections
                prev, state = state, res.state
                if abs(state.t - next_snap) <= eps_t:
                    state = State(g, next_snap, state.n, state.c, state.u)
                summary.accepted += 1
                if rc.track:
                    terms = quasi_energy_terms(state.n, state.c, self.report_params)
                    lhs, rhs_old, scale = quasi_energy_rate(terms_prev, terms, res.dt, cfg.species.chi)
                    if cfg.fluid.mode != "none":
                        fr, fs = fluid_energy_residual(prev.u.x, prev.u.y, state.u.x, state.u.y,
                                                       prev.n, self.phi, res.dt, g)
                    else:
                        fr, fs = 0.0, 0.0
                    cond = self.cond_value(state, terms) if cond_tracking else math.nan
                    self._record(tr, state, res.dt, terms, lhs, rhs_old,
                                 inequality_slack(res.dt, g.dx, scale), fr, fs, cond)
                    terms_prev = terms
                    if cond_tracking:
                        if summary.t_below_eta0 is None and cond < self.conditional.eta0:
                            summary.t_below_eta0 = state.t
                        if summary.t_search is None and cond < 0.9 * self.conditional.eta0:
                            summary.t_search = state.t
                if summary.accepted % rc.report_every == 0:
                    rep = self.report(state, prev, res.dt)
                    summary.reports.append(rep)
                    if cond_tracking and not rc.track:
                        if summary.t_below_eta0 is None and rep.cond_F < self.conditional.eta0:
                            summary.t_below_eta0 = state.t
                        if summary.t_search is None and rep.cond_F < 0.9 * self.conditional.eta0:
                            summary.t_search = state.t
                    if summary.stabilization_time is None:
                        m = stabilization_metrics(state, self.nbar0)
                        if all(m[k] <= thresholds[k] for k in m):
                            summary.stabilization_time = state.t
                            if rc.stop_on_stabilization:
                                stop_at = state.t + rc.grace
                if abs(state.t - next_snap) <= eps_t:
                    summary.snapshots.append(state)
                    next_snap += rc.snapshot_dt
        except SimulationAborted as err:
            summary.aborted = str(err)
            err.summary = self._finish(summary, state, tr, clock)
            raise
        return self._finish(summary, state, tr, clock)

    def _record(self, tr, state, dt, terms, lhs, rhs, slack, fr, fs, cond):
        vol = self.grid.cell_volume
        tr["t"].append(state.t)
        tr["dt"].append(dt)
        tr["mass_n"].append(total(state.n) * vol)
        tr["min_n"].append(float(np.min(state.n)))
        tr["min_c"].append(float(np.min(state.c)))
        tr["max_c"].append(float(np.max(state.c)))
        tr["int_c"].append(total(state.c) * vol)
        tr["qe_lhs"].append(lhs)
        tr["qe_rhs"].append(rhs)
        tr["qe_slack"].append(slack)
        tr["fluid_residual"].append(fr)
        tr["fluid_scale"].append(fs)
        tr["cond_F"].append(cond)
        tr["kinetic"].append(kinetic_energy(state.u.x, state.u.y, vol))

    def _finish(self, summary: RunSummary, state: State, tr, clock) -> RunSummary:
        summary.final_state = state
        summary.checksum = state.checksum()
        summary.traces = {k: np.asarray(v, dtype=float) for k, v in tr.items() if v}
        summary.final_metrics = stabilization_metrics(state, self.nbar0)
        summary.wall_time = time.perf_counter() - clock
        return summary


# module-level API ---------------------------------------------------------

def cfl_dt(state: State, config: SimConfig) -> float:
    return Simulator(config, conditional=False).cfl_dt(state)


def step(state: State, config: SimConfig) -> State:
    return Simulator(config, conditional=False).step(state).state


def run(config: SimConfig) -> RunSummary:
    return Simulator(config).run()


# epsilon family -----------------------------------------------------------

@dataclass
class EpsilonRow:
    eps: float
    summary: RunSummary | None
    failed: str | None = None

    @property
    def mass_trace(self) -> np.ndarray:
        return np.array([r.mass_n for r in self.summary.reports])


@dataclass
class EpsilonTable:
    rows: list[EpsilonRow]
    dist_n: list[float]
    dist_c: list[float]
    dist_u: list[float]


def _spacetime_l1(a: list[State], b: list[State], which: str) -> float:
    if len(a) != len(b) or any(abs(x.t - y.t) > 1e-9 for x, y in zip(a, b)):
        raise ValueError("snapshot times differ between runs")
    vol = a[0].grid.cell_volume
    vals = []
    for x, y in zip(a, b):
        if which == "n":
            d = total(np.abs(x.n - y.n)) * vol
        elif which == "c":
            d = total(np.abs(x.c - y.c)) * vol
        else:
            dx = 0.5 * ((x.u.x - y.u.x)[:-1] + (x.u.x - y.u.x)[1:])
            dy = 0.5 * ((x.u.y - y.u.y)[:, :-1] + (x.u.y - y.u.y)[:, 1:])
            d = total(np.hypot(dx, dy)) * vol
        vals.append(d)
    t = np.array([x.t for x in a])
    v = np.array(vals)
    return float(np.sum(0.5 * (v[1:] + v[:-1]) * np.diff(t)))


def epsilon_family(config: SimConfig, eps_list, snapshot_dt: float | None = None) -> EpsilonTable:
    """Run the same data for each regularisation ``eps`` and tabulate consecutive distances."""
    eps_list = [float(e) for e in eps_list]
    pos = [e for e in eps_list if e > 0]
    if any(b > a for a, b in zip(eps_list, eps_list[1:])) or any(e < 0 for e in eps_list):
        raise ValueError("eps_list must be non-increasing and nonnegative")
    if len(pos) < len(eps_list) - 1 or (eps_list and eps_list[-1] < 0):
        raise ValueError("only the last entry may be 0")
    snap = snapshot_dt if snapshot_dt is not None else (config.run.snapshot_dt or config.run.t_end / 100)
    rows = []
    for e in eps_list:
        cfg = config.with_(species__eps=e, run__snapshot_dt=snap)
        try:
            rows.append(EpsilonRow(e, run(cfg)))
        except SimulationAborted as err:
            rows.append(EpsilonRow(e, err.summary, failed=str(err)))
    dn, dc, du = [], [], []
    for a, b in zip(rows, rows[1:]):
        if a.failed or b.failed:
            dn.append(math.nan)
            dc.append(math.nan)
            du.append(math.nan)
            continue
        sa, sb = a.summary.snapshots, b.summary.snapshots
        dn.append(_spacetime_l1(sa, sb, "n"))
        dc.append(_spacetime_l1(sa, sb, "c"))
        du.append(_spacetime_l1(sa, sb, "u"))
    return EpsilonTable(rows, dn, dc, du)


# eventual smallness -------------------------------------------------------

@dataclass
class SmallnessResult:
    t0: float | None
    eta0: float
    times: np.ndarray
    cond_F: np.ndarray
    max_excess: float
    monotone_ok: bool
    summary: RunSummary


def eventual_smallness_search(config: SimConfig, slack_fraction: float = 1e-3) -> SmallnessResult:
    """Run until the conditional functional drops below ``0.9 eta0`` and check it stays down."""
    if not config.sensitivity.flat_at_origin:
        raise ConditionalHypothesisError(
            "f'(0) = 0 required: eventual-smallness search needs the conditional functional")
    cfg = config.with_(run__conditional=True, run__track=True)
    summary = Simulator(cfg).run()
    cp = summary.conditional
    t = summary.traces["t"]
    F = summary.traces["cond_F"]
    t0 = summary.t_search
    excess = -math.inf
    ok = True
    if t0 is not None:
        k0 = int(np.searchsorted(t, t0 - 1e-12))
        excess = float(np.max(F[k0:] - F[k0]))
        ok = excess <= slack_fraction * cp.eta0
    return SmallnessResult(t0, cp.eta0, t, F, excess, ok, summary)
