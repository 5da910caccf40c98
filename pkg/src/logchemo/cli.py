"""Command-line entry point: ``logchemo {run,preset,sweep-eps,oracle,check}``.

The exit status is 0 exactly when every asserted margin passed.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .config import SimConfig
from .diagnostics import ConditionalHypothesisError, ReportParams, evaluate_report
from .driver import SimulationAborted, Simulator, epsilon_family, eventual_smallness_search
from .grid import GridSpec, MacVelocity
from .io import (PRESET_NAMES, check_csv, check_reports, emit_heatmap, emit_timeseries,
                 format_config, load_config, preset)
from .oracle import agreement, brute_force_report, homogeneous_ode
from .state import State

log = logging.getLogger("logchemo")


def _print_checks(results) -> bool:
    ok = True
    for name, passed, detail in results:
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
        ok &= bool(passed)
    return ok


def _write_outputs(summary, out: Path | None, cfg: SimConfig):
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    emit_timeseries(summary, out / "timeseries.csv")
    (out / "config.ini").write_text(format_config(cfg))
    st = summary.final_state
    emit_heatmap(st.n, out / "n_final.pgm", (float(np.min(st.n)), float(np.max(st.n)) + 1e-300))
    emit_heatmap(st.c, out / "c_final.pgm", (0.0, cfg.species.c0_inf))
    info = {
        "t_final": st.t,
        "accepted": summary.accepted,
        "rejected": summary.rejected,
        "wall_time": summary.wall_time,
        "checksum": summary.checksum,
        "stabilization_time": summary.stabilization_time,
        "t_below_eta0": summary.t_below_eta0,
        "t_below_0.9eta0": summary.t_search,
        "initial_metrics": summary.initial_metrics,
        "final_metrics": summary.final_metrics,
        "aborted": summary.aborted,
    }
    (out / "summary.json").write_text(json.dumps(info, indent=2) + "\n")


def _run_config(cfg: SimConfig, out: Path | None) -> bool:
    try:
        if cfg.run.conditional:
            res = eventual_smallness_search(cfg)
            summary = res.summary
            print(f"eta0 = {res.eta0:.6g}; t0 (cond_F < 0.9 eta0) = {res.t0}")
            monotone = ("conditional monotonicity", res.monotone_ok,
                        f"max excess after t0 {res.max_excess:.3e} (allowed {1e-3 * res.eta0:.3e})")
        else:
            summary = Simulator(cfg).run()
            monotone = None
    except SimulationAborted as err:
        print(f"FAIL  run aborted: {err}")
        if err.summary is not None:
            _write_outputs(err.summary, out, cfg)
        return False
    except ConditionalHypothesisError as err:
        print(f"FAIL  {err}")
        return False
    print(f"t = {summary.final_time:.6g}, accepted {summary.accepted}, rejected {summary.rejected}, "
          f"wall {summary.wall_time:.1f}s, checksum {summary.checksum[:16]}")
    print(f"stabilization time: {summary.stabilization_time}")
    _write_outputs(summary, out, cfg)
    checks = check_reports(summary.reports)
    if monotone is not None:
        checks.append(monotone)
    tr = summary.traces
    if "qe_lhs" in tr and len(tr["qe_lhs"]) > 1:
        m = tr["qe_rhs"][1:] - tr["qe_lhs"][1:] + tr["qe_slack"][1:]
        checks.append(("quasi-energy (every step)", bool(np.min(m) >= 0), f"min margin + slack {np.min(m):.3e}"))
        checks.append(("positivity (every step)", bool(np.min(tr["min_n"]) >= 0 and np.min(tr["min_c"]) > 0),
                       f"min n {np.min(tr['min_n']):.3e}, min c {np.min(tr['min_c']):.3e}"))
    return _print_checks(checks)


def _sweep(cfg: SimConfig, eps_list, out: Path | None) -> bool:
    tab = epsilon_family(cfg, eps_list)
    print("eps        dist_n            dist_c            dist_u")
    for k, row in enumerate(tab.rows):
        if k == 0:
            print(f"{row.eps:<10.3g} {'-':>17} {'-':>17} {'-':>17}" + ("  FAILED" if row.failed else ""))
            continue
        print(f"{row.eps:<10.3g} {tab.dist_n[k - 1]:17.6e} {tab.dist_c[k - 1]:17.6e} "
              f"{tab.dist_u[k - 1]:17.6e}" + ("  FAILED" if row.failed else ""))
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        for row in tab.rows:
            if row.summary is not None:
                emit_timeseries(row.summary, out / f"timeseries_eps{row.eps:g}.csv")
    failed = [r.eps for r in tab.rows if r.failed]
    d = tab.dist_n
    decreasing = all(b < a for a, b in zip(d, d[1:])) and all(math.isfinite(x) for x in d)
    masses = [r.mass_trace for r in tab.rows if r.summary is not None]
    spread = max((float(np.max(np.abs(m - masses[0]))) for m in masses), default=0.0)
    return _print_checks([
        ("all runs completed", not failed, f"failed eps: {failed}" if failed else "ok"),
        ("n distances strictly decreasing", decreasing, ", ".join(f"{x:.3e}" for x in d)),
        ("mass traces identical", spread <= 1e-12, f"max spread {spread:.3e}"),
    ])


def _oracle(cfg: SimConfig, samples: int = 100) -> bool:
    checks = []
    # homogeneous reduction with the configured sensitivity
    hom = cfg.with_(grid=GridSpec(8, 8), init__n="constant", init__n_mean=1.0, init__c="constant",
                    init__c_value=cfg.species.c0_inf, init__u="zero", fluid__phi="zero",
                    run__t_end=1.0, run__dt_max=1e-3, run__track=False, run__conditional=False)
    sim = Simulator(hom).run()
    c_sim = float(np.mean(sim.final_state.c))
    c_ref = homogeneous_ode(1.0, cfg.species.c0_inf, cfg.sensitivity, 1.0)
    rel = abs(c_sim - c_ref) / c_ref
    checks.append(("homogeneous ODE", rel <= 1e-4, f"c(1) sim {c_sim:.10g} vs exact {c_ref:.10g} (rel {rel:.2e})"))

    # brute-force quadrature on random small states
    rng = np.random.default_rng(cfg.run.seed)
    g = GridSpec(8, 8)
    worst = 0.0
    worst_key = ""
    c0 = cfg.species.c0_inf
    for _ in range(samples):
        n = rng.uniform(0.1, 3.0, g.shape)
        c = rng.uniform(0.05 * c0, c0, g.shape)
        ux = np.zeros((9, 8))
        uy = np.zeros((8, 9))
        ux[1:-1] = rng.standard_normal((7, 8))
        uy[:, 1:-1] = rng.standard_normal((8, 7))
        u = MacVelocity(g, ux, uy)
        prev = State(g, 0.0, n * rng.uniform(0.9, 1.1, g.shape), c * rng.uniform(0.9, 1.0, g.shape), u)
        st = State(g, 0.01, n, c, u)
        nbar = float(np.mean(n))
        params = ReportParams(g, cfg.species.chi, cfg.species.eps, c0, nbar, cfg.sensitivity)
        rep = evaluate_report(st, params, prev, 0.01)
        ref = brute_force_report(st, cfg.species.chi, c0, nbar, cfg.sensitivity, None, prev, 0.01)
        for k, v in agreement(rep, ref).items():
            if v > worst:
                worst, worst_key = v, k
    checks.append(("brute-force agreement", worst <= 1e-12,
                   f"max relative disagreement {worst:.2e} ({worst_key or 'all exact'}) over {samples} states"))
    return _print_checks(checks)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="logchemo", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="run a config file")
    p.add_argument("config")
    p.add_argument("--out", type=Path)

    p = sub.add_parser("preset", help="run a named experiment")
    p.add_argument("name", help=", ".join(PRESET_NAMES))
    p.add_argument("--out", type=Path)
    p.add_argument("--show", action="store_true", help="print the preset config and exit")

    p = sub.add_parser("sweep-eps", help="epsilon-family convergence table")
    p.add_argument("config")
    p.add_argument("--eps", required=True, help="comma-separated, non-increasing")
    p.add_argument("--out", type=Path)

    p = sub.add_parser("oracle", help="oracle agreement suite for a config")
    p.add_argument("config")
    p.add_argument("--samples", type=int, default=100)

    p = sub.add_parser("check", help="re-validate margins in a stored time series")
    p.add_argument("csv")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.verb == "run":
            ok = _run_config(load_config(args.config), args.out)
        elif args.verb == "preset":
            cfg = preset(args.name)
            if args.show:
                sys.stdout.write(format_config(cfg))
                return 0
            if cfg.run.eps_list:
                ok = _sweep(cfg, cfg.run.eps_list, args.out)
            else:
                ok = _run_config(cfg, args.out)
        elif args.verb == "sweep-eps":
            eps = [float(x) for x in args.eps.split(",") if x.strip()]
            ok = _sweep(load_config(args.config), eps, args.out)
        elif args.verb == "oracle":
            ok = _oracle(load_config(args.config), args.samples)
        else:
            ok = _print_checks(check_csv(args.csv))
    except (KeyError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
