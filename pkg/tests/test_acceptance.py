"""Acceptance suite: one test per exit criterion, one PASS line each.

Run with `pytest tests/test_acceptance.py -v -s`. The closed-loop runs are
shared module-scoped fixtures; per-criterion runtime budgets are asserted
where stated.
"""

import itertools
import os
import time

import numpy as np
import pytest
from scipy.optimize import linprog

from tubesteer.dynamics import (
    PlantState,
    brush_tire_force,
    plant_derivative,
    tire_saturation_angle,
)
from tubesteer.envelope import assemble_stab_constraints
from tubesteer.ltv import build_prediction_models
from tubesteer.metrics import compute_metrics
from tubesteer.outputs import run_csv_text
from tubesteer.params import ErrorState, TimeGrid, VehicleParams
from tubesteer.qp import solve_qp
from tubesteer.scenario import load_scenario
from tubesteer.simulate import CSV_COLUMNS, run_scenario

SCENARIO_DIR = os.path.join(os.path.dirname(__file__), "..", "scenarios")
GRID = TimeGrid()
PARAMS = VehicleParams()


def report(criterion: str, detail: str = ""):
    print(f"\nPASS {criterion}" + (f"  [{detail}]" if detail else ""))


def load(name):
    return load_scenario(os.path.join(SCENARIO_DIR, name))


def timed_run(config, **kw):
    t0 = time.perf_counter()
    log = run_scenario(config, **kw)
    return log, time.perf_counter() - t0


@pytest.fixture(scope="module")
def s1_rmpc():
    return timed_run(load("s1_obstacle_at_horizon.cfg"), collect_debug=True)


@pytest.fixture(scope="module")
def s1_dmpc():
    import dataclasses

    cfg = dataclasses.replace(load("s1_obstacle_at_horizon.cfg"), mode="dmpc")
    return timed_run(cfg, collect_debug=True)


@pytest.fixture(scope="module")
def s2_rmpc():
    return timed_run(load("s2_popup.cfg"), collect_debug=True)


@pytest.fixture(scope="module")
def s2_dmpc():
    import dataclasses

    cfg = dataclasses.replace(load("s2_popup.cfg"), mode="dmpc")
    return timed_run(cfg, collect_debug=True)


@pytest.fixture(scope="module")
def s3_rmpc():
    return timed_run(load("s3_popup_low_friction.cfg"), collect_debug=True)


def test_criterion_1_tire_boundary():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    for _ in range(100):
        C = rng.uniform(20000.0, 80000.0)
        mu = rng.uniform(0.2, 1.0)
        Fz = rng.uniform(1500.0, 5000.0)
        a_sat = tire_saturation_angle(C, mu, Fz)
        F_at = brush_tire_force(a_sat, C, mu, Fz)
        assert abs(F_at + mu * Fz) <= 1e-9 * mu * Fz
        eps = 1e-7
        slope = (F_at - brush_tire_force(a_sat - eps, C, mu, Fz)) / eps
        assert abs(slope) <= 1e-6 * C
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    report("criterion 1 (tire boundary)", f"{elapsed:.2f}s")


def test_criterion_2_cp_invariance():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    kappa = lambda s: 0.0
    for _ in range(1000):
        st8 = PlantState(y_dot=rng.uniform(-3, 3), phi_dot=rng.uniform(-0.5, 0.5),
                         e_phi=rng.uniform(-0.4, 0.4), e_y=rng.uniform(-3, 3),
                         s_d=rng.uniform(0, 100), x=0, y=0, phi=rng.uniform(-1, 1))
        delta = rng.uniform(-0.3, 0.3)
        lo = plant_derivative(st8, delta, 18.0, PARAMS, 0.55, kappa,
                              rear_force_extra=-500.0)
        hi = plant_derivative(st8, delta, 18.0, PARAMS, 0.55, kappa,
                              rear_force_extra=500.0)
        d_ydd = (hi[0] - lo[0])          # CG accel responds strongly
        d_ydd_p = (hi[0] + PARAMS.p * hi[1]) - (lo[0] + PARAMS.p * lo[1])
        assert abs(d_ydd) > 1.0          # the perturbation is really felt
        assert abs(d_ydd_p) / abs(d_ydd) < 1e-10
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    report("criterion 2 (CP invariance)", f"{elapsed:.2f}s")


def rk4_affine(A, B, L, x0, u, dt, substeps=1000):
    x = x0.astype(float).copy()
    h = dt / substeps
    f = lambda v: A @ v + B.ravel() * u + L.ravel()
    for _ in range(substeps):
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def test_criterion_3_zoh_oracle():
    t0 = time.perf_counter()
    cfg = load("s1_obstacle_at_horizon.cfg")
    states = [ErrorState(), ErrorState(ydot_p=0.8, phidot=0.1, e_phi=0.05,
                                       e_y=1.2, s_d=30.0)]
    checked_dts = set()
    for meas in states:
        models = build_prediction_models(meas, None, None, cfg.speed,
                                         cfg.params.with_mu(cfg.mu_controller),
                                         cfg.grid, cfg.path.curvature_at)
        x0 = np.array([0.4, 0.08, 0.02, 0.6, meas.s_d])
        for mdl in models[25:29]:  # covers the short/long step boundary
            checked_dts.add(mdl.dt)
            x_d = mdl.A_d @ x0 + mdl.B_d.ravel() * 500.0 + mdl.L_d.ravel()
            x_rk = rk4_affine(mdl.A, mdl.B, mdl.L, x0, 500.0, mdl.dt)
            err = np.max(np.abs(x_d - x_rk)) / max(1.0, np.linalg.norm(x_rk))
            assert err < 1e-8
    assert checked_dts == {0.03, 0.2}
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0
    report("criterion 3 (ZOH vs RK4 oracle)", f"{elapsed:.2f}s")


def _h_oracles(transitions, hw, depth):
    """Tightening via per-term LP over the box and 2^5-vertex brute force."""
    verts = hw * np.array(list(itertools.product([-1.0, 1.0], repeat=5)))
    bounds = [(-w, w) for w in hw]
    rows = {"hi": np.zeros(5), "lo": np.zeros(5)}
    rows["hi"][3] = 1.0
    rows["lo"][3] = -1.0
    h_lp = {k: np.zeros(depth + 1) for k in rows}
    h_bf = {k: np.zeros(depth + 1) for k in rows}
    for key, row in rows.items():
        for i in range(1, depth + 1):
            lp_total = 0.0
            bf_total = 0.0
            for m in range(i):
                chain = np.eye(5)
                for j in range(m + 1, i):
                    chain = transitions[j] @ chain
                c = row @ chain
                res = linprog(-c, bounds=bounds, method="highs")
                assert res.success
                lp_total += -res.fun
                bf_total += float(np.max(verts @ c))
            h_lp[key][i] = lp_total
            h_bf[key][i] = bf_total
    return h_lp, h_bf


def test_criterion_4_tightening_oracle(s2_rmpc):
    t0 = time.perf_counter()
    log, _ = s2_rmpc
    cfg = log.config
    hw = cfg.W.half_widths
    steps = log.debug[:50]
    assert len(steps) == 50
    for entry in steps:
        assert entry["lp_count"] == 4 * cfg.grid.N_c + 2 == 42
    # full oracle on a subset (LP volume), exact equality on every checked h
    for entry in steps[::7]:
        tube = entry["tube"]
        h_lp, h_bf = _h_oracles(entry["transitions"], hw, cfg.grid.N_c)
        for i in range(cfg.grid.N_c + 1):
            assert abs(tube.h_hi[i] - h_lp["hi"][i]) < 1e-9
            assert abs(tube.h_hi[i] - h_bf["hi"][i]) < 1e-9
            assert abs(tube.h_lo[i] - h_lp["lo"][i]) < 1e-9
            assert abs(tube.h_lo[i] - h_bf["lo"][i]) < 1e-9
    # cheap vertex oracle on every one of the 50 steps
    verts = hw * np.array(list(itertools.product([-1.0, 1.0], repeat=5)))
    for entry in steps:
        tube = entry["tube"]
        trans = entry["transitions"]
        row = np.zeros(5)
        row[3] = 1.0
        for i in range(1, cfg.grid.N_c + 1):
            total = 0.0
            for m in range(i):
                chain = np.eye(5)
                for j in range(m + 1, i):
                    chain = trans[j] @ chain
                total += float(np.max(verts @ (row @ chain)))
            assert abs(tube.h_hi[i] - total) < 1e-9
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0
    report("criterion 4 (tightening oracle, 42 LPs/step)", f"{elapsed:.2f}s")


def cvxopt_objective(P, q, G, h):
    from cvxopt import matrix, solvers

    solvers.options["show_progress"] = False
    solvers.options["abstol"] = 1e-10
    solvers.options["reltol"] = 1e-10
    sol = solvers.qp(matrix(P), matrix(q), matrix(G), matrix(h))
    z = np.array(sol["x"]).ravel()
    return float(0.5 * z @ P @ z + q @ z)


def test_criterion_5_qp_correctness(s1_rmpc, s1_dmpc, s2_rmpc, s2_dmpc, s3_rmpc):
    t0 = time.perf_counter()
    worst = 0.0
    sampled = []
    for log, _ in (s1_rmpc, s1_dmpc, s2_rmpc, s2_dmpc, s3_rmpc):
        for entry in log.debug:
            worst = max(worst, *entry["kkt"])
            if "qp" in entry:
                sampled.append(entry["qp"])
    assert worst <= 1e-6
    assert len(sampled) >= 20
    for qp in sampled[:20]:
        mine = solve_qp(qp.P, qp.q, qp.G, qp.h)
        ref = cvxopt_objective(qp.P, qp.q, qp.G, qp.h)
        assert abs(mine.objective - ref) / max(1.0, abs(ref)) < 1e-4
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0
    report("criterion 5 (QP KKT + cross-check)",
           f"worst kkt {worst:.2e}, {len(sampled)} sampled, {elapsed:.1f}s")


def test_criterion_6_scenario1_both_modes(s1_rmpc, s1_dmpc):
    m_r = compute_metrics(s1_rmpc[0])
    m_d = compute_metrics(s1_dmpc[0])
    assert not m_r["collision"] and m_r["min_clearance"] > 0.0
    assert not m_d["collision"] and m_d["min_clearance"] > 0.0
    assert m_r["overshoot"] < m_d["overshoot"]
    report("criterion 6 (scenario 1)",
           f"clearance rmpc {m_r['min_clearance']:.2f} / dmpc {m_d['min_clearance']:.2f}; "
           f"overshoot rmpc {m_r['overshoot']:.3f} < dmpc {m_d['overshoot']:.3f}")


def test_criterion_7_scenario2_popup(s2_rmpc, s2_dmpc):
    log, _ = s2_rmpc
    m = compute_metrics(log)
    assert not m["collision"] and m["min_clearance"] > 0.0
    s_d = log.column("s_d")
    ey = log.column("e_y")
    s_end = max(ob.s_end for ob in log.config.obstacles)
    back = np.where((s_d > s_end) & (np.abs(ey) < 0.3))[0]
    assert back.size > 0
    assert s_d[back[0]] <= s_end + 150.0
    m_d = compute_metrics(s2_dmpc[0])  # recorded; expected to collide (non-binding)
    report("criterion 7 (scenario 2 pop-up)",
           f"rmpc clearance {m['min_clearance']:.2f}, back on path at "
           f"s_d {s_d[back[0]]:.0f} m; dmpc collision={m_d['collision']} (recorded)")


def test_criterion_8_scenario3_low_friction(s3_rmpc):
    log, _ = s3_rmpc
    m = compute_metrics(log)
    assert not m["collision"] and m["min_clearance"] > 0.0
    # report any road-boundary excursion
    ey = log.column("e_y")
    s_d = log.column("s_d")
    excursion = 0.0
    for e, s in zip(ey, s_d):
        right, left = log.config.road.at(s)
        excursion = max(excursion, e - left, right - e)
    report("criterion 8 (scenario 3 low friction)",
           f"clearance {m['min_clearance']:.2f}, road excursion "
           f"{max(excursion, 0.0):.3f} m")


def test_criterion_9_envelope_adherence(s1_rmpc):
    log, _ = s1_rmpc
    m = compute_metrics(log)
    assert m["eps_stab_zero_fraction"] >= 0.98
    stab = assemble_stab_constraints(log.config.params, log.config.speed,
                                     mu=log.config.mu_controller)
    states = np.zeros((len(log.rows), 5))
    states[:, 0] = log.column("ydot_p")
    states[:, 1] = log.column("phidot")
    inside = np.mean([stab.contains(x) for x in states])
    assert inside >= 0.98
    report("criterion 9 (envelope adherence)",
           f"slack-zero {m['eps_stab_zero_fraction']:.3f}, inside {inside:.3f}")


def test_criterion_10_real_time_budget(s1_rmpc):
    log, wall = s1_rmpc
    m = compute_metrics(log)
    assert m["solve_ms_p95"] < 30.0
    assert wall < 30.0
    report("criterion 10 (real-time budget)",
           f"p50 {m['solve_ms_p50']:.1f} ms, p95 {m['solve_ms_p95']:.1f} ms, "
           f"10 s scenario in {wall:.1f} s wall")


def test_criterion_11_determinism():
    cfg = load("s2_popup.cfg")
    a = run_csv_text(run_scenario(cfg, collect_models=False))
    b = run_csv_text(run_scenario(cfg, collect_models=False))

    def strip_solve_ms(text):
        lines = text.strip().split("\n")
        assert lines[0] == ",".join(CSV_COLUMNS)
        return "\n".join(",".join(ln.split(",")[:-1]) for ln in lines)

    # all physical and control columns are byte-identical; the solve_ms
    # column is wall-clock measurement noise by nature and excluded
    assert strip_solve_ms(a) == strip_solve_ms(b)
    report("criterion 11 (determinism)",
           f"{len(a.splitlines()) - 1} rows byte-identical (sans solve_ms)")
