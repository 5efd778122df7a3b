"""Receding-horizon steering controller: ancillary gains, QP, command.

Each execution builds the LTV prediction models, computes time-varying
LQR feedback gains over the stabilizable states, constructs the tightened
lateral corridor, assembles the soft-constrained QP in normalized
variables, and converts the optimal front-force input into a steering
angle through the inverse tire model.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .dynamics import inverse_tire_force
from .envelope import StabConstraints, assemble_stab_constraints
from .ltv import StepModel, build_prediction_models, rear_slip_from_state
from .params import GRAVITY, ErrorState, TimeGrid, VehicleParams
from .path import ReferencePath, RoadBounds
from .qp import QpResult, solve_qp
from .tube import DisturbanceSet, Obstacle, TubeBounds, build_tube, error_transition

N_STAB = 4
STEERING_LIMIT = math.radians(30.0)
DU_MAX = 12000.0  # N/s, input rate limit


@dataclass(frozen=True)
class WeightSet:
    """Objective weights plus the normalization scales they apply to."""

    Q: tuple = (1.0, 1.0, 1.0, 5.0, 0.0)
    R: float = 4.0
    S: float = 4.0
    lam_coll: float = 1e5
    lam_stab: tuple = (500.0, 500.0, 1e5, 1e5)
    ey_max: float = 3.8
    dphi_max: float = 0.2
    uyp_factor: float = 0.2     # max expected lateral velocity, fraction of x_dot_p
    r_max_factor: float = 0.9   # max expected yaw rate, fraction of mu*g/x_dot_p


AVOIDANCE_WEIGHTS = WeightSet()
TRACKING_WEIGHTS = WeightSet(Q=(1.0, 5.0, 1.0, 10.0, 0.0),
                             lam_stab=(5e4, 5e4, 1e6, 1e6), ey_max=3.1)


def state_scales(weights: WeightSet, mu: float, x_dot_p: float) -> np.ndarray:
    """Per-state normalization scales [ydot_p, phidot, e_phi, e_y, s_d]."""
    return np.array([
        weights.uyp_factor * x_dot_p,
        weights.r_max_factor * mu * GRAVITY / x_dot_p,
        weights.dphi_max,
        weights.ey_max,
        1.0,
    ])


def solve_dare_iterated(A: np.ndarray, B: np.ndarray, Q: np.ndarray, R: float,
                        warm: np.ndarray | None = None, tol: float = 1e-10,
                        max_iter: int = 10000) -> tuple[np.ndarray, np.ndarray]:
    """Steady-state discrete Riccati solution by backward recursion.

    Iterates the finite-horizon backward pass to its fixed point and
    returns (P, K) with the closed-loop convention u = K x. A warm-start
    value matrix cuts the iteration count sharply across controller steps.
    """
    P = Q.copy() if warm is None else warm.copy()
    AT, BT = A.T, B.T
    for _ in range(max_iter):
        PB = P @ B
        S = R + (BT @ PB).item()
        K_row = (BT @ P @ A) / S
        P_next = Q + AT @ P @ A - (AT @ PB) @ K_row
        P_next = 0.5 * (P_next + P_next.T)
        delta = np.max(np.abs(P_next - P))
        P = P_next
        if delta < tol * max(1.0, np.max(np.abs(P_next))):
            break
    else:
        raise RuntimeError(
            f"Riccati recursion did not converge within {max_iter} iterations; "
            f"last update {delta:.3e}")
    PB = P @ B
    K = -(BT @ P @ A) / (R + (BT @ PB).item())
    return P, K.ravel()


@dataclass
class GainSchedule:
    """Gains per the short/long step schedule, zero-padded over s_d."""

    gains: dict            # step index -> (4,) row for the stabilizable block
    N_c: int
    N_ss: int

    def index_for(self, i: int) -> int:
        if i <= self.N_c:
            return min(i, self.N_c)
        if i < self.N_ss:
            return self.N_c
        return self.N_ss

    def stab_gain(self, i: int) -> np.ndarray:
        return self.gains[self.index_for(i)]

    def full_gain(self, i: int) -> np.ndarray:
        K = np.zeros(5)
        K[:N_STAB] = self.gains[self.index_for(i)]
        return K


def compute_lqr_gains(models: list[StepModel], Q_lqr: np.ndarray, R_lqr: float,
                      grid: TimeGrid, warm: dict | None = None) -> GainSchedule:
    """Riccati gains for steps 0..N_c plus one long-step gain at N_ss."""
    gains = {}
    cache: dict[bytes, np.ndarray] = {}
    for i in list(range(grid.N_c + 1)) + [grid.N_ss]:
        A = models[i].A_d[:N_STAB, :N_STAB]
        B = models[i].B_d[:N_STAB]
        key = A.tobytes() + B.tobytes()
        if key in cache:
            gains[i] = cache[key]
            continue
        w = warm.get(i) if warm is not None else None
        P, K = solve_dare_iterated(A, B, Q_lqr, R_lqr, warm=w)
        if warm is not None:
            warm[i] = P
        gains[i] = K
        cache[key] = K
    return GainSchedule(gains=gains, N_c=grid.N_c, N_ss=grid.N_ss)


@dataclass
class ControlSolution:
    c: np.ndarray                 # free input perturbations, N (per-tire force)
    states: np.ndarray            # nominal predicted states, (N_p+1, 5)
    eps_stab: np.ndarray          # envelope slack, physical units (4,)
    eps_coll: float               # corridor slack, m
    objective: float
    iterations: int
    kkt_residual: float
    stat_residual: float
    pfeas_residual: float
    comp_residual: float
    predicted_rear_slip: np.ndarray  # per step, feeds the next linearization
    tube: TubeBounds | None = None
    solve_time: float = 0.0
    u_star: float = 0.0           # applied per-tire front force, N
    one_step: tuple | None = None  # (A_d, B_d, L_d) of the first model step
    transitions: list | None = None  # closed-loop Phi per step (diagnostics)
    qp_problem: "QpProblem | None" = None


@dataclass
class QpProblem:
    """Assembled QP in normalized decision variables [c~, eps_stab~, eps_coll~]."""

    P: np.ndarray
    q: np.ndarray
    G: np.ndarray
    h: np.ndarray
    const: float
    F: np.ndarray                # (N_p+1, 5) zero-input state prediction
    Gmat: np.ndarray             # (N_p+1, 5, N_c) input-to-state map (physical c)
    scales: np.ndarray
    u_scale: float
    stab_scales: np.ndarray
    n_c: int


def predict_affine_maps(models: list[StepModel], schedule: GainSchedule,
                        x0: np.ndarray, N_c: int) -> tuple[np.ndarray, np.ndarray]:
    """Forward substitution of the closed-loop nominal recursion.

    Returns F (zero-input trajectory) and G with s_i = F_i + G_i @ c,
    where inputs are held at c[N_c-1] beyond the control horizon.
    """
    N_p = len(models)
    F = np.zeros((N_p + 1, 5))
    Gm = np.zeros((N_p + 1, 5, N_c))
    F[0] = x0
    for i, mdl in enumerate(models):
        K = schedule.full_gain(i).reshape(1, 5)
        Phi = mdl.A_d + mdl.B_d @ K
        j = min(i, N_c - 1)
        F[i + 1] = Phi @ F[i] + mdl.L_d.ravel()
        Gm[i + 1] = Phi @ Gm[i]
        Gm[i + 1][:, j] += mdl.B_d.ravel()
    return F, Gm


def assemble_qp(models: list[StepModel], schedule: GainSchedule, tube: TubeBounds,
                stab: StabConstraints, weights: WeightSet, x0: ErrorState,
                c_prev: float, mu: float, x_dot_p: float, params: VehicleParams,
                grid: TimeGrid, u_box: float | None = None) -> QpProblem:
    """Build the soft-constrained QP in normalized variables.

    Decision vector: N_c input perturbations (units of the max expected
    force input), 4 envelope slacks, 1 corridor slack. States are
    eliminated through the closed-loop recursion.
    """
    N_c, N_p = grid.N_c, grid.N_p
    n = N_c + 5
    scales = state_scales(weights, mu, x_dot_p)
    u_scale = mu * params.Fz_f
    if u_box is None:
        # c is a feedforward correction on top of K x, so its box leaves
        # headroom for the feedback share; the tire inverse clamps the
        # physically realizable force at saturation regardless
        u_box = 2.0 * u_scale
    stab_scales = np.array([scales[0], scales[0], scales[1], scales[1]])

    F, Gm = predict_affine_maps(models, schedule, x0.as_array(), N_c)
    Gs = Gm * u_scale  # maps normalized inputs to states

    P = np.zeros((n, n))
    q = np.zeros(n)
    const = 0.0

    # state tracking cost over the horizon
    Qn = np.asarray(weights.Q) / scales ** 2
    for i in range(N_p):
        Wi = Qn[:, None] * Gs[i]
        P[:N_c, :N_c] += 2.0 * Gs[i].T @ Wi
        q[:N_c] += 2.0 * F[i] @ Wi
        const += float(F[i] @ (Qn * F[i]))

    # input magnitude cost (tail inputs repeat the last free value)
    for i in range(N_p):
        j = min(i, N_c - 1)
        P[j, j] += 2.0 * weights.R

    # input rate cost, normalized by the admissible change per step
    c_prev_n = c_prev / u_scale
    for i in range(N_c):
        dt = grid.dt(i)
        Sn = weights.S * (u_scale / (DU_MAX * dt)) ** 2
        if i == 0:
            P[0, 0] += 2.0 * Sn
            q[0] += -2.0 * Sn * c_prev_n
            const += Sn * c_prev_n ** 2
        else:
            P[i, i] += 2.0 * Sn
            P[i - 1, i - 1] += 2.0 * Sn
            P[i, i - 1] += -2.0 * Sn
            P[i - 1, i] += -2.0 * Sn

    # slack costs
    for r in range(4):
        P[N_c + r, N_c + r] += 2.0 * weights.lam_stab[r]
    P[N_c + 4, N_c + 4] += 2.0 * weights.lam_coll

    rows = []
    rhs = []

    # corridor rows: tube.final_min - eps <= e_y(s_i) <= tube.final_max + eps
    ey_scale = scales[3]
    for i in range(N_p + 1):
        gi = Gs[i][3] / ey_scale
        row = np.zeros(n)
        row[:N_c] = gi
        row[N_c + 4] = -1.0
        rows.append(row)
        rhs.append((tube.final_max[i] - F[i][3]) / ey_scale)
        row = np.zeros(n)
        row[:N_c] = -gi
        row[N_c + 4] = -1.0
        rows.append(row)
        rhs.append((F[i][3] - tube.final_min[i]) / ey_scale)

    # envelope rows: E s_i <= G + eps_stab
    for i in range(N_p + 1):
        Es = stab.E @ Gs[i]
        for r in range(4):
            row = np.zeros(n)
            row[:N_c] = Es[r] / stab_scales[r]
            row[N_c + r] = -1.0
            rows.append(row)
            rhs.append((stab.G[r] - stab.E[r] @ F[i]) / stab_scales[r])

    # slack nonnegativity
    for r in range(5):
        row = np.zeros(n)
        row[N_c + r] = -1.0
        rows.append(row)
        rhs.append(0.0)

    # input box and rate limits
    u_box_n = u_box / u_scale
    for j in range(N_c):
        for sgn in (1.0, -1.0):
            row = np.zeros(n)
            row[j] = sgn
            rows.append(row)
            rhs.append(u_box_n)
    for i in range(N_c):
        dt = grid.dt(i)
        lim = DU_MAX * dt / u_scale
        for sgn in (1.0, -1.0):
            row = np.zeros(n)
            row[i] = sgn
            if i > 0:
                row[i - 1] = -sgn
            rows.append(row)
            rhs.append(lim + (sgn * c_prev_n if i == 0 else 0.0))

    return QpProblem(P=P, q=q, G=np.array(rows), h=np.array(rhs), const=const,
                     F=F, Gmat=Gm, scales=scales, u_scale=u_scale,
                     stab_scales=stab_scales, n_c=N_c)


def solution_from_qp(qp: QpProblem, res: QpResult, models: list[StepModel],
                     schedule: GainSchedule, x_dot_p: float, params: VehicleParams,
                     tube: TubeBounds, stab: StabConstraints,
                     weights: WeightSet) -> ControlSolution:
    """Physical-unit solution with polished slacks.

    For fixed inputs the optimal slack is exactly the largest constraint
    violation, so the interior-point iterate's slack variables (which sit
    a little above zero) are replaced by that value; the objective is
    adjusted accordingly and can only improve.
    """
    c = res.z[:qp.n_c] * qp.u_scale
    states = qp.F + np.einsum("isk,k->is", qp.Gmat, c)

    ey = states[:, 3]
    eps_coll = float(max(0.0, np.max(ey - tube.final_max), np.max(tube.final_min - ey)))
    viol = stab.E @ states.T - stab.G[:, None]
    eps_stab = np.maximum(0.0, viol.max(axis=1))

    old_n = np.concatenate([res.z[qp.n_c:qp.n_c + 4], res.z[qp.n_c + 4:qp.n_c + 5]])
    new_n = np.concatenate([eps_stab / qp.stab_scales, [eps_coll / qp.scales[3]]])
    lam = np.concatenate([weights.lam_stab, [weights.lam_coll]])
    objective = res.objective + qp.const + float(lam @ (new_n ** 2 - old_n ** 2))

    slips = np.array([rear_slip_from_state(states[j], x_dot_p, params)
                      for j in range(1, states.shape[0])])
    return ControlSolution(c=c, states=states, eps_stab=eps_stab, eps_coll=eps_coll,
                           objective=objective,
                           iterations=res.iterations,
                           kkt_residual=res.kkt_residual,
                           stat_residual=res.stat_residual,
                           pfeas_residual=res.pfeas_residual,
                           comp_residual=res.comp_residual,
                           predicted_rear_slip=slips, tube=tube)


@dataclass
class StepDiagnostics:
    tube_time: float = 0.0
    qp_time: float = 0.0
    total_time: float = 0.0
    weights_name: str = "tracking"
    fallback: bool = False
    fallback_reason: str = ""
    lp_count: int = 0


@dataclass
class ControllerConfig:
    params: VehicleParams
    grid: TimeGrid
    path: ReferencePath
    road: RoadBounds
    obstacles: list[Obstacle]
    x_dot_p: float
    mu: float                     # friction assumed by the controller
    W: DisturbanceSet
    mode: str = "rmpc"            # "rmpc" | "dmpc"
    avoidance_weights: WeightSet = AVOIDANCE_WEIGHTS
    tracking_weights: WeightSet = TRACKING_WEIGHTS
    u_box: float | None = None    # per-tire input bound, defaults to mu*Fz_f
    freeze_tail: bool = True


class RmpcController:
    """Stateful controller; call :meth:`step` once per execution period."""

    def __init__(self, config: ControllerConfig):
        if config.mode not in ("rmpc", "dmpc"):
            raise ValueError("mode must be 'rmpc' or 'dmpc'")
        self.cfg = config
        self.params = config.params.with_mu(config.mu)
        self.prev_solution: ControlSolution | None = None
        self.prev_delta = 0.0
        self.c_prev = 0.0
        self._riccati_warm: dict = {}
        self.W = config.W if config.mode == "rmpc" else DisturbanceSet(np.zeros(5))

    def visible_obstacles(self, t: float) -> list[Obstacle]:
        return [ob for ob in self.cfg.obstacles if t >= ob.appear_time]

    def _weights_for(self, t: float, s_now: float, s_far: float) -> tuple[WeightSet, str]:
        for ob in self.visible_obstacles(t):
            if ob.s_end >= s_now - self.params.L and ob.s_start <= s_far:
                return self.cfg.avoidance_weights, "avoidance"
        return self.cfg.tracking_weights, "tracking"

    def _sample_rows(self, measurement: ErrorState) -> tuple[np.ndarray, np.ndarray]:
        """Tube row sample distances and heading errors (N_p + 1 each)."""
        N_p = self.cfg.grid.N_p
        if self.prev_solution is None:
            return (np.full(N_p + 1, measurement.s_d),
                    np.full(N_p + 1, measurement.e_phi))
        prev = self.prev_solution.states
        idx = [min(i + 1, N_p) for i in range(1, N_p + 1)]
        s = np.concatenate([[measurement.s_d], prev[idx, 4]])
        e_phi = np.concatenate([[measurement.e_phi], prev[idx, 2]])
        return s, e_phi

    def step(self, measurement: ErrorState, t: float) -> tuple[float, ControlSolution | None, StepDiagnostics]:
        diag = StepDiagnostics()
        t_start = time.perf_counter()
        try:
            delta, sol, diag = self._step_inner(measurement, t, diag)
        except Exception as exc:  # safe fallback: hold the last command
            diag.fallback = True
            diag.fallback_reason = f"{type(exc).__name__}: {exc}"
            diag.total_time = time.perf_counter() - t_start
            # drop the stale solution so the next step cold-starts from the
            # measurement instead of replaying the failing predictions
            self.prev_solution = None
            return self.prev_delta, None, diag
        diag.total_time = time.perf_counter() - t_start
        self.prev_delta = delta
        return delta, sol, diag

    def _step_inner(self, measurement: ErrorState, t: float, diag: StepDiagnostics):
        cfg = self.cfg
        grid = cfg.grid
        params = self.params
        x_dot_p = cfg.x_dot_p

        prev_states = None if self.prev_solution is None else self.prev_solution.states
        prev_slips = None if self.prev_solution is None else self.prev_solution.predicted_rear_slip
        models = build_prediction_models(measurement, prev_states, prev_slips,
                                         x_dot_p, params, grid, cfg.path.curvature_at)

        sample_s, sample_ephi = self._sample_rows(measurement)
        s_far = max(float(sample_s[-1]), measurement.s_d + x_dot_p * grid.horizon)
        weights, wname = self._weights_for(t, measurement.s_d, s_far)
        diag.weights_name = wname

        scales = state_scales(weights, cfg.mu, x_dot_p)
        Q_lqr = np.diag(np.asarray(weights.Q[:N_STAB]) / scales[:N_STAB] ** 2)
        R_lqr = weights.R / (cfg.mu * params.Fz_f) ** 2
        schedule = compute_lqr_gains(models, Q_lqr, R_lqr, grid, warm=self._riccati_warm)

        stab = assemble_stab_constraints(params, x_dot_p, mu=cfg.mu)

        t0 = time.perf_counter()
        transitions = error_transition(models, [schedule.full_gain(i)
                                                for i in range(grid.N_p)])
        sample_dts = np.array([grid.dt(i) for i in range(grid.N_p)] + [grid.T_ls])
        tube = build_tube(cfg.road, self.visible_obstacles(t), x_dot_p, sample_s,
                          sample_dts, sample_ephi, transitions, self.W, grid.N_c,
                          params, freeze_tail=cfg.freeze_tail)
        diag.tube_time = time.perf_counter() - t0
        diag.lp_count = tube.lp_count

        qp = assemble_qp(models, schedule, tube, stab, weights, measurement,
                         self.c_prev, cfg.mu, x_dot_p, params, grid, u_box=cfg.u_box)
        t0 = time.perf_counter()
        res = solve_qp(qp.P, qp.q, qp.G, qp.h)
        diag.qp_time = time.perf_counter() - t0

        sol = solution_from_qp(qp, res, models, schedule, x_dot_p, params,
                               tube, stab, weights)
        sol.solve_time = diag.qp_time
        sol.one_step = (models[0].A_d, models[0].B_d, models[0].L_d)
        sol.transitions = transitions
        sol.qp_problem = qp

        # steering command from the optimal per-tire front force
        x_stab = measurement.as_array()[:N_STAB]
        u_star = float(schedule.stab_gain(0) @ x_stab + sol.c[0])
        alpha_f = inverse_tire_force(u_star, params.C_af, cfg.mu, params.Fz_f)
        y_dot = measurement.ydot_p - params.p * measurement.phidot
        delta = (y_dot + params.a * measurement.phidot) / x_dot_p - alpha_f
        delta = float(np.clip(delta, -STEERING_LIMIT, STEERING_LIMIT))

        sol.u_star = u_star
        self.prev_solution = sol
        self.c_prev = float(sol.c[0])
        return delta, sol, diag
