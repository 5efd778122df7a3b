"""Disturbance-set identification from one-step prediction residuals."""

from __future__ import annotations

import numpy as np

from .scenario import ScenarioConfig, disturbance_fragment
from .simulate import RunLog, run_scenario
from .tube import DisturbanceSet


def one_step_residuals(log: RunLog) -> np.ndarray:
    """Measured state minus the model's one-step prediction, per step.

    Pairs consecutive controller steps; gaps (fallback steps) are skipped.
    """
    entries = {e["k"]: e for e in log.one_step_models}
    res = []
    for k, e in entries.items():
        nxt = entries.get(k + 1)
        if nxt is None:
            continue
        pred = e["A_d"] @ e["x"] + e["B_d"].ravel() * e["u"] + e["L_d"].ravel()
        res.append(nxt["x"] - pred)
    return np.array(res) if res else np.zeros((0, 5))


def estimate_disturbance_set(trial_configs: list[ScenarioConfig],
                             sensor_margin=None) -> tuple[DisturbanceSet, str]:
    """Bound |w| per state by the worst residual over all trials.

    Trials should exercise the mismatches the controller must survive
    (tire friction assumed high, plant running low). Configured sensor
    error margins are added on top; the returned fragment drops straight
    into a scenario file.
    """
    if not trial_configs:
        raise ValueError("need at least one trial scenario")
    worst = np.zeros(5)
    for cfg in trial_configs:
        log = run_scenario(cfg, collect_models=True)
        res = one_step_residuals(log)
        if res.size:
            worst = np.maximum(worst, np.max(np.abs(res), axis=0))
    if sensor_margin is not None:
        worst = worst + np.asarray(sensor_margin, dtype=float)
    W = DisturbanceSet(worst)
    return W, disturbance_fragment(W)
