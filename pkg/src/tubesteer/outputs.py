"""CSV / metrics / plot-script emission for a finished run."""

from __future__ import annotations

import json
import math
import os

import numpy as np

from .envelope import assemble_stab_constraints
from .simulate import CSV_COLUMNS, RunLog


def _fmt(v) -> str:
    f = float(v)
    if math.isnan(f):
        return "nan"
    return repr(f)


def run_csv_text(log: RunLog) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for row in log.rows:
        lines.append(",".join(_fmt(row[c]) for c in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def parse_run_csv(text: str) -> tuple[list[str], np.ndarray]:
    lines = [ln for ln in text.strip().split("\n") if ln]
    header = lines[0].split(",")
    data = np.array([[float(tok) for tok in ln.split(",")] for ln in lines[1:]])
    return header, data


def metrics_text(metrics: dict) -> str:
    """Flat key-value JSON, deterministically ordered; nan -> null, inf -> "inf"."""
    flat = {}
    for k, v in metrics.items():
        if isinstance(v, float) and math.isnan(v):
            flat[k] = None
        elif isinstance(v, float) and math.isinf(v):
            flat[k] = "inf" if v > 0 else "-inf"
        else:
            flat[k] = v
    return json.dumps(flat, sort_keys=True, indent=2, allow_nan=False) + "\n"


PLOT_TEMPLATE = '''#!/usr/bin/env python3
"""Render the run panels (trajectory, errors, steering, accel, phase plane)."""
import csv
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

CSV = sys.argv[1] if len(sys.argv) > 1 else "run.csv"
OUT = sys.argv[2] if len(sys.argv) > 2 else "run_panels.png"

# stability envelope rows (E @ [ydot_p, phidot] <= G) baked in at emit time
ENVELOPE_E = {env_E}
ENVELOPE_G = {env_G}

with open(CSV) as fh:
    rows = list(csv.DictReader(fh))
col = lambda name: [float(r[name]) for r in rows]

fig, axes = plt.subplots(3, 2, figsize=(13, 12))
ax = axes[0][0]
ax.plot(col("x"), col("y"), lw=1.2)
ax.set_title("global frame"); ax.set_xlabel("x [m]"); ax.set_ylabel("y [m]")
ax.axis("equal")

ax = axes[0][1]
ax.plot(col("s_d"), col("e_y"), lw=1.2)
ax.plot(col("s_d"), col("ey_min_0"), "r--", lw=0.8)
ax.plot(col("s_d"), col("ey_max_0"), "r--", lw=0.8)
ax.set_title("lateral error"); ax.set_xlabel("s_d [m]"); ax.set_ylabel("e_y [m]")

ax = axes[1][0]
ax.plot(col("s_d"), [57.2958 * d for d in col("delta")], lw=1.2)
ax.set_title("steering angle"); ax.set_xlabel("s_d [m]"); ax.set_ylabel("delta [deg]")

ax = axes[1][1]
ax.plot(col("s_d"), col("ay"), lw=1.2)
ax.set_title("lateral acceleration"); ax.set_xlabel("s_d [m]"); ax.set_ylabel("a_y [m/s^2]")

ax = axes[2][0]
ax.plot(col("ydot_p"), col("phidot"), lw=0.9)
ydp = col("ydot_p")
span = max(max(map(abs, ydp)) * 1.6, 3.0)
import numpy as np
xs = np.linspace(-span, span, 2)
for (e0, e1), g in zip(ENVELOPE_E, ENVELOPE_G):
    if abs(e1) > 1e-12:
        ax.plot(xs, (g - e0 * xs) / e1, "k--", lw=0.8)
ax.set_title("phase plane with envelope")
ax.set_xlabel("ydot_p [m/s]"); ax.set_ylabel("phidot [rad/s]")

ax = axes[2][1]
ax.plot(col("t"), col("solve_ms"), lw=0.9)
ax.set_title("tightening + QP time"); ax.set_xlabel("t [s]"); ax.set_ylabel("ms")

fig.tight_layout()
fig.savefig(OUT, dpi=130)
print("wrote", OUT)
'''


def plot_script_text(log: RunLog) -> str:
    cfg = log.config
    stab = assemble_stab_constraints(cfg.params, cfg.speed, mu=cfg.mu_controller)
    env_E = [[float(stab.E[r, 0]), float(stab.E[r, 1])] for r in range(4)]
    env_G = [float(g) for g in stab.G]
    return PLOT_TEMPLATE.format(env_E=env_E, env_G=env_G)


def emit_outputs(log: RunLog, metrics: dict, out_dir: str) -> dict:
    """Write run.csv, metrics.json and plot_run.py; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "csv": os.path.join(out_dir, "run.csv"),
        "metrics": os.path.join(out_dir, "metrics.json"),
        "plot": os.path.join(out_dir, "plot_run.py"),
    }
    with open(paths["csv"], "w") as fh:
        fh.write(run_csv_text(log))
    with open(paths["metrics"], "w") as fh:
        fh.write(metrics_text(metrics))
    with open(paths["plot"], "w") as fh:
        fh.write(plot_script_text(log))
    return paths
