"""Dense convex QP solver for the controller's small fixed-size problems.

    minimize   0.5 z' P z + q' z
    subject to G z <= h

Primal-dual interior point with Mehrotra predictor-corrector steps,
reduced to normal equations in the (few) primal variables. Everything is
plain numpy, so identical inputs give bit-identical solutions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve


class QpError(RuntimeError):
    """Raised when the iteration cap is hit; carries the best iterate."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass
class QpResult:
    z: np.ndarray
    lam: np.ndarray
    objective: float
    iterations: int
    stat_residual: float
    pfeas_residual: float
    comp_residual: float

    @property
    def kkt_residual(self) -> float:
        return max(self.stat_residual, self.pfeas_residual, self.comp_residual)


def _residuals(P, q, G, h, z, lam):
    stat = float(np.max(np.abs(P @ z + q + G.T @ lam))) if G.size else \
        float(np.max(np.abs(P @ z + q)))
    slack = h - G @ z
    pfeas = float(max(0.0, np.max(-slack))) if G.size else 0.0
    comp = float(np.max(np.abs(lam * slack))) if G.size else 0.0
    return stat, pfeas, comp


def solve_qp(P: np.ndarray, q: np.ndarray, G: np.ndarray, h: np.ndarray,
             tol: float = 1e-9, max_iter: int = 200) -> QpResult:
    """Solve the inequality-constrained QP to the requested KKT tolerance."""
    P = np.asarray(P, dtype=float)
    q = np.asarray(q, dtype=float).ravel()
    n = q.shape[0]
    if G is None or len(G) == 0:
        z = np.linalg.solve(P, -q)
        return QpResult(z=z, lam=np.zeros(0), objective=float(0.5 * z @ P @ z + q @ z),
                        iterations=0, stat_residual=0.0, pfeas_residual=0.0,
                        comp_residual=0.0)
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float).ravel()
    m = h.shape[0]

    z = np.linalg.solve(P, -q)
    resid = h - G @ z
    shift = max(0.0, -1.5 * float(np.min(resid)))
    s = resid + shift + 1.0
    lam = np.ones(m)

    # badly scaled instances hit the float64 residual floor above tol;
    # relax proportionally but never past 100x (comfortably tight for the
    # 1e-6 contract on the controller problems)
    scale = max(np.max(np.abs(q)), np.max(np.abs(h)), 1.0)
    thresh = tol * min(scale, 100.0)

    best = None
    for it in range(1, max_iter + 1):
        r_d = P @ z + q + G.T @ lam
        r_p = G @ z + s - h
        mu = float(s @ lam) / m

        stat, pfeas, comp = _residuals(P, q, G, h, z, lam)
        res = QpResult(z=z.copy(), lam=lam.copy(),
                       objective=float(0.5 * z @ P @ z + q @ z),
                       iterations=it - 1, stat_residual=stat,
                       pfeas_residual=pfeas, comp_residual=comp)
        if best is None or res.kkt_residual < best.kkt_residual:
            best = res
        if stat <= thresh and pfeas <= thresh and comp <= thresh:
            return res

        d = lam / s
        M = P + (G.T * d) @ G
        jitter = 0.0
        for _ in range(6):
            try:
                chol = cho_factor(M + jitter * np.eye(n) if jitter else M,
                                  lower=True)
                break
            except np.linalg.LinAlgError:
                base = 1e-14 * float(np.max(np.diag(M))) + 1e-30
                jitter = base if jitter == 0.0 else jitter * 100.0
        else:
            raise QpError("QP normal equations irrecoverably singular", result=best)

        def newton(r_c):
            rhs = -r_d + G.T @ ((r_c - lam * r_p) / s)
            dz = cho_solve(chol, rhs)
            ds = -r_p - G @ dz
            dlam = -(r_c + lam * ds) / s
            return dz, ds, dlam

        # affine scaling (predictor) direction
        r_c_aff = s * lam
        dz_a, ds_a, dlam_a = newton(r_c_aff)
        alpha_aff = _step_length(s, ds_a, lam, dlam_a)
        mu_aff = float((s + alpha_aff * ds_a) @ (lam + alpha_aff * dlam_a)) / m
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0

        # corrector
        r_c = s * lam + ds_a * dlam_a - sigma * mu
        dz, ds, dlam = newton(r_c)
        alpha = 0.99 * _step_length(s, ds, lam, dlam)
        z = z + alpha * dz
        s = np.maximum(s + alpha * ds, 1e-250)
        lam = np.maximum(lam + alpha * dlam, 1e-250)

    raise QpError(f"QP solver hit the iteration cap ({max_iter}); "
                  f"best KKT residual {best.kkt_residual:.3e}", result=best)


def _step_length(s, ds, lam, dlam) -> float:
    alpha = 1.0
    neg = ds < 0
    if np.any(neg):
        alpha = min(alpha, float(np.min(-s[neg] / ds[neg])))
    neg = dlam < 0
    if np.any(neg):
        alpha = min(alpha, float(np.min(-lam[neg] / dlam[neg])))
    return alpha
