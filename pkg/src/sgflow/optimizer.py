"""Adjoint-based projected gradient method for the tracking problem."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BlowUp, ConfigError
from .sensitivity import interval_average, solve_adjoint, tracking_J
from .state import ControlTrajectory, SolverConfig, _series, simulate

CONVERGED = "Converged"
ITER_LIMIT = "IterLimit"
LINE_SEARCH_FAIL = "LineSearchFail"


@dataclass(frozen=True)
class Ball:
    """{u : |u|_{L2(Q)} <= R}."""

    R: float

    def __post_init__(self):
        if not (math.isfinite(self.R) and self.R > 0):
            raise ConfigError(f"admissible.R: radius must be > 0, got {self.R}")

    kind = "ball"


@dataclass(frozen=True)
class Box:
    """{u : lo <= u <= hi} coefficientwise; bounds broadcast to (N_c, K, K)."""

    lo: object
    hi: object

    def __post_init__(self):
        lo, hi = np.asarray(self.lo, dtype=float), np.asarray(self.hi, dtype=float)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ConfigError("admissible: box bounds must be finite")
        if np.any(lo > hi):
            raise ConfigError("admissible: box needs lo <= hi")

    kind = "box"


AdmissibleSet = Ball | Box


def project_admissible(u: ControlTrajectory, S: AdmissibleSet) -> ControlTrajectory:
    if isinstance(S, Ball):
        n = u.norm()
        return u.copy() if n <= S.R else u * (S.R / n)
    lo = np.broadcast_to(np.asarray(S.lo, dtype=float), u.values.shape)
    hi = np.broadcast_to(np.asarray(S.hi, dtype=float), u.values.shape)
    return ControlTrajectory(np.clip(u.values, lo, hi), u.T)


def vi_residual(u: ControlTrajectory, grad: ControlTrajectory, S: AdmissibleSet) -> float:
    """min over v in S of int (grad, v - u); never positive for admissible u."""
    if isinstance(S, Ball):
        return -S.R * grad.norm() - grad.inner(u)
    lo = np.broadcast_to(np.asarray(S.lo, dtype=float), u.values.shape)
    hi = np.broadcast_to(np.asarray(S.hi, dtype=float), u.values.shape)
    v = np.where(grad.values > 0, lo, hi)
    return float(u.h * np.sum(grad.values * (v - u.values)))


def evaluate_J(u: ControlTrajectory, y_d, cfg: SolverConfig, y0) -> float:
    """1/2 |y_u - y_d|^2_{L2(Q)} + lam/2 |u|^2_{L2(Q)}, trapezoid in time."""
    return tracking_J(simulate(cfg, y0, u), u, y_d, cfg)


def value_and_gradient(u: ControlTrajectory, y_d, cfg: SolverConfig, y0, tracking=True):
    """J(u) and its L2(Q) gradient in the piecewise-constant control space.

    The gradient on each interval is the time average of p + lam u, where p solves the
    adjoint equation driven by y_u - y_d.  ``tracking=False`` drops the state term.
    """
    if not tracking:
        return 0.5 * cfg.lam * u.inner(u), u * cfg.lam
    return _value_and_gradient(u, simulate(cfg, y0, u), y_d, cfg)


def _value_and_gradient(u, y, y_d, cfg):
    J = tracking_J(y, u, y_d, cfg)
    p = solve_adjoint(y, y.coeffs - _series(y_d, y.N), cfg).p
    g = interval_average(p.coeffs, u.n_intervals, cfg.dt) + cfg.lam * u.values
    return J, ControlTrajectory(g, u.T)


def gradient(u: ControlTrajectory, y_d, cfg: SolverConfig, y0, tracking=True) -> ControlTrajectory:
    return value_and_gradient(u, y_d, cfg, y0, tracking)[1]


@dataclass
class OptimReport:
    status: str
    u: ControlTrajectory
    iterates: list = field(default_factory=list)  # dicts: J, gradNorm, viResidual, step

    @property
    def J(self):
        return self.iterates[-1]["J"]

    @property
    def vi_residual(self):
        return self.iterates[-1]["viResidual"]

    def to_dict(self, final_control_file=None):
        return {
            "status": self.status,
            "iters": [dict(it) for it in self.iterates],
            "finalControlFile": final_control_file,
        }


def optimize(cfg: SolverConfig, y0, y_d, S: AdmissibleSet, u0: ControlTrajectory | None = None,
             n_intervals=1, max_iter=200, c1=1e-4, shrink=0.5, tol_vi=1e-6, step0=1.0,
             max_shrinks=40, log=None) -> OptimReport:
    """Projected gradient with Barzilai-Borwein trial steps and monotone Armijo backtracking.

    Stops with Converged once vi_residual >= -tol_vi (1 + |J|).
    """
    if cfg.lam == 0 and not isinstance(S, Ball):
        raise ConfigError("admissible: lambda = 0 requires a ball constraint")
    if u0 is None:
        u0 = ControlTrajectory.zeros(cfg.K, n_intervals, cfg.T)
    u0.steps_per_interval(cfg.N)
    u = project_admissible(u0, S)
    J, g = value_and_gradient(u, y_d, cfg, y0)
    step = step0
    report = OptimReport(ITER_LIMIT, u)
    prev = None
    for it in range(max_iter + 1):
        vi = vi_residual(u, g, S)
        report.iterates.append({"J": J, "gradNorm": g.norm(), "viResidual": vi, "step": 0.0 if it == 0 else step})
        if log:
            log(it, J, g.norm(), vi, step)
        if vi >= -tol_vi * (1 + abs(J)):
            report.status = CONVERGED
            break
        if it == max_iter:
            break
        if prev is not None:
            du, dg = u - prev[0], g - prev[1]
            curv = du.inner(dg)
            step = min(max(du.inner(du) / curv, 1e-10), 1e10) if curv > 0 else step0
        for _ in range(max_shrinks + 1):
            trial = project_admissible(u - g * step, S)
            decrease = g.inner(trial - u)
            try:
                yt = simulate(cfg, y0, trial)
            except BlowUp:
                # an overshooting trial is a rejected step, not a failed run
                step *= shrink
                continue
            Jt = tracking_J(yt, trial, y_d, cfg)
            if Jt <= J + c1 * decrease:
                break
            step *= shrink
        else:
            report.status = LINE_SEARCH_FAIL
            break
        prev = (u, g)
        u = trial
        J, g = _value_and_gradient(u, yt, y_d, cfg)
    report.u = u
    return report
