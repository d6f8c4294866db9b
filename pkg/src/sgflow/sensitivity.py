"""Linearized (forward) and adjoint (backward) solves, Green duality and Gateaux checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .forms import Samples, adjoint_term, linearized_term
from .state import (
    ControlTrajectory,
    SolverConfig,
    Trajectory,
    _series,
    integrate,
    simulate,
    trapezoid_weights,
)


@dataclass
class LinearizedRun:
    z: Trajectory
    y1: Trajectory = field(repr=False)
    y2: Trajectory = field(repr=False)
    w: ControlTrajectory = field(repr=False)


@dataclass
class AdjointRun:
    p: Trajectory
    y: Trajectory = field(repr=False)
    f: np.ndarray = field(repr=False)


def _check_grid(traj: Trajectory, cfg: SolverConfig, name):
    if traj.N != cfg.N or traj.K != cfg.K:
        raise ConfigError(f"{name}: trajectory grid ({traj.N} steps, K={traj.K}) "
                          f"does not match config ({cfg.N} steps, K={cfg.K})")


class _Frozen:
    """Grid samples of a stored trajectory, linearly interpolated inside a step."""

    def __init__(self, coeffs, space):
        self._s = [space.samples(c) for c in coeffs]
        self._mid = {}

    def at(self, n, theta):
        if theta == 0.0:
            return self._s[n]
        if theta == 1.0:
            return self._s[n + 1]
        key = (n, theta)
        s = self._mid.get(key)
        if s is None:
            s = self._mid[key] = Samples.lerp(self._s[n], self._s[n + 1], theta)
        return s


def solve_linearized(y1: Trajectory, y2: Trajectory, w: ControlTrajectory, cfg: SolverConfig) -> LinearizedRun:
    """z(0) = 0, mass z' = -nu lam z - P[curl sigma(z) x y1 + curl sigma(y2) x z] + w."""
    _check_grid(y1, cfg, "y1")
    _check_grid(y2, cfg, "y2")
    sp = cfg.space
    wv = w.step_values(cfg.N)
    f1 = _Frozen(y1.coeffs, sp)
    f2 = f1 if y2 is y1 else _Frozen(y2.coeffs, sp)

    def explicit(n, theta, x):
        return wv[n] - linearized_term(sp.samples(x), f1.at(n, theta), f2.at(n, theta), sp)

    z = integrate(np.zeros((cfg.K, cfg.K)), cfg, explicit, what="linearized")
    return LinearizedRun(z, y1, y2, w)


def solve_adjoint(y: Trajectory, f, cfg: SolverConfig) -> AdjointRun:
    """Backward adjoint solve through the time-reversed problem psi(s) = p(T - s)."""
    _check_grid(y, cfg, "y")
    sp = cfg.space
    N = cfg.N
    fs = np.ascontiguousarray(_series(f, N))
    f_rev = fs[::-1]
    yr = _Frozen(y.coeffs[::-1], sp)

    def explicit(n, theta, x):
        fn = (1 - theta) * f_rev[n] + theta * f_rev[n + 1]
        return fn - adjoint_term(sp.samples(x), yr.at(n, theta), sp)

    psi = integrate(np.zeros((cfg.K, cfg.K)), cfg, explicit, what="adjoint")
    p = Trajectory(cfg.times, psi.coeffs[::-1].copy())
    return AdjointRun(p, y, fs)


def interval_average(series: np.ndarray, n_intervals: int, dt: float) -> np.ndarray:
    """Trapezoidal time average of a snapshot series over each control interval."""
    N = series.shape[0] - 1
    if N % n_intervals:
        raise ConfigError(f"control intervals ({n_intervals}) must divide the number of steps ({N})")
    s = N // n_intervals
    tw = trapezoid_weights(s, dt)
    out = np.empty((n_intervals,) + series.shape[1:])
    for i in range(n_intervals):
        out[i] = np.tensordot(tw, series[i * s:(i + 1) * s + 1], axes=1) / (s * dt)
    return out


def pair_control(w: ControlTrajectory, series: np.ndarray, dt: float) -> float:
    """int_0^T (w, q) dt for piecewise-constant w, trapezoid inside each interval."""
    avg = interval_average(series, w.n_intervals, dt)
    return float(w.h * np.sum(w.values * avg))


def pair_series(a: np.ndarray, b: np.ndarray, dt: float) -> float:
    N = a.shape[0] - 1
    return float(np.sum(trapezoid_weights(N, dt) * np.sum(a * b, axis=(1, 2))))


def green_pairings(w: ControlTrajectory, f, y: Trajectory, cfg: SolverConfig):
    """(int (w, p) dt, int (f, z) dt) with y1 = y2 = y."""
    z = solve_linearized(y, y, w, cfg).z
    adj = solve_adjoint(y, f, cfg)
    return pair_control(w, adj.p.coeffs, cfg.dt), pair_series(adj.f, z.coeffs, cfg.dt)


def greens_gap(w: ControlTrajectory, f, y: Trajectory, cfg: SolverConfig, eps=1e-300) -> float:
    lhs, rhs = green_pairings(w, f, y, cfg)
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs), eps)


def tracking_J(y: Trajectory, u: ControlTrajectory, y_d, cfg: SolverConfig) -> float:
    d = y.coeffs - _series(y_d, y.N)
    track = 0.5 * np.sum(trapezoid_weights(y.N, cfg.dt) * np.sum(d**2, axis=(1, 2)))
    return float(track + 0.5 * cfg.lam * u.inner(u))


@dataclass
class GateauxResult:
    J: float
    dJ_linearized: float
    dJ_adjoint: float
    rows: list  # (rho, J_perturbed, remainder, remainder_over_rho)

    @property
    def ratios(self):
        r = [row[3] for row in self.rows]
        return [a / b if b != 0 else math.inf for a, b in zip(r, r[1:])]


def gateaux_check(u: ControlTrajectory, w: ControlTrajectory, rhos, cfg: SolverConfig, y0, y_d) -> GateauxResult:
    """Slope table for J(u + rho w) - J(u) - rho DJ(u) w, DJ from the linearized state."""
    rhos = [float(r) for r in rhos]
    if len(set(rhos)) != len(rhos) or any(not 0 < r < 1 for r in rhos):
        raise ConfigError("rhos: values must be distinct and in (0, 1)")
    y = simulate(cfg, y0, u)
    J0 = tracking_J(y, u, y_d, cfg)
    dev = y.coeffs - _series(y_d, y.N)
    z = solve_linearized(y, y, w, cfg).z
    dJ = pair_series(z.coeffs, dev, cfg.dt) + cfg.lam * u.inner(w)
    p = solve_adjoint(y, dev, cfg).p
    dJ_adj = pair_control(w, p.coeffs, cfg.dt) + cfg.lam * u.inner(w)
    rows = []
    for rho in rhos:
        ur = u + w * rho
        Jr = tracking_J(simulate(cfg, y0, ur), ur, y_d, cfg)
        rem = abs(Jr - J0 - rho * dJ)
        rows.append((rho, Jr, rem, rem / rho))
    return GateauxResult(J0, dJ, dJ_adj, rows)


def lipschitz_ratio(cfg: SolverConfig, y0, u1: ControlTrajectory, u2: ControlTrajectory) -> float:
    """|y(u2) - y(u1)|_{L^inf L^2} / |u2 - u1|_{L^2(Q)}."""
    d = simulate(cfg, y0, u2).coeffs - simulate(cfg, y0, u1).coeffs
    return float(np.sqrt(np.sum(d**2, axis=(1, 2))).max() / (u2 - u1).norm())


def linearized_energy_residual(run: LinearizedRun, cfg: SolverConfig) -> np.ndarray:
    """Per-step residual of d/dt E(z) + 2 nu |Dz|^2 - (w, z) + (curl sigma(z) x y1, z)."""
    sp = cfg.space
    b = sp.basis
    c = run.z.coeffs
    wv = run.w.step_values(cfg.N)
    out = np.empty(cfg.N)
    E = 0.5 * np.sum(b.mass * c**2, axis=(1, 2))
    for n in range(cfg.N):
        zm = 0.5 * (c[n] + c[n + 1])
        ym = 0.5 * (run.y1.coeffs[n] + run.y1.coeffs[n + 1])
        zs, ys = sp.samples(zm), sp.samples(ym)
        coupling = np.sum(sp.project(np.stack([-zs.omega * ys.u[1], zs.omega * ys.u[0]])) * zm)
        out[n] = ((E[n + 1] - E[n]) / cfg.dt + cfg.nu * np.sum(b.lam * zm**2)
                  - np.sum(wv[n] * zm) + coupling)
    return out


def adjoint_energy_residual(run: AdjointRun, cfg: SolverConfig) -> np.ndarray:
    """Energy ledger of the reversed adjoint psi(s) = p(T - s), full coupling included.

    The -curl sigma(y) x psi part is orthogonal to psi; the sigma(y x psi) part is not.
    """
    sp = cfg.space
    b = sp.basis
    psi = run.p.coeffs[::-1]
    yr = run.y.coeffs[::-1]
    fr = run.f[::-1]
    out = np.empty(cfg.N)
    E = 0.5 * np.sum(b.mass * psi**2, axis=(1, 2))
    for n in range(cfg.N):
        pm = 0.5 * (psi[n] + psi[n + 1])
        ym = 0.5 * (yr[n] + yr[n + 1])
        fm = 0.5 * (fr[n] + fr[n + 1])
        coupling = np.sum(adjoint_term(sp.samples(pm), sp.samples(ym), sp) * pm)
        out[n] = ((E[n + 1] - E[n]) / cfg.dt + cfg.nu * np.sum(b.lam * pm**2)
                  - np.sum(fm * pm) + coupling)
    return out
