"""Galerkin state solver, energy ledger, curl-transport residual and a priori monitors."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BlowUp, ConfigError, EstimateViolation
from .forms import SpectralSpace, get_space, state_term
from .spectral import SpectralField, _coeffs, analyze_scalar, analyze_velocity, synthesize_scalar

SCHEMES = ("RK4", "CNAB2")


@dataclass(frozen=True)
class SolverConfig:
    nu: float
    alpha: float
    T: float
    K: int
    dt: float
    scheme: str = "RK4"
    M: int | None = None
    lam: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.nu) and self.nu > 0):
            raise ConfigError(f"nu: viscosity must be > 0, got {self.nu}")
        if not (math.isfinite(self.alpha) and self.alpha >= 0):
            raise ConfigError(f"alpha: must be >= 0, got {self.alpha}")
        if not (math.isfinite(self.T) and self.T > 0):
            raise ConfigError(f"T: horizon must be > 0, got {self.T}")
        if int(self.K) != self.K or self.K < 1:
            raise ConfigError(f"K: truncation must be a positive integer, got {self.K}")
        if not (math.isfinite(self.dt) and 0 < self.dt <= self.T):
            raise ConfigError(f"dt: step must satisfy 0 < dt <= T, got {self.dt}")
        n = self.T / self.dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ConfigError(f"dt: T/dt = {n} is not an integer")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme: expected one of {SCHEMES}, got {self.scheme!r}")
        if self.M is not None and 3 * self.K >= 2 * self.M:
            raise ConfigError(f"M: grid of {self.M} nodes is too coarse for K={self.K}")
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise ConfigError(f"lambda: control weight must be >= 0, got {self.lam}")

    @property
    def N(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def times(self):
        return np.arange(self.N + 1) * self.dt

    @property
    def space(self) -> SpectralSpace:
        return get_space(int(self.K), float(self.alpha), self.M)

    def replace(self, **kw):
        d = dict(self.__dict__)
        d.update(kw)
        return SolverConfig(**d)


class ControlTrajectory:
    """Piecewise-constant-in-time control on equal subintervals of [0, T]."""

    def __init__(self, values, T):
        values = np.array(values, dtype=float)
        if values.ndim != 3 or values.shape[1] != values.shape[2] or values.shape[0] < 1:
            raise ValueError(f"control values must have shape (N_c, K, K), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("control coefficients must be finite")
        self.values = values
        self.T = float(T)

    @classmethod
    def zeros(cls, K, n_intervals, T):
        return cls(np.zeros((n_intervals, K, K)), T)

    @classmethod
    def constant(cls, f, n_intervals, T):
        c = _coeffs(f)
        return cls(np.repeat(c[None], n_intervals, axis=0), T)

    @property
    def n_intervals(self):
        return self.values.shape[0]

    @property
    def K(self):
        return self.values.shape[1]

    @property
    def h(self):
        return self.T / self.n_intervals

    def steps_per_interval(self, N):
        if N % self.n_intervals:
            raise ConfigError(f"control intervals ({self.n_intervals}) must divide the number of steps ({N})")
        return N // self.n_intervals

    def step_values(self, N):
        """Control value for each time step [t_n, t_{n+1})."""
        return np.repeat(self.values, self.steps_per_interval(N), axis=0)

    def inner(self, other) -> float:
        return float(self.h * np.sum(self.values * other.values))

    def norm(self) -> float:
        """L2(Q) norm."""
        return math.sqrt(self.inner(self))

    def norm_L1L2(self) -> float:
        return float(self.h * np.sum(np.sqrt(np.sum(self.values**2, axis=(1, 2)))))

    def _like(self, values):
        return ControlTrajectory(values, self.T)

    def __add__(self, other):
        return self._like(self.values + other.values)

    def __sub__(self, other):
        return self._like(self.values - other.values)

    def __mul__(self, s):
        return self._like(self.values * s)

    __rmul__ = __mul__

    def __neg__(self):
        return self._like(-self.values)

    def copy(self):
        return self._like(self.values.copy())


class Trajectory:
    """Snapshots on the uniform grid t_n = n dt, n = 0..N."""

    def __init__(self, times, coeffs):
        self.times = np.asarray(times, dtype=float)
        self.coeffs = np.asarray(coeffs, dtype=float)
        if self.coeffs.shape[0] != self.times.shape[0]:
            raise ValueError("one snapshot per time level is required")

    @property
    def N(self):
        return len(self.times) - 1

    @property
    def K(self):
        return self.coeffs.shape[1]

    def snapshot(self, n) -> SpectralField:
        return SpectralField(self.coeffs[n])

    def __sub__(self, other):
        return Trajectory(self.times, self.coeffs - _series(other, self.N))


def _series(f, N):
    """Broadcast a field, a trajectory or an (N+1, K, K) array to snapshot form."""
    if f is None:
        return None
    if isinstance(f, Trajectory):
        return f.coeffs
    c = _coeffs(f)
    if c.ndim == 2:
        return np.broadcast_to(c, (N + 1,) + c.shape)
    if c.shape[0] != N + 1:
        raise ConfigError(f"field series has {c.shape[0]} snapshots, expected {N + 1}")
    return c


def trapezoid_weights(N, dt):
    w = np.full(N + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


# ---------------------------------------------------------------- time stepping


def integrate(x0, cfg: SolverConfig, explicit, what="state"):
    """Advance mass * x' = -nu lam x + explicit(n, theta, x) over N steps.

    ``explicit`` is evaluated at t_n + theta dt.  RK4 calls it with theta in
    {0, 1/2, 1}; CNAB2 (Crank-Nicolson on the viscous term, Adams-Bashforth on
    the rest) only with theta = 0.
    """
    sp = cfg.space
    mass = sp.basis.mass
    lin = -cfg.nu * sp.basis.lam
    out = np.empty((cfg.N + 1,) + x0.shape)
    out[0] = x0
    x = x0.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        _march(x, out, cfg, explicit, what, lin, mass)
    return Trajectory(cfg.times, out)


def _march(x, out, cfg, explicit, what, lin, mass):
    N, dt = cfg.N, cfg.dt
    if cfg.scheme == "RK4":
        def f(n, theta, x):
            return (lin * x + explicit(n, theta, x)) / mass

        for n in range(N):
            k1 = f(n, 0.0, x)
            k2 = f(n, 0.5, x + 0.5 * dt * k1)
            k3 = f(n, 0.5, x + 0.5 * dt * k2)
            k4 = f(n, 1.0, x + dt * k3)
            x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(x)):
                raise BlowUp(n + 1, what)
            out[n + 1] = x
    else:
        lhs = mass / dt - 0.5 * lin
        rhs_lin = mass / dt + 0.5 * lin
        g_prev = None
        for n in range(N):
            g = explicit(n, 0.0, x)
            g_ab = g if g_prev is None else 1.5 * g - 0.5 * g_prev
            x = (rhs_lin * x + g_ab) / lhs
            g_prev = g
            if not np.all(np.isfinite(x)):
                raise BlowUp(n + 1, what)
            out[n + 1] = x


# ---------------------------------------------------------------- operations


def project_initial(y0, K, grid=None) -> SpectralField:
    """Galerkin initial datum from coefficients or from grid samples of shape (2, M, M)."""
    if isinstance(y0, SpectralField):
        c = y0.coeff
        if not np.all(np.isfinite(c)):
            raise ConfigError("y0: non-finite coefficients")
        out = np.zeros((K, K))
        k = min(K, c.shape[0])
        out[:k, :k] = c[:k, :k]
        return SpectralField(out)
    samples = np.asarray(y0, dtype=float)
    if not np.all(np.isfinite(samples)):
        raise ConfigError("y0: non-finite samples")
    if grid is None:
        raise ConfigError("y0: grid samples need a GridSpec")
    return analyze_velocity(samples, grid, K)


def rhs(state, u_at_t, cfg: SolverConfig) -> SpectralField:
    """Time derivative of the Galerkin state coefficients."""
    sp = cfg.space
    y = _coeffs(state)
    n = state_term(sp.samples(y), sp)
    return SpectralField((_coeffs(u_at_t) - cfg.nu * sp.basis.lam * y - n) / sp.basis.mass)


def simulate(cfg: SolverConfig, y0, u: ControlTrajectory | None = None) -> Trajectory:
    sp = cfg.space
    y0 = _coeffs(y0)
    if y0.shape != (cfg.K, cfg.K):
        raise ConfigError(f"y0 has truncation {y0.shape[0]}, config has K={cfg.K}")
    if u is None:
        u = ControlTrajectory.zeros(cfg.K, 1, cfg.T)
    if u.K != cfg.K:
        raise ConfigError(f"control has truncation {u.K}, config has K={cfg.K}")
    uv = u.step_values(cfg.N)

    def explicit(n, theta, x):
        return uv[n] - state_term(sp.samples(x), sp)

    return integrate(y0.copy(), cfg, explicit)


def energy(coeffs, basis):
    """E = (|y|^2 + 2 alpha |Dy|^2) / 2, vectorised over leading axes."""
    return 0.5 * np.sum(basis.mass * coeffs**2, axis=(-2, -1))


def dnorm2(coeffs, basis):
    return 0.5 * np.sum(basis.lam * coeffs**2, axis=(-2, -1))


def energy_ledger(traj: Trajectory, u: ControlTrajectory | None, cfg: SolverConfig) -> np.ndarray:
    """Per-step residual of d/dt E + 2 nu |Dy|^2 - (u, y), at step midpoints."""
    b = cfg.space.basis
    c = traj.coeffs
    N = traj.N
    uv = u.step_values(N) if u is not None else np.zeros((N,) + c.shape[1:])
    E = energy(c, b)
    mid = 0.5 * (c[1:] + c[:-1])
    return (E[1:] - E[:-1]) / cfg.dt + 2 * cfg.nu * dnorm2(mid, b) - np.sum(uv * mid, axis=(1, 2))


def curl_transport_residual(traj: Trajectory, u: ControlTrajectory | None, cfg: SolverConfig) -> np.ndarray:
    """L2 norm, per step, of the projected vorticity transport residual at midpoints.

    d/dt W + (nu/alpha) W + y . grad W - curl u - (nu/alpha) curl y,  W = curl sigma(y).
    """
    if cfg.alpha <= 0:
        raise ConfigError("alpha: curl-transport residual requires alpha > 0")
    sp = cfg.space
    b, grid = sp.basis, sp.grid
    c = traj.coeffs
    N = traj.N
    sq = np.sqrt(b.lam)
    uv = u.step_values(N) if u is not None else np.zeros((N,) + c.shape[1:])
    W = c * b.mass * sq
    out = np.empty(N)
    r = cfg.nu / cfg.alpha
    for n in range(N):
        ym = 0.5 * (c[n] + c[n + 1])
        s = sp.samples(ym)
        _, gw = synthesize_scalar(ym * b.mass * sq, grid, with_grad=True)
        adv = analyze_scalar(s.u[0] * gw[0] + s.u[1] * gw[1], grid, sp.K).coeff
        res = (W[n + 1] - W[n]) / cfg.dt + r * ym * b.mass * sq + adv - uv[n] * sq - r * ym * sq
        out[n] = math.sqrt(np.sum(res**2))
    return out


def apriori_monitor(traj: Trajectory, u: ControlTrajectory | None, cfg: SolverConfig,
                    slack=1e-9, raise_on_violation=True) -> dict:
    """Check the explicit-constant a priori bounds; record the generic-constant ones.

    energy bound:   sup|y|^2 + 2a sup|Dy|^2 + 2|Dy|_{L2(Q)}^2
                        <= 4 (|y0|^2 + 2a |Dy0|^2 + |u|_{L1 L2}^2)
    vorticity bound: sup|curl sigma y|^2
                        <= 2 |curl sigma y0|^2 + 2 sup|curl y|^2 + 4 |curl u|_{L1 L2}^2
    """
    b = cfg.space.basis
    c = traj.coeffs
    N = traj.N
    if u is None:
        u = ControlTrajectory.zeros(cfg.K, 1, cfg.T)
    tw = trapezoid_weights(N, cfg.dt)
    l2 = np.sum(c**2, axis=(1, 2))
    d2 = dnorm2(c, b)
    u_l1 = u.norm_L1L2()
    report = {}

    lhs = l2.max() + 2 * cfg.alpha * d2.max() + 2 * np.sum(tw * d2)
    rhs_ = 4 * (l2[0] + 2 * cfg.alpha * d2[0] + u_l1**2)
    report["energy"] = {"lhs": float(lhs), "rhs": float(rhs_), "ok": bool(lhs <= rhs_ + slack * (1 + rhs_))}

    if cfg.alpha > 0:
        cs2 = np.sum(b.mass**2 * b.lam * c**2, axis=(1, 2))
        curl2 = np.sum(b.lam * c**2, axis=(1, 2))
        curl_u_l1 = u.h * np.sum(np.sqrt(np.sum(b.lam * u.values**2, axis=(1, 2))))
        lhs = cs2.max()
        rhs_ = 2 * cs2[0] + 2 * curl2.max() + 4 * curl_u_l1**2
        report["vorticity"] = {"lhs": float(lhs), "rhs": float(rhs_), "ok": bool(lhs <= rhs_ + slack * (1 + rhs_))}

        # generic-constant bounds: ratios only
        h1 = np.sqrt(np.sum((1 + b.lam) * c**2, axis=(1, 2)))
        h3 = np.sqrt(np.sum(b.lam**3 * c**2, axis=(1, 2)))
        denom = h1.max() + math.sqrt(cs2.max())
        report["h3_ratio"] = float(cfg.alpha * h3.max() / denom) if denom > 0 else 0.0
        dy = np.diff(c, axis=0) / cfg.dt
        lhs_t = cfg.dt * (np.sum(dy**2) + cfg.alpha * np.sum(0.5 * b.lam * dy**2))
        h2sq = np.sum(tw * np.sum(b.lam**2 * c**2, axis=(1, 2)))
        denom = u.norm() ** 2 + (cfg.nu**2 + cs2.max()) * h2sq
        report["dt_ratio"] = float(lhs_t / denom) if denom > 0 else 0.0

    if raise_on_violation:
        for which in ("energy", "vorticity"):
            r = report.get(which)
            if r is not None and not r["ok"]:
                raise EstimateViolation(which, r["lhs"], r["rhs"])
    return report


def summary_rows(traj: Trajectory, u: ControlTrajectory | None, cfg: SolverConfig):
    """Rows for the trajectory summary CSV."""
    b = cfg.space.basis
    c = traj.coeffs
    E = energy(c, b)
    d2 = dnorm2(c, b)
    cs = np.sqrt(np.sum(b.mass**2 * b.lam * c**2, axis=(1, 2)))
    res = energy_ledger(traj, u, cfg)
    rows = []
    for n in range(traj.N + 1):
        rows.append((float(traj.times[n]), float(E[n]), float(d2[n]), float(cs[n]),
                     float(res[n - 1]) if n > 0 else None))
    return rows
