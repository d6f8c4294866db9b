"""Acceptance criteria, one test each; the terminal summary lists pass/fail per criterion."""
import math
import subprocess
import sys
import time

import numpy as np

from helpers import random_control, rel
from sgflow import forms as F
from sgflow.optimizer import CONVERGED, Ball, evaluate_J, gradient, optimize
from sgflow.sensitivity import gateaux_check, greens_gap, lipschitz_ratio
from sgflow.spectral import SpectralField, random_field
from sgflow.state import (
    ControlTrajectory,
    SolverConfig,
    apriori_monitor,
    curl_transport_residual,
    energy_ledger,
    simulate,
)

SEED = 20240611
BASE = dict(nu=0.1, alpha=0.5, T=1.0, K=4)
SENS = dict(nu=0.1, alpha=0.5, K=4, lam=1e-2)


def _battery(n=100, K=6):
    rng = np.random.default_rng(SEED)
    return [tuple(random_field(K, rng) for _ in range(3)) for _ in range(n)]


def test_01_single_mode_decay(record_criterion):
    cfg = SolverConfig(dt=1e-3, scheme="RK4", **BASE)
    t0 = time.perf_counter()
    y = simulate(cfg, SpectralField.mode(4, 1, 1))
    elapsed = time.perf_counter() - t0
    err = rel(y.coeffs[-1, 0, 0], math.exp(-0.1))
    ok = err <= 1e-8 and elapsed < 5.0
    record_criterion(1, "analytic single-mode decay", ok, f"rel err {err:.2e} (<= 1e-8), {elapsed:.2f} s (< 5 s)")
    assert ok


def test_02_trilinear_identity(record_criterion):
    space = F.get_space(6, 0.5)
    worst = max(rel(F.curl_sigma_cross_inner(y, z, p, space), F.curl_sigma_cross_inner_bform(y, z, p, space))
                for y, z, p in _battery())
    record_criterion(2, "trilinear identity, 100 triples at K=6", worst <= 1e-11, f"worst rel {worst:.2e} (<= 1e-11)")
    assert worst <= 1e-11


def test_03_adjoint_identity(record_criterion):
    space = F.get_space(6, 0.5)
    worst = max(rel(F.curl_sigma_of_cross_inner(y, z, p, space), F.curl_sigma_of_cross_inner_bform(y, z, p, space))
                for y, z, p in _battery())
    record_criterion(3, "adjoint identity, 100 triples at K=6", worst <= 1e-10, f"worst rel {worst:.2e} (<= 1e-10)")
    assert worst <= 1e-10


def test_04_energy_neutrality(record_criterion):
    space = F.get_space(6, 0.5)
    worst = 0.0
    for y, _, _ in _battery():
        N = F.state_nonlinear(y, space).coeff
        worst = max(worst, abs(np.sum(N * y.coeff)) / F.cubic_scale(y, space))
    record_criterion(4, "energy neutrality of the nonlinear term", worst <= 1e-12,
                     f"worst |<N(y), y>| / cubic scale {worst:.2e} (<= 1e-12)")
    assert worst <= 1e-12


def _two_mode(dt):
    rng = np.random.default_rng(SEED)
    a, b = rng.uniform(0.5, 1.5, size=2)
    cfg = SolverConfig(dt=dt, **BASE)
    y0 = SpectralField.from_modes(4, [(1, 1, a), (2, 1, b)])
    u = ControlTrajectory.constant(SpectralField.mode(4, 1, 2, 0.5), 1, cfg.T)
    return cfg, simulate(cfg, y0, u), u


def _residual_pair(residual):
    return [np.max(np.abs(residual(y, u, cfg))) for cfg, y, u in (_two_mode(1e-2), _two_mode(5e-3))]


def test_05_energy_identity_order(record_criterion):
    r1, r2 = _residual_pair(energy_ledger)
    ratio = r1 / r2
    ok = 3.5 <= ratio <= 4.5
    record_criterion(5, "energy identity residual order", ok, f"ratio {ratio:.3f} (in [3.5, 4.5])")
    assert ok


def test_06_curl_transport(record_criterion):
    r1, r2 = _residual_pair(curl_transport_residual)
    cfg = SolverConfig(dt=1e-3, **BASE)
    single = np.max(curl_transport_residual(simulate(cfg, SpectralField.mode(4, 1, 1)), None, cfg))
    ok = r2 / r1 <= 0.6 and single <= 1e-8
    record_criterion(6, "curl-transport residual", ok,
                     f"halving ratio {r2 / r1:.3f} (<= 0.6), single mode {single:.2e} (<= 1e-8)")
    assert ok


def test_07_explicit_constant_estimates(record_criterion):
    rng = np.random.default_rng(SEED)
    cfg = SolverConfig(dt=2e-3, **BASE)
    violations, worst = 0, {"energy": 0.0, "vorticity": 0.0}
    for _ in range(20):
        y0 = random_field(4, rng, 2.0)
        u = random_control(4, 4, cfg.T, rng, 2.0)
        rep = apriori_monitor(simulate(cfg, y0, u), u, cfg, raise_on_violation=False)
        for which in worst:
            ratio = rep[which]["lhs"] / rep[which]["rhs"]
            worst[which] = max(worst[which], ratio)
            violations += ratio > 1.0
    ok = violations == 0
    record_criterion(7, "a priori estimates with explicit constants, 20 runs", ok,
                     f"{violations} violations; worst lhs/rhs energy {worst['energy']:.3f}, "
                     f"vorticity {worst['vorticity']:.3f}")
    assert ok


def _gap(dt, zero_state=False):
    rng = np.random.default_rng(SEED)
    cfg = SolverConfig(T=1.0, dt=dt, **SENS)
    if zero_state:
        y0, u = SpectralField.zeros(4), None
    else:
        y0, u = random_field(4, rng, 3.0), random_control(4, 4, cfg.T, rng, 3.0)
    w, f = random_control(4, 4, cfg.T, rng), random_field(4, rng)
    return greens_gap(w, f, simulate(cfg, y0, u), cfg)


def test_08_green_duality(record_criterion):
    g1, g2, g0 = _gap(1e-3), _gap(5e-4), _gap(1e-3, zero_state=True)
    ok = g1 <= 1e-3 and g1 / g2 >= 1.8 and g0 <= 1e-10
    record_criterion(8, "Green duality", ok,
                     f"gap {g1:.2e} (<= 1e-3), ratio {g1 / g2:.2f} (>= 1.8), zero state {g0:.1e} (<= 1e-10)")
    assert ok


def test_09_gateaux_expansion(record_criterion):
    rng = np.random.default_rng(SEED)
    cfg = SolverConfig(T=1.0, dt=1e-3, **SENS)
    y0, yd = random_field(4, rng, 3.0), random_field(4, rng, 2.0)
    u, w = random_control(4, 4, cfg.T, rng, 3.0), random_control(4, 4, cfg.T, rng, 3.0)
    g = gateaux_check(u, w, [1e-1, 1e-2, 1e-3], cfg, y0, yd)
    rem = [row[3] for row in g.rows]
    match = rel(g.dJ_adjoint, g.dJ_linearized)
    ok = (all(b < a for a, b in zip(rem, rem[1:])) and all(5 <= r <= 20 for r in g.ratios) and match <= 1e-3)
    record_criterion(9, "Gateaux expansion", ok,
                     f"ratios {', '.join(f'{r:.2f}' for r in g.ratios)} (in [5, 20]), DJ mismatch {match:.2e} (<= 1e-3)")
    assert ok


def test_10_gradient_finite_differences(record_criterion):
    # T = 0.8 so that 16 control intervals divide the 800 steps
    rng = np.random.default_rng(SEED)
    cfg = SolverConfig(T=0.8, dt=1e-3, **SENS)
    y0, yd = random_field(4, rng, 3.0), random_field(4, rng, 2.0)
    u = random_control(4, 16, cfg.T, rng, 3.0)
    g = gradient(u, yd, cfg, y0)
    rho, worst = 1e-4, 0.0
    for _ in range(5):
        d = random_control(4, 16, cfg.T, rng)
        fd = (evaluate_J(u + d * rho, yd, cfg, y0) - evaluate_J(u - d * rho, yd, cfg, y0)) / (2 * rho)
        worst = max(worst, rel(fd, g.inner(d)))
    record_criterion(10, "adjoint gradient vs central differences", worst <= 1e-3, f"worst rel {worst:.2e} (<= 1e-3)")
    assert worst <= 1e-3


def test_11_synthetic_recovery(record_criterion):
    rng = np.random.default_rng(SEED)
    cfg = SolverConfig(dt=1e-3, lam=1e-3, **BASE)
    y0 = random_field(4, rng, 2.0)
    ustar = random_control(4, 10, cfg.T, rng, 5.0)
    yd = simulate(cfg, y0, ustar)
    t0 = time.perf_counter()
    rep = optimize(cfg, y0, yd, Ball(2 * ustar.norm()), n_intervals=10)
    elapsed = time.perf_counter() - t0
    Js = [it["J"] for it in rep.iterates]
    iters = len(Js) - 1
    ok = (rep.status == CONVERGED and all(b <= a for a, b in zip(Js, Js[1:])) and Js[-1] <= 0.1 * Js[0]
          and rep.vi_residual >= -1e-6 * (1 + rep.J) and iters <= 200 and elapsed < 600)
    record_criterion(11, "optimizer synthetic recovery", ok,
                     f"{rep.status} in {iters} iterations, J ratio {Js[-1] / Js[0]:.2e} (<= 0.1), "
                     f"vi {rep.vi_residual:.1e}, {elapsed:.0f} s (< 600 s)")
    assert ok


def test_12_lipschitz_monitor(record_criterion):
    rng = np.random.default_rng(SEED)
    cfg = SolverConfig(T=1.0, dt=1e-2, **SENS)
    y0 = random_field(4, rng, 2.0)
    ratios = [lipschitz_ratio(cfg, y0, random_control(4, 4, cfg.T, rng, 2.0), random_control(4, 4, cfg.T, rng, 2.0))
              for _ in range(10)]
    finite = all(math.isfinite(r) and r > 0 for r in ratios)
    spread = max(ratios) / min(ratios) if finite else math.inf
    ok = finite and spread < 10
    record_criterion(12, "Lipschitz monitor over 10 control pairs", ok, f"spread {spread:.2f} (< 10)")
    assert ok


def test_13_determinism(record_criterion, tmp_path):
    reports = []
    for name in ("a", "b"):
        out = tmp_path / name
        proc = subprocess.run([sys.executable, "-m", "sgflow", "verify", "--suite", "all", "--seed", "42",
                               "--out", str(out)], capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        reports.append((out / "verify_report.json").read_bytes())
    ok = reports[0] == reports[1]
    record_criterion(13, "verify report is byte-identical across runs", ok, f"{len(reports[0])} bytes, identical={ok}")
    assert ok
