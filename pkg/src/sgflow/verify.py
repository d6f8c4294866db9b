"""Seeded invariant battery behind ``sgflow verify``.

Every check draws from its own random stream (seed, check name), so the report does
not depend on which checks run or in what order.  Results are sorted by name.
"""
from __future__ import annotations

import math
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import forms as F
from .optimizer import (
    CONVERGED,
    Ball,
    Box,
    evaluate_J,
    gradient,
    optimize,
    project_admissible,
    vi_residual,
    value_and_gradient,
)
from .sensitivity import gateaux_check, greens_gap, lipschitz_ratio
from .spectral import (
    SpectralField,
    analyze_velocity,
    apply_sigma,
    evaluate_velocity,
    random_field,
    synthesize_velocity,
)
from .state import (
    ControlTrajectory,
    SolverConfig,
    apriori_monitor,
    curl_transport_residual,
    energy_ledger,
    simulate,
)

SUITES = ("forms", "state", "sensitivity", "optimizer")


@dataclass(frozen=True)
class Check:
    name: str
    suite: str
    anchor: str
    fn: Callable


_REGISTRY: dict[str, Check] = {}


def check(suite, anchor):
    def deco(fn):
        name = f"{suite}.{fn.__name__}"
        _REGISTRY[name] = Check(name, suite, anchor, fn)
        return fn

    return deco


def _rng(seed, name):
    return np.random.default_rng([seed, zlib.crc32(name.encode())])


def _rel(a, b, floor=1e-300):
    return abs(a - b) / max(abs(a), abs(b), floor)


def _at_most(measured, threshold):
    return {"measured": float(measured), "threshold": threshold, "ok": bool(measured <= threshold)}


def _at_least(measured, threshold):
    return {"measured": float(measured), "threshold": threshold, "ok": bool(measured >= threshold)}


def _within(measured, lo, hi):
    return {"measured": float(measured), "threshold": [lo, hi], "ok": bool(lo <= measured <= hi)}


def _random_control(K, n_intervals, T, rng, scale=1.0):
    return ControlTrajectory(np.stack([random_field(K, rng, scale).coeff for _ in range(n_intervals)]), T)


# ------------------------------------------------------------ forms / spectral core

_TRIPLES = 100
_K_FORMS = 6


def _triples(rng, K=_K_FORMS, n=_TRIPLES):
    return [tuple(random_field(K, rng) for _ in range(3)) for _ in range(n)]


@check("forms", "Stokes eigenbasis: grid synthesis then projection is the identity")
def transform_roundtrip(rng):
    sp = F.get_space(_K_FORMS, 0.5)
    err = 0.0
    for _ in range(10):
        f = random_field(_K_FORMS, rng)
        back = analyze_velocity(synthesize_velocity(f, sp.grid), sp.grid, _K_FORMS)
        err = max(err, np.max(np.abs(back.coeff - f.coeff)) / np.max(np.abs(f.coeff)))
    return _at_most(err, 1e-12)


@check("forms", "Stokes eigenbasis: closed-form point evaluation matches grid synthesis")
def pointwise_evaluation(rng):
    sp = F.get_space(_K_FORMS, 0.5)
    f = random_field(_K_FORMS, rng)
    X1, X2 = np.meshgrid(sp.grid.nodes, sp.grid.nodes, indexing="ij")
    ev = evaluate_velocity(f, X1, X2)
    syn = synthesize_velocity(f, sp.grid)
    err = max(np.max(np.abs(ev["u"] - syn.u)), np.max(np.abs(ev["grad"] - syn.grad)))
    return _at_most(err / np.max(np.abs(syn.grad)), 1e-12)


@check("forms", "sigma = I - alpha Delta is diagonal in the eigenbasis; inverse round trip")
def sigma_roundtrip(rng):
    sp = F.get_space(_K_FORMS, 0.5)
    f = random_field(_K_FORMS, rng)
    back = apply_sigma(apply_sigma(f, sp.basis), sp.basis, inverse=True)
    return _at_most(np.max(np.abs(back.coeff - f.coeff)) / np.max(np.abs(f.coeff)), 1e-14)


@check("forms", "trilinear identity: (curl sigma(y) x z, phi) = b(phi, z, sigma y) - b(z, phi, sigma y)")
def trilinear_state_identity(rng):
    sp = F.get_space(_K_FORMS, 0.5)
    err = max(_rel(F.curl_sigma_cross_inner(y, z, p, sp), F.curl_sigma_cross_inner_bform(y, z, p, sp))
              for y, z, p in _triples(rng))
    return _at_most(err, 1e-11)


@check("forms", "adjoint trilinear identity: (curl sigma(y x z), phi) = b(z, y, sigma phi) - b(y, z, sigma phi)")
def trilinear_adjoint_identity(rng):
    sp = F.get_space(_K_FORMS, 0.5)
    err = max(_rel(F.curl_sigma_of_cross_inner(y, z, p, sp), F.curl_sigma_of_cross_inner_bform(y, z, p, sp))
              for y, z, p in _triples(rng))
    return _at_most(err, 1e-10)


@check("forms", "trilinear form: b(phi, z, y) = -b(phi, y, z) for div-free tangent phi")
def trilinear_skew_symmetry(rng):
    sp = F.get_space(_K_FORMS, 0.5)
    err = 0.0
    for p, z, y in _triples(rng):
        a, b = F.trilinear_b(p, z, y, sp), F.trilinear_b(p, y, z, sp)
        err = max(err, abs(a + b) / max(abs(a), abs(b)))
    return _at_most(err, 1e-12)


@check("forms", "energy neutrality of the state nonlinearity: (curl sigma(y) x y, y) = 0")
def energy_neutrality(rng):
    sp = F.get_space(_K_FORMS, 0.5)
    err = 0.0
    for y, _, _ in _triples(rng):
        N = F.state_nonlinear(y, sp).coeff
        err = max(err, abs(np.sum(N * y.coeff)) / F.cubic_scale(y, sp))
    return _at_most(err, 1e-12)


@check("forms", "projected state nonlinearity matches its trilinear-form expression")
def state_nonlinear_routes(rng):
    sp = F.get_space(4, 0.5)
    err = 0.0
    for _ in range(10):
        y = random_field(4, rng)
        a = F.state_nonlinear(y, sp).coeff
        b = F.state_nonlinear_bform(y, sp)
        err = max(err, np.max(np.abs(a - b)) / np.max(np.abs(b)))
    return _at_most(err, 1e-11)


# ------------------------------------------------------------ state solver

_BASE = dict(nu=0.1, alpha=0.5, T=1.0, K=4)


def _two_mode_run(rng, dt):
    cfg = SolverConfig(dt=dt, **_BASE)
    a, b = rng.uniform(0.5, 1.5, size=2)
    y0 = SpectralField.from_modes(4, [(1, 1, a), (2, 1, b)])
    u = ControlTrajectory.constant(SpectralField.mode(4, 1, 2, 0.5), 1, cfg.T)
    return cfg, y0, u


@check("state", "single-mode decay: y(t) = exp(-nu lam t / (1 + alpha lam)) e_11")
def single_mode_decay(rng):
    cfg = SolverConfig(dt=1e-3, **_BASE)
    y = simulate(cfg, SpectralField.mode(4, 1, 1), None)
    return _at_most(_rel(y.coeffs[-1, 0, 0], math.exp(-0.1)), 1e-8)


def _order_ratio(rng, residual):
    state = rng.bit_generator.state
    out = []
    for dt in (1e-2, 5e-3):
        rng.bit_generator.state = state
        cfg, y0, u = _two_mode_run(rng, dt)
        out.append(np.max(np.abs(residual(simulate(cfg, y0, u), u, cfg))))
    return out


@check("state", "energy identity: ledger residual is second order in dt")
def energy_ledger_order(rng):
    r1, r2 = _order_ratio(rng, energy_ledger)
    return _within(r1 / r2, 3.5, 4.5)


@check("state", "curl-transport equation: residual shrinks when dt is halved")
def curl_transport_order(rng):
    r1, r2 = _order_ratio(rng, curl_transport_residual)
    return _at_most(r2 / r1, 0.6)


@check("state", "curl-transport equation holds exactly for a single mode")
def curl_transport_single_mode(rng):
    cfg = SolverConfig(dt=1e-3, **_BASE)
    y = simulate(cfg, SpectralField.mode(4, 1, 1), None)
    return _at_most(np.max(curl_transport_residual(y, None, cfg)), 1e-8)


def _estimate_runs(rng, n=20):
    cfg = SolverConfig(dt=2e-3, **_BASE)
    worst = {"energy": 0.0, "vorticity": 0.0}
    for _ in range(n):
        y0 = random_field(4, rng, 2.0)
        u = _random_control(4, 4, cfg.T, rng, 2.0)
        rep = apriori_monitor(simulate(cfg, y0, u), u, cfg, raise_on_violation=False)
        for which in worst:
            worst[which] = max(worst[which], rep[which]["lhs"] / rep[which]["rhs"])
    return worst


@check("state", "a priori energy estimate with explicit constant 4, 20 seeded runs")
def apriori_energy_bound(rng):
    return _at_most(_estimate_runs(rng)["energy"], 1.0)


@check("state", "a priori curl sigma estimate with explicit constants 2, 2, 4, 20 seeded runs")
def apriori_vorticity_bound(rng):
    return _at_most(_estimate_runs(rng)["vorticity"], 1.0)


# ------------------------------------------------------------ sensitivity

_SENS = dict(nu=0.1, alpha=0.5, K=4, lam=1e-2)


def _duality_data(rng, dt, zero_state=False):
    cfg = SolverConfig(T=1.0, dt=dt, **_SENS)
    y0 = SpectralField.zeros(4) if zero_state else random_field(4, rng, 3.0)
    u = ControlTrajectory.zeros(4, 4, cfg.T) if zero_state else _random_control(4, 4, cfg.T, rng, 3.0)
    w = _random_control(4, 4, cfg.T, rng)
    f = random_field(4, rng)
    return cfg, y0, u, w, f


def _gap(rng, dt, zero_state=False):
    state = rng.bit_generator.state
    cfg, y0, u, w, f = _duality_data(rng, dt, zero_state)
    rng.bit_generator.state = state
    return greens_gap(w, f, simulate(cfg, y0, u), cfg)


@check("sensitivity", "Green duality: int (w, p) = int (f, z), normalized gap at dt = 1e-3")
def green_duality_gap(rng):
    return _at_most(_gap(rng, 1e-3), 1e-3)


@check("sensitivity", "Green duality: gap(dt) / gap(dt/2)")
def green_duality_order(rng):
    state = rng.bit_generator.state
    g1 = _gap(rng, 1e-3)
    rng.bit_generator.state = state
    g2 = _gap(rng, 5e-4)
    return _at_least(g1 / g2, 1.8)


@check("sensitivity", "Green duality is exact along the zero state")
def green_duality_zero_state(rng):
    return _at_most(_gap(rng, 1e-3, zero_state=True), 1e-10)


def _gateaux(rng):
    cfg = SolverConfig(T=1.0, dt=1e-3, **_SENS)
    y0, yd = random_field(4, rng, 3.0), random_field(4, rng, 2.0)
    u, w = _random_control(4, 4, cfg.T, rng, 3.0), _random_control(4, 4, cfg.T, rng, 3.0)
    return gateaux_check(u, w, [1e-1, 1e-2, 1e-3], cfg, y0, yd)


@check("sensitivity", "Gateaux expansion: consecutive remainder/rho ratios over rho = 1e-1, 1e-2, 1e-3")
def gateaux_remainder(rng):
    g = _gateaux(rng)
    rem = [row[3] for row in g.rows]
    ok = all(b < a for a, b in zip(rem, rem[1:])) and all(5.0 <= r <= 20.0 for r in g.ratios)
    return {"measured": g.ratios, "threshold": [5.0, 20.0], "ok": bool(ok)}


@check("sensitivity", "Gateaux derivative: adjoint route against linearized route")
def gateaux_adjoint_match(rng):
    g = _gateaux(rng)
    return _at_most(_rel(g.dJ_adjoint, g.dJ_linearized), 1e-3)


@check("sensitivity", "adjoint gradient against central differences, 5 directions, rho = 1e-4")
def gradient_fd(rng):
    nc = 16
    cfg = SolverConfig(T=0.8, dt=1e-3, **_SENS)
    y0, yd = random_field(4, rng, 3.0), random_field(4, rng, 2.0)
    u = _random_control(4, nc, cfg.T, rng, 3.0)
    g = gradient(u, yd, cfg, y0)
    err, rho = 0.0, 1e-4
    for _ in range(5):
        d = _random_control(4, nc, cfg.T, rng)
        fd = (evaluate_J(u + d * rho, yd, cfg, y0) - evaluate_J(u - d * rho, yd, cfg, y0)) / (2 * rho)
        err = max(err, _rel(fd, g.inner(d)))
    return _at_most(err, 1e-3)


@check("sensitivity", "Lipschitz continuity of the control-to-state map: ratio spread over 10 pairs")
def lipschitz_spread(rng):
    cfg = SolverConfig(T=1.0, dt=1e-2, **_SENS)
    y0 = random_field(4, rng, 2.0)
    ratios = [lipschitz_ratio(cfg, y0, _random_control(4, 4, cfg.T, rng, 2.0), _random_control(4, 4, cfg.T, rng, 2.0))
              for _ in range(10)]
    if not all(math.isfinite(r) and r > 0 for r in ratios):
        return {"measured": math.inf, "threshold": 10.0, "ok": False}
    spread = max(ratios) / min(ratios)
    return {"measured": spread, "threshold": 10.0, "ok": spread < 10.0}


# ------------------------------------------------------------ optimizer


def _sampled_pairs(rng, n=20):
    return [(_random_control(3, 3, 1.0, rng, 3.0), _random_control(3, 3, 1.0, rng, 3.0)) for _ in range(n)]


def _sets():
    return (Ball(0.5), Box(-0.2, 0.3))


@check("optimizer", "projection onto U_ad is idempotent")
def projection_idempotent(rng):
    err = 0.0
    for S in _sets():
        for u, _ in _sampled_pairs(rng):
            p = project_admissible(u, S)
            err = max(err, (project_admissible(p, S) - p).norm())
    return _at_most(err, 1e-12)


@check("optimizer", "projection onto U_ad is nonexpansive")
def projection_nonexpansive(rng):
    worst = -math.inf
    for S in _sets():
        for u, v in _sampled_pairs(rng):
            worst = max(worst, (project_admissible(u, S) - project_admissible(v, S)).norm() - (u - v).norm())
    return _at_most(max(worst, 0.0), 1e-12)


@check("optimizer", "variational inequality residual on the ball: closed form against sphere sampling")
def vi_residual_sphere(rng):
    K, nc, R = 2, 2, 1.5
    u = _random_control(K, nc, 1.0, rng, 0.5)
    g = _random_control(K, nc, 1.0, rng)
    closed = vi_residual(u, g, Ball(R))
    V = rng.standard_normal((200000, nc, K, K))
    V *= R / np.sqrt(u.h * np.sum(V**2, axis=(1, 2, 3)))[:, None, None, None]
    sampled = u.h * np.einsum("sikm,ikm->s", V - u.values[None], g.values)
    # no sampled point may beat the closed form, and the extremizer attains it
    v_star = g * (-R / g.norm())
    attained = g.inner(v_star - u)
    err = max(closed - sampled.min(), 0.0) + abs(attained - closed)
    return _at_most(err / abs(closed), 1e-12)


@check("optimizer", "tracking functional: closed-form decay integral for y0 = e_11, u = 0")
def tracking_closed_form(rng):
    cfg = SolverConfig(nu=0.1, alpha=0.5, T=1.0, K=4, dt=1e-3)
    J = evaluate_J(ControlTrajectory.zeros(4, 1, 1.0), SpectralField.zeros(4), cfg, SpectralField.mode(4, 1, 1))
    return _at_most(_rel(J, 0.5 * (1 - math.exp(-0.2)) / 0.2), 1e-6)


@check("optimizer", "optimality system at a reachable target: converged at iteration 0")
def converged_at_start(rng):
    cfg = SolverConfig(nu=0.1, alpha=0.5, T=1.0, K=4, dt=1e-2, lam=1e-3)
    y0 = random_field(4, rng, 2.0)
    yd = simulate(cfg, y0, None)
    rep = optimize(cfg, y0, yd, Ball(1.0), n_intervals=4)
    ok = rep.status == CONVERGED and len(rep.iterates) == 1
    return {"measured": abs(rep.vi_residual), "threshold": 0.0, "ok": bool(ok and rep.vi_residual == 0.0)}


def _recovery(rng):
    cfg = SolverConfig(nu=0.1, alpha=0.5, T=1.0, K=4, dt=1e-2, lam=1e-3)
    y0 = random_field(4, rng, 2.0)
    ustar = _random_control(4, 4, cfg.T, rng, 5.0)
    yd = simulate(cfg, y0, ustar)
    return optimize(cfg, y0, yd, Ball(2 * ustar.norm()), n_intervals=4)


@check("optimizer", "synthetic recovery: J(final) / J(u0) with u0 = 0, converged within 200 iterations")
def recovery_reduction(rng):
    rep = _recovery(rng)
    Js = [it["J"] for it in rep.iterates]
    ok = (rep.status == CONVERGED and len(Js) <= 201 and all(b <= a for a, b in zip(Js, Js[1:]))
          and rep.vi_residual >= -1e-6 * (1 + rep.J))
    ratio = Js[-1] / Js[0]
    return {"measured": ratio, "threshold": 0.1, "ok": bool(ok and ratio <= 0.1)}


@check("optimizer", "argmin scale invariance on a single-mode instance")
def scale_invariance(rng):
    cfg = SolverConfig(nu=0.1, alpha=0.5, T=1.0, K=3, dt=1e-2, lam=1e-2)
    y0 = SpectralField.zeros(3)
    a = rng.uniform(1.0, 2.0)
    out = []
    for s in (1.0, 3.0):
        yd = SpectralField.mode(3, 1, 1, a * s)
        rep = optimize(cfg, y0, yd, Ball(0.5 * s), n_intervals=4, tol_vi=1e-12)
        out.append((rep, s))
    (r1, _), (r3, s) = out
    err = (r3.u - r1.u * s).norm() / (r3.u.norm())
    ok = r1.status == r3.status == CONVERGED and _rel(r3.J, s * s * r1.J) <= 1e-6
    return {"measured": err, "threshold": 1e-6, "ok": bool(ok and err <= 1e-6)}


@check("optimizer", "gradient vanishes for zero data")
def zero_gradient(rng):
    cfg = SolverConfig(nu=0.1, alpha=0.5, T=1.0, K=4, dt=1e-2, lam=1e-2)
    _, g = value_and_gradient(ControlTrajectory.zeros(4, 4, 1.0), SpectralField.zeros(4), cfg, SpectralField.zeros(4))
    return _at_most(g.norm(), 0.0)


# ------------------------------------------------------------ runner


def select(suite: str) -> list[Check]:
    if suite == "all":
        return sorted(_REGISTRY.values(), key=lambda c: c.name)
    if suite not in SUITES:
        raise KeyError(suite)
    return sorted((c for c in _REGISTRY.values() if c.suite == suite), key=lambda c: c.name)


def _run_one(c: Check, seed: int) -> dict:
    try:
        r = c.fn(_rng(seed, c.name))
    except Exception as exc:  # a crashing check is a failing check
        r = {"measured": None, "threshold": None, "ok": False, "error": f"{type(exc).__name__}: {exc}"}
    measured = r["measured"]
    measured = [float(x) for x in measured] if isinstance(measured, list) else measured
    out = {"check": c.name, "anchor": c.anchor, "status": "pass" if r["ok"] else "fail",
           "measured": measured, "threshold": r["threshold"]}
    if "error" in r:
        out["error"] = r["error"]
    return out


def thread_cap() -> int:
    try:
        return max(1, int(os.environ.get("SGFLOW_THREADS", "1")))
    except ValueError:
        return 1


def run_suite(suite: str, seed: int = 0, threads: int | None = None) -> dict:
    checks = select(suite)
    threads = thread_cap() if threads is None else threads
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(lambda c: _run_one(c, seed), checks))
    else:
        results = [_run_one(c, seed) for c in checks]
    results.sort(key=lambda r: r["check"])
    failed = [r["check"] for r in results if r["status"] != "pass"]
    return {"suite": suite, "seed": int(seed), "passed": not failed, "failed": failed, "checks": results}
