import math

import numpy as np
import pytest

from helpers import random_control
from sgflow.errors import ConfigError
from sgflow.sensitivity import (
    adjoint_energy_residual,
    gateaux_check,
    green_pairings,
    greens_gap,
    interval_average,
    linearized_energy_residual,
    lipschitz_ratio,
    solve_adjoint,
    solve_linearized,
)
from sgflow.spectral import SpectralField, random_field
from sgflow.state import ControlTrajectory, SolverConfig, simulate

SENS = dict(nu=0.1, alpha=0.5, K=4, lam=1e-2)


def setup(rng, dt=1e-2, T=1.0, nc=4):
    cfg = SolverConfig(T=T, dt=dt, **SENS)
    y0 = random_field(4, rng, 3.0)
    u = random_control(4, nc, T, rng, 3.0)
    return cfg, y0, u, simulate(cfg, y0, u)


def test_boundary_values(rng):
    cfg, _, u, y = setup(rng)
    w = random_control(4, 4, 1.0, rng)
    z = solve_linearized(y, y, w, cfg).z
    p = solve_adjoint(y, random_field(4, rng), cfg).p
    assert not np.any(z.coeffs[0]) and not np.any(p.coeffs[-1])
    assert np.any(z.coeffs[-1]) and np.any(p.coeffs[0])


def test_homogeneous_data_give_zero(rng):
    cfg, _, _, y = setup(rng)
    assert not np.any(solve_linearized(y, y, ControlTrajectory.zeros(4, 4, 1.0), cfg).z.coeffs)
    assert not np.any(solve_adjoint(y, SpectralField.zeros(4), cfg).p.coeffs)


def test_linearized_approximates_state_difference(rng):
    cfg, y0, u, y = setup(rng, dt=1e-2)
    w = random_control(4, 4, 1.0, rng, 3.0)
    z = solve_linearized(y, y, w, cfg).z.coeffs
    errs = []
    for rho in (1e-1, 1e-2):
        d = (simulate(cfg, y0, u + w * rho).coeffs - y.coeffs) / rho
        errs.append(np.sqrt(np.sum((d - z) ** 2, axis=(1, 2))).max())
    # first-order remainder in rho
    assert 7.0 <= errs[0] / errs[1] <= 13.0


def test_adjoint_closed_form_on_zero_state():
    cfg = SolverConfig(nu=0.1, alpha=0.5, T=1.0, K=4, dt=1e-3)
    y = simulate(cfg, SpectralField.zeros(4))
    g = 0.7
    p = solve_adjoint(y, SpectralField.mode(4, 1, 1, g), cfg).p
    lam = 2.0
    t = cfg.times
    exact = g * (1 - np.exp(-cfg.nu * lam * (cfg.T - t) / (1 + cfg.alpha * lam))) / (cfg.nu * lam)
    assert np.max(np.abs(p.coeffs[:, 0, 0] - exact)) <= 1e-10 * np.max(exact)
    assert np.max(np.abs(p.coeffs[:, 1:, :])) == 0 and np.max(np.abs(p.coeffs[:, 0, 1:])) == 0


def test_greens_gap_trivial_numerators(rng):
    cfg, _, _, y = setup(rng)
    lhs, rhs = green_pairings(ControlTrajectory.zeros(4, 4, 1.0), random_field(4, rng), y, cfg)
    assert lhs == 0 and rhs == 0
    lhs, rhs = green_pairings(random_control(4, 4, 1.0, rng), SpectralField.zeros(4), y, cfg)
    assert lhs == 0 and rhs == 0
    assert greens_gap(ControlTrajectory.zeros(4, 4, 1.0), SpectralField.zeros(4), y, cfg) == 0


def test_greens_gap_converges(rng):
    state = rng.bit_generator.state
    gaps = []
    for dt in (1e-3, 5e-4):
        rng.bit_generator.state = state
        cfg, _, _, y = setup(rng, dt=dt)
        w, f = random_control(4, 4, 1.0, rng), random_field(4, rng)
        gaps.append(greens_gap(w, f, y, cfg))
    assert gaps[0] <= 1e-3 and gaps[0] / gaps[1] >= 1.8


def test_greens_gap_zero_state(rng):
    cfg = SolverConfig(T=1.0, dt=1e-3, **SENS)
    y = simulate(cfg, SpectralField.zeros(4))
    assert greens_gap(random_control(4, 4, 1.0, rng), random_field(4, rng), y, cfg) <= 1e-10


def test_greens_gap_time_varying_source(rng):
    # f as a full series, the form used by the gradient (f = y - y_d)
    cfg, _, _, y = setup(rng, dt=1e-3)
    f = y.coeffs - random_field(4, rng).coeff
    assert greens_gap(random_control(4, 4, 1.0, rng), f, y, cfg) <= 1e-3


def test_grid_mismatch(rng):
    cfg, _, _, y = setup(rng, dt=1e-2)
    with pytest.raises(ConfigError):
        solve_adjoint(y, SpectralField.zeros(4), cfg.replace(dt=5e-3))
    with pytest.raises(ConfigError):
        solve_linearized(y, y, ControlTrajectory.zeros(4, 4, 1.0), cfg.replace(K=3))


def test_gateaux_slopes(rng):
    cfg, y0, u, _ = setup(rng, dt=1e-3)
    w = random_control(4, 4, 1.0, rng, 3.0)
    g = gateaux_check(u, w, [1e-1, 1e-2, 1e-3], cfg, y0, random_field(4, rng, 2.0))
    rem = [r[3] for r in g.rows]
    assert rem[0] > rem[1] > rem[2]
    assert all(5 <= r <= 20 for r in g.ratios)
    assert abs(g.dJ_adjoint - g.dJ_linearized) <= 1e-3 * abs(g.dJ_linearized)


def test_gateaux_zero_direction(rng):
    cfg, y0, u, _ = setup(rng)
    g = gateaux_check(u, ControlTrajectory.zeros(4, 4, 1.0), [0.5, 0.1], cfg, y0, SpectralField.zeros(4))
    assert all(r[2] == 0 for r in g.rows)


@pytest.mark.parametrize("rhos", [[0.1, 0.1], [0.0, 0.1], [1.0], [-0.5]])
def test_gateaux_rejects_bad_rhos(rng, rhos):
    cfg, y0, u, _ = setup(rng)
    with pytest.raises(ConfigError, match="rhos"):
        gateaux_check(u, u, rhos, cfg, y0, SpectralField.zeros(4))


def test_interval_average():
    N, dt = 8, 0.125
    t = np.arange(N + 1) * dt
    series = np.broadcast_to(t[:, None, None], (N + 1, 2, 2))
    avg = interval_average(series, 2, dt)
    # trapezoid is exact for linear data: interval midpoints
    assert np.allclose(avg[:, 0, 0], [0.25, 0.75])
    with pytest.raises(ConfigError):
        interval_average(series, 3, dt)


def test_lipschitz_monitor(rng):
    cfg = SolverConfig(T=1.0, dt=1e-2, **SENS)
    y0 = random_field(4, rng, 2.0)
    ratios = [lipschitz_ratio(cfg, y0, random_control(4, 4, 1.0, rng, 2.0), random_control(4, 4, 1.0, rng, 2.0))
              for _ in range(10)]
    assert all(math.isfinite(r) and r > 0 for r in ratios)
    assert max(ratios) / min(ratios) < 10


def _energy_orders(rng, residual_of):
    state = rng.bit_generator.state
    r = []
    for dt in (1e-2, 5e-3):
        rng.bit_generator.state = state
        cfg, _, _, y = setup(rng, dt=dt)
        r.append(np.max(np.abs(residual_of(cfg, y, rng))))
    return r[0] / r[1]


def test_linearized_energy_identity_converges(rng):
    def res(cfg, y, rng):
        return linearized_energy_residual(solve_linearized(y, y, random_control(4, 4, 1.0, rng, 3.0), cfg), cfg)

    assert 3.0 <= _energy_orders(rng, res) <= 5.0


def test_adjoint_energy_identity_converges(rng):
    def res(cfg, y, rng):
        return adjoint_energy_residual(solve_adjoint(y, random_field(4, rng, 3.0), cfg), cfg)

    assert 3.0 <= _energy_orders(rng, res) <= 5.0
