"""Trilinear form and the nonlinear couplings of the state, linearized and adjoint equations.

All couplings are evaluated pointwise on the quadrature grid (vorticity from its
spectral coefficients, cross products in physical space) and then projected on
the basis.  The b-form expressions are kept as an independent route for tests.
"""
from __future__ import annotations

from functools import lru_cache
from math import comb

import numpy as np

from .spectral import (
    BasisTable,
    GridSpec,
    SpectralField,
    _coeffs,
    _project,
    build_basis,
    check_compatible,
    default_M,
    make_grid,
    synthesize_scalar,
    synthesize_velocity,
    velocity_partials,
    weighted_norm,
)


class SpectralSpace:
    """Basis table plus quadrature grid for one truncation."""

    def __init__(self, K, alpha, M=None):
        self.basis: BasisTable = build_basis(K, alpha)
        self.grid: GridSpec = make_grid(default_M(K) if M is None else M)
        check_compatible(K, self.grid)

    @property
    def K(self):
        return self.basis.K

    @property
    def alpha(self):
        return self.basis.alpha

    def samples(self, c):
        """Grid data needed by every coupling: velocity, gradient, curl sigma."""
        c = _coeffs(c)
        v = synthesize_velocity(c, self.grid)
        omega = synthesize_scalar(c * self.basis.mass * np.sqrt(self.basis.lam), self.grid)
        return Samples(v.u, v.grad, omega)

    def project(self, F):
        return _project(F, self.grid, self.K)


@lru_cache(maxsize=16)
def get_space(K, alpha, M=None) -> SpectralSpace:
    return SpectralSpace(K, alpha, M)


class Samples:
    __slots__ = ("u", "grad", "omega")

    def __init__(self, u, grad, omega):
        self.u, self.grad, self.omega = u, grad, omega

    @staticmethod
    def lerp(a, b, theta):
        return Samples(
            (1 - theta) * a.u + theta * b.u,
            (1 - theta) * a.grad + theta * b.grad,
            (1 - theta) * a.omega + theta * b.omega,
        )


def _cross(omega, u):
    # (0, 0, omega) x (u1, u2, 0)
    return np.stack([-omega * u[1], omega * u[0]])


def _advect(a, grad_b):
    # (a . grad) b, component i = sum_j a_j d_j b_i
    return np.einsum("jxy,ijxy->ixy", a, grad_b)


# ------------------------------------------------------------ trilinear form


def trilinear_b(phi, z, y, space: SpectralSpace) -> float:
    """b(phi, z, y) = int (phi . grad z) . y by grid quadrature."""
    P = synthesize_velocity(_coeffs(phi), space.grid)
    Z = synthesize_velocity(_coeffs(z), space.grid)
    Y = synthesize_velocity(_coeffs(y), space.grid)
    return float(space.grid.cell_weight * np.sum(_advect(P.u, Z.grad) * Y.u))


# ------------------------------------------------------------ couplings


def state_term(ys: Samples, space):
    return space.project(_cross(ys.omega, ys.u))


def linearized_term(zs: Samples, y1: Samples, y2: Samples, space):
    return space.project(_cross(zs.omega, y1.u) + _cross(y2.omega, zs.u))


def adjoint_term(ps: Samples, ys: Samples, space):
    first = space.project(_cross(ys.omega, ps.u))
    second = space.project(_advect(ps.u, ys.grad) - _advect(ys.u, ps.grad))
    return -first + space.basis.mass * second


def state_nonlinear(y, space: SpectralSpace) -> SpectralField:
    """Projection of curl sigma(y) x y on every retained mode."""
    return SpectralField(state_term(space.samples(y), space))


def linearized_nonlinear(z, y1, y2, space: SpectralSpace) -> SpectralField:
    """Projection of curl sigma(z) x y1 + curl sigma(y2) x z."""
    return SpectralField(linearized_term(space.samples(z), space.samples(y1), space.samples(y2), space))


def adjoint_nonlinear(p, y, space: SpectralSpace) -> SpectralField:
    """Projection of -curl sigma(y) x p + curl sigma(y x p).

    The second term is tested against sigma(e_j) = (1 + alpha lam_j) e_j, which is
    exact on this basis, so only first derivatives of y and p are needed.
    """
    return SpectralField(adjoint_term(space.samples(p), space.samples(y), space))


# ------------------------------------------------------------ b-form routes (oracles)


def state_nonlinear_bform(y, space: SpectralSpace) -> np.ndarray:
    """N_j = b(e_j, y, sigma y) - b(y, e_j, sigma y), one mode at a time."""
    K = space.K
    sy = _coeffs(y) * space.basis.mass
    out = np.zeros((K, K))
    for k in range(1, K + 1):
        for m in range(1, K + 1):
            e = SpectralField.mode(K, k, m)
            out[k - 1, m - 1] = trilinear_b(e, y, sy, space) - trilinear_b(y, e, sy, space)
    return out


def adjoint_sigma_term_bform(y, z, space: SpectralSpace) -> np.ndarray:
    """(curl sigma(y x z), e_j) via b(z, y, sigma e_j) - b(y, z, sigma e_j)."""
    K = space.K
    out = np.zeros((K, K))
    for k in range(1, K + 1):
        for m in range(1, K + 1):
            se = SpectralField.mode(K, k, m, space.basis.mass[k - 1, m - 1])
            out[k - 1, m - 1] = trilinear_b(z, y, se, space) - trilinear_b(y, z, se, space)
    return out


def adjoint_sigma_term_pointwise(y, z, space: SpectralSpace) -> np.ndarray:
    ys, zs = space.samples(y), space.samples(z)
    return space.basis.mass * space.project(_advect(zs.u, ys.grad) - _advect(ys.u, zs.grad))


def curl_sigma_cross_pointwise(y, z, space: SpectralSpace) -> np.ndarray:
    """(curl sigma(y x z), e_j) from third derivatives of y and z, no integration by parts."""
    Y = velocity_partials(_coeffs(y), space.grid, 3)
    Z = velocity_partials(_coeffs(z), space.grid, 3)

    def s(a, b):
        # derivative of the scalar y1 z2 - y2 z1 by the Leibniz rule
        tot = 0.0
        for i in range(a + 1):
            for j in range(b + 1):
                w = comb(a, i) * comb(b, j)
                tot = tot + w * (Y[(0, i, j)] * Z[(1, a - i, b - j)] - Y[(1, i, j)] * Z[(0, a - i, b - j)])
        return tot

    al = space.alpha
    g1 = s(1, 0) - al * (s(3, 0) + s(1, 2))
    g2 = s(0, 1) - al * (s(2, 1) + s(0, 3))
    return space.project(np.stack([g2, -g1]))


def cubic_scale(y, space: SpectralSpace) -> float:
    """|curl sigma y| |y| |grad y|, the natural size of (curl sigma(y) x y, y)."""
    c = _coeffs(y)
    b = space.basis
    return weighted_norm(c, b.mass**2 * b.lam) * weighted_norm(c) * weighted_norm(c, b.lam)


def curl_sigma_cross_inner(y, z, phi, space: SpectralSpace) -> float:
    """(curl sigma(y) x z, phi) by pointwise quadrature."""
    ys, zs = space.samples(y), space.samples(z)
    P = synthesize_velocity(_coeffs(phi), space.grid)
    return float(space.grid.cell_weight * np.sum(_cross(ys.omega, zs.u) * P.u))


def curl_sigma_cross_inner_bform(y, z, phi, space: SpectralSpace) -> float:
    """Same quantity as b(phi, z, sigma y) - b(z, phi, sigma y)."""
    sy = _coeffs(y) * space.basis.mass
    return trilinear_b(phi, z, sy, space) - trilinear_b(z, phi, sy, space)


def curl_sigma_of_cross_inner(y, z, phi, space: SpectralSpace) -> float:
    """(curl sigma(y x z), phi) from third derivatives, phi in the retained span."""
    return float(np.sum(curl_sigma_cross_pointwise(y, z, space) * _coeffs(phi)))


def curl_sigma_of_cross_inner_bform(y, z, phi, space: SpectralSpace) -> float:
    """Same quantity as b(z, y, sigma phi) - b(y, z, sigma phi)."""
    sp = _coeffs(phi) * space.basis.mass
    return trilinear_b(z, y, sp, space) - trilinear_b(y, z, sp, space)
