"""Stokes eigenbasis on the square (0, pi)^2 with free-slip walls.

Mode (k, m) has streamfunction ``phi = (2/pi) sin(k x1) sin(m x2)`` and velocity
``e = lam^{-1/2} (d2 phi, -d1 phi)`` with ``lam = k^2 + m^2``.  The velocity
modes are L2-orthonormal, divergence free, tangent to the walls and have zero
tangential stress on every side.  Coefficient arrays are indexed ``[k-1, m-1]``
with ``k`` attached to ``x1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np

NORMALIZATION = "L2-orthonormal"
_C = 2.0 / np.pi


@dataclass(frozen=True)
class BasisTable:
    K: int
    alpha: float
    k: np.ndarray = field(repr=False)
    m: np.ndarray = field(repr=False)
    lam: np.ndarray = field(repr=False)
    mass: np.ndarray = field(repr=False)
    norm_const: np.ndarray = field(repr=False)

    @property
    def n_modes(self) -> int:
        return self.K * self.K


def build_basis(K: int, alpha: float) -> BasisTable:
    if int(K) != K or K < 1:
        raise ValueError(f"truncation K must be a positive integer, got {K}")
    if not np.isfinite(alpha) or alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    return _build_basis(int(K), float(alpha))


@lru_cache(maxsize=32)
def _build_basis(K, alpha):
    idx = np.arange(1, K + 1, dtype=float)
    k, m = np.meshgrid(idx, idx, indexing="ij")
    lam = k**2 + m**2
    for a in (k, m, lam):
        a.flags.writeable = False
    mass = 1.0 + alpha * lam
    norm_const = _C / np.sqrt(lam)
    mass.flags.writeable = False
    norm_const.flags.writeable = False
    return BasisTable(K, alpha, k, m, lam, mass, norm_const)


class SpectralField:
    """Divergence-free velocity stored as coefficients over the eigenbasis."""

    __slots__ = ("coeff",)

    def __init__(self, coeff):
        coeff = np.array(coeff, dtype=float)
        if coeff.ndim != 2 or coeff.shape[0] != coeff.shape[1] or coeff.shape[0] < 1:
            raise ValueError(f"coefficients must be a square K x K array, got {coeff.shape}")
        self.coeff = coeff

    @property
    def K(self) -> int:
        return self.coeff.shape[0]

    @classmethod
    def zeros(cls, K):
        return cls(np.zeros((K, K)))

    @classmethod
    def mode(cls, K, k, m, c=1.0):
        f = cls.zeros(K)
        f.coeff[k - 1, m - 1] = c
        return f

    @classmethod
    def from_modes(cls, K, modes):
        """Build from an iterable of ``(k, m, c)`` triples or ``{k, m, c}`` dicts."""
        f = cls.zeros(K)
        for entry in modes:
            if isinstance(entry, dict):
                k, m, c = entry["k"], entry["m"], entry["c"]
            else:
                k, m, c = entry
            if not (1 <= k <= K and 1 <= m <= K):
                raise ValueError(f"mode ({k}, {m}) outside truncation K={K}")
            f.coeff[k - 1, m - 1] += c
        return f

    def copy(self):
        return SpectralField(self.coeff.copy())

    def __add__(self, other):
        return SpectralField(self.coeff + _coeffs(other))

    def __sub__(self, other):
        return SpectralField(self.coeff - _coeffs(other))

    def __mul__(self, s):
        return SpectralField(self.coeff * s)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(-self.coeff)

    def dot(self, other) -> float:
        return float(np.sum(self.coeff * _coeffs(other)))

    def __repr__(self):
        return f"SpectralField(K={self.K})"


class ScalarSpectral:
    """Scalar vanishing on the boundary, coefficients over ``(2/pi) sin sin``."""

    __slots__ = ("coeff",)

    def __init__(self, coeff):
        self.coeff = np.array(coeff, dtype=float)

    @property
    def K(self) -> int:
        return self.coeff.shape[0]

    def l2(self) -> float:
        return float(np.sqrt(np.sum(self.coeff**2)))


def _coeffs(f):
    return f.coeff if isinstance(f, (SpectralField, ScalarSpectral)) else np.asarray(f, dtype=float)


# ---------------------------------------------------------------- grid


@dataclass(frozen=True)
class GridSpec:
    """Tensor midpoint grid; uniform weights integrate cos(n x) exactly for n < 2M."""

    M: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def cell_weight(self) -> float:
        return (np.pi / self.M) ** 2


def make_grid(M: int) -> GridSpec:
    if M < 2:
        raise ValueError("grid needs at least two nodes per direction")
    return _make_grid(int(M))


@lru_cache(maxsize=32)
def _make_grid(M):
    nodes = (np.arange(1, M + 1) - 0.5) * np.pi / M
    weights = np.full(M, np.pi / M)
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return GridSpec(M, nodes, weights)


def default_M(K: int) -> int:
    return 2 * K + 2


def check_compatible(K, grid):
    # triple products of degree-K trigonometric factors reach frequency 3K
    if 3 * K >= 2 * grid.M:
        raise ValueError(f"grid M={grid.M} cannot integrate products of order K={K} exactly")


class VelocitySamples(NamedTuple):
    u: np.ndarray  # (2, M, M)
    grad: np.ndarray  # (2, 2, M, M); grad[i, j] = d u_i / d x_j


@lru_cache(maxsize=64)
def _tables(K, M):
    grid = _make_grid(M)
    kk = np.arange(1, K + 1)[:, None]
    S = np.sin(kk * grid.nodes[None, :])
    C = np.cos(kk * grid.nodes[None, :])
    for a in (S, C):
        a.flags.writeable = False
    return S, C


def synthesize_velocity(f, grid: GridSpec) -> VelocitySamples:
    """Velocity and its gradient on the grid, in closed form."""
    c = _coeffs(f)
    K = c.shape[0]
    check_compatible(K, grid)
    b = build_basis(K, 0.0)
    S, C = _tables(K, grid.M)
    a = c * b.norm_const
    am, ak = a * b.m, a * b.k
    u1 = S.T @ am @ C
    u2 = -(C.T @ ak @ S)
    d11 = C.T @ (am * b.k) @ C
    d12 = -(S.T @ (am * b.m) @ S)
    d21 = S.T @ (ak * b.k) @ S
    d22 = -d11
    return VelocitySamples(np.stack([u1, u2]), np.array([[d11, d12], [d21, d22]]))


def synthesize_scalar(s, grid: GridSpec, with_grad=False):
    c = _coeffs(s)
    K = c.shape[0]
    S, C = _tables(K, grid.M)
    w = _C * c
    val = S.T @ w @ S
    if not with_grad:
        return val
    b = build_basis(K, 0.0)
    g1 = C.T @ (w * b.k) @ S
    g2 = S.T @ (w * b.m) @ C
    return val, np.stack([g1, g2])


def analyze_velocity(samples, grid: GridSpec, K: int) -> SpectralField:
    """Quadrature projection onto the retained modes (discrete Helmholtz projection)."""
    F = np.asarray(samples.u if isinstance(samples, VelocitySamples) else samples, dtype=float)
    if F.shape != (2, grid.M, grid.M):
        raise ValueError(f"samples must have shape (2, {grid.M}, {grid.M}), got {F.shape}")
    check_compatible(K, grid)
    return SpectralField(_project(F, grid, K))


def _project(F, grid, K):
    b = build_basis(K, 0.0)
    S, C = _tables(K, grid.M)
    p1 = S @ F[0] @ C.T
    p2 = C @ F[1] @ S.T
    return grid.cell_weight * b.norm_const * (b.m * p1 - b.k * p2)


def analyze_scalar(values, grid: GridSpec, K: int) -> ScalarSpectral:
    S, _ = _tables(K, grid.M)
    return ScalarSpectral(grid.cell_weight * _C * (S @ np.asarray(values) @ S.T))


def evaluate_velocity(f, x1, x2):
    """Closed-form velocity, gradient and Laplacian at arbitrary points."""
    c = _coeffs(f)
    K = c.shape[0]
    b = build_basis(K, 0.0)
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    k = b.k.ravel()[:, None]
    m = b.m.ravel()[:, None]
    a = (c * b.norm_const).ravel()[:, None]
    X1, X2 = x1.ravel()[None, :], x2.ravel()[None, :]
    sk, ck = np.sin(k * X1), np.cos(k * X1)
    sm, cm = np.sin(m * X2), np.cos(m * X2)
    u1 = np.sum(a * m * sk * cm, axis=0)
    u2 = -np.sum(a * k * ck * sm, axis=0)
    d11 = np.sum(a * m * k * ck * cm, axis=0)
    d12 = -np.sum(a * m * m * sk * sm, axis=0)
    d21 = np.sum(a * k * k * sk * sm, axis=0)
    d22 = -np.sum(a * k * m * ck * cm, axis=0)
    # second derivatives written out term by term rather than via -lam
    lap1 = np.sum(a * m * (-(k**2) - m**2) * sk * cm, axis=0)
    lap2 = -np.sum(a * k * (-(k**2) - m**2) * ck * sm, axis=0)
    shape = x1.shape
    return {
        "u": np.stack([u1.reshape(shape), u2.reshape(shape)]),
        "grad": np.array([[d11.reshape(shape), d12.reshape(shape)],
                          [d21.reshape(shape), d22.reshape(shape)]]),
        "lap": np.stack([lap1.reshape(shape), lap2.reshape(shape)]),
    }


def evaluate_scalar(s, x1, x2):
    c = _coeffs(s)
    K = c.shape[0]
    b = build_basis(K, 0.0)
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    k = b.k.ravel()[:, None]
    m = b.m.ravel()[:, None]
    val = np.sum(_C * c.ravel()[:, None] * np.sin(k * x1.ravel()) * np.sin(m * x2.ravel()), axis=0)
    return val.reshape(x1.shape)


# ---------------------------------------------------------------- operators


def apply_sigma(f, basis: BasisTable, inverse=False) -> SpectralField:
    c = _coeffs(f)
    return SpectralField(c / basis.mass if inverse else c * basis.mass)


def curl(f, basis: BasisTable) -> ScalarSpectral:
    return ScalarSpectral(_coeffs(f) * np.sqrt(basis.lam))


def curl_sigma(f, basis: BasisTable) -> ScalarSpectral:
    return ScalarSpectral(_coeffs(f) * basis.mass * np.sqrt(basis.lam))


def weighted_norm(c, weight=1.0) -> float:
    """sqrt(sum(weight * c^2)), rescaled by max|c| so tiny fields do not underflow."""
    c = np.asarray(c, dtype=float)
    top = np.max(np.abs(c)) if c.size else 0.0
    if top == 0.0 or not np.isfinite(top):
        return float(top)
    return float(top * np.sqrt(np.sum(weight * (c / top) ** 2)))


def norms(f, basis: BasisTable) -> dict:
    c = _coeffs(f)
    lam = basis.lam
    return {
        "L2": weighted_norm(c),
        "Dnorm": weighted_norm(c, 0.5 * lam),
        "H2proxy": weighted_norm(c, lam**2),
        "H3proxy": weighted_norm(c, lam**3),
        "curlSigmaNorm": weighted_norm(c, basis.mass**2 * lam),
    }


def random_field(K: int, rng: np.random.Generator, scale=1.0) -> SpectralField:
    """Uniform[-1, 1] coefficients damped by lam^{-3/2}."""
    lam = build_basis(K, 0.0).lam
    return SpectralField(scale * rng.uniform(-1.0, 1.0, size=(K, K)) * lam**-1.5)


@lru_cache(maxsize=64)
def _shifted_tables(K, M, order):
    # sin(k x + a pi/2), cos(k x + a pi/2) scaled by k^a, for a = 0..order
    grid = _make_grid(M)
    kk = np.arange(1, K + 1)[:, None]
    arg = kk * grid.nodes[None, :]
    out = []
    for a in range(order + 1):
        s = kk**a * np.sin(arg + a * np.pi / 2)
        c = kk**a * np.cos(arg + a * np.pi / 2)
        out.append((s, c))
    return out


def velocity_partials(f, grid: GridSpec, order: int) -> dict:
    """All partials d^a/dx1^a d^b/dx2^b of both velocity components, a + b <= order.

    Keys are ``(component, a, b)``; evaluated in closed form on the grid.
    """
    c = _coeffs(f)
    K = c.shape[0]
    b = build_basis(K, 0.0)
    tab = _shifted_tables(K, grid.M, order)
    A = c * b.norm_const
    out = {}
    for a in range(order + 1):
        for bb in range(order + 1 - a):
            sx, cx = tab[a]
            sy, cy = tab[bb]
            out[(0, a, bb)] = sx.T @ (A * b.m) @ cy
            out[(1, a, bb)] = -(cx.T @ (A * b.k) @ sy)
    return out
