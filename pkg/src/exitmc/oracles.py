"""Closed-form and quadrature reference values.

All exit-time formulas are for standard Brownian motion (generator one half
of the Laplacian), i.e. they solve ``(1/2) Delta v = -1`` with ``v = 0`` on the
boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special
from scipy.linalg import solve_banded

from .errors import ConsistencyError, InputError, SingularKernelError


@dataclass(frozen=True)
class AnnulusSpec3D:
    """The shell ``delta < |x - center| < T`` in R^3."""

    delta: float
    T: float
    center: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not 0 < self.delta < self.T:
            raise InputError(f"need 0 < delta < T, got delta={self.delta}, T={self.T}")
        if len(self.center) != 3:
            raise InputError("AnnulusSpec3D is three-dimensional")

    @property
    def rho(self) -> float:
        """``delta * T * (delta + T)``, the coefficient of the ``1/|x|`` term."""
        return self.delta * self.T * (self.delta + self.T)

    @property
    def s(self) -> float:
        return self.T**2 + self.T * self.delta + self.delta**2


def _norm(x, center=None):
    x = np.asarray(x, dtype=np.float64)
    if center is not None:
        x = x - np.asarray(center, dtype=np.float64)
    return np.linalg.norm(x, axis=-1)


def ball_exit_time(T_radius: float, d: int, x, center=None):
    """``E_x[tau]`` for the ball of radius ``T_radius``: ``(T^2 - |x|^2) / d``."""
    if d < 3:
        raise InputError("dimension must be at least 3")
    r = _norm(x, center)
    if np.any(r > T_radius):
        raise InputError(f"|x| = {np.max(r)} exceeds the radius {T_radius}")
    return (T_radius**2 - r**2) / d


def annulus_exit_time(spec: AnnulusSpec3D, x):
    """``E_x[tau]`` on a 3-D annulus, ``(T^2 + T delta + delta^2 - rho/|x| - |x|^2) / 3``.

    Accepts points of shape ``(3,)`` or ``(n, 3)``.  Points in the closed
    annulus are allowed; the value is zero on both boundary spheres.
    """
    r = _norm(x, spec.center)
    if np.any(r < spec.delta) or np.any(r > spec.T):
        raise InputError("point outside the closed annulus")
    return annulus_exit_time_radial(spec, r)


def annulus_exit_time_radial(spec: AnnulusSpec3D, r):
    r = np.asarray(r, dtype=np.float64)
    return (spec.s - spec.rho / r - r**2) / 3.0


def annulus_sup_exit_time(spec: AnnulusSpec3D) -> tuple[float, float]:
    """Maximum of ``annulus_exit_time`` and the radius where it is attained.

    Setting the radial derivative to zero gives ``z^3 = rho / 2``; there the
    ``1/z`` term equals ``2 z^2``, so the maximum is ``S/3 - z^2`` with
    ``S = T^2 + T delta + delta^2``.
    """
    z = (spec.rho / 2.0) ** (1.0 / 3.0)
    if not spec.delta < z < spec.T:
        raise ConsistencyError(f"maximiser {z} outside ({spec.delta}, {spec.T})")
    return spec.s / 3.0 - z**2, z


def annulus_sup_exit_time_printed(spec: AnnulusSpec3D) -> float:
    """``S/3 - (rho/2)^(2/3) / 3``, the reference supremum value.

    It is not the maximum of the exit-time formula: the last term lacks a
    factor 3, so the value over-states the true sup.  It is kept so that the
    reference constants built on it can be reproduced.
    """
    return spec.s / 3.0 - (spec.rho / 2.0) ** (2.0 / 3.0) / 3.0


def M_constant(sup_exit: float, lam: float, p: float) -> float:
    """Largest ``M`` with ``sup E[tau] <= M^(1-p) / lambda``: ``(lambda sup)^(1/(1-p))``."""
    if not p > 1:
        raise InputError(f"p must exceed 1, got {p}")
    if not lam > 0:
        raise InputError(f"lambda must be positive, got {lam}")
    if not sup_exit > 0:
        raise InputError(f"sup of the exit time must be positive, got {sup_exit}")
    return (lam * sup_exit) ** (1.0 / (1.0 - p))


def newtonian_constant(d: int) -> float:
    """``Gamma(d/2 - 1) / (2 pi^(d/2))``."""
    return math.gamma(d / 2 - 1) / (2 * math.pi ** (d / 2))


def transition_density(t, rho, d):
    """Brownian transition density ``(2 pi t)^(-d/2) exp(-rho^2 / 2t)``."""
    t = np.asarray(t, dtype=np.float64)
    return (2 * np.pi * t) ** (-d / 2) * np.exp(-rho**2 / (2 * t))


@dataclass(frozen=True)
class QuadConfig:
    epsabs: float = 0.0
    epsrel: float = 1e-12
    limit: int = 200


def heat_kernel_potential_check(x, y, d: int, quad: QuadConfig = QuadConfig()):
    """Time integral of the transition density against the Newtonian kernel.

    Returns ``(lhs, rhs)`` where ``lhs`` is ``int_0^inf p(t; x, y) dt`` by
    quadrature and ``rhs = c_d |x - y|^(2 - d)``.  With ``s = rho^2 / 2t`` and
    ``s = w^2`` the integral becomes
    ``rho^(2-d) pi^(-d/2) int_0^inf w^(d-3) exp(-w^2) dw``, which is mapped to
    ``[0, 1)`` by ``w = v / (1 - v)``.
    """
    if d < 3:
        raise InputError("the potential is finite only for d >= 3")
    rho = float(np.linalg.norm(np.asarray(x, float) - np.asarray(y, float)))
    if rho == 0.0:
        raise SingularKernelError("x and y coincide")

    def integrand(v):
        if v >= 1.0:
            return 0.0
        w = v / (1.0 - v)
        return w ** (d - 3) * math.exp(-w * w) / (1.0 - v) ** 2

    val, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=quad.epsabs, epsrel=quad.epsrel,
                            limit=quad.limit)
    lhs = rho ** (2 - d) * math.pi ** (-d / 2) * val
    rhs = newtonian_constant(d) * rho ** (2 - d)
    return lhs, rhs


def heat_kernel_time_quadrature(rho: float, d: int) -> float:
    """Direct quadrature of ``int_0^inf p(t) dt`` in the time variable (cross-check)."""
    t_peak = rho**2 / d
    f = lambda t: float(transition_density(t, rho, d))
    a, _ = integrate.quad(f, 0.0, t_peak, epsabs=0, epsrel=1e-12, limit=200)
    b, _ = integrate.quad(f, t_peak, np.inf, epsabs=0, epsrel=1e-12, limit=200)
    return a + b


def radial_occupation_oracle(r_in: float, r_out: float, a: float, b: float, d: int,
                             r_eval, n: int = 100_000):
    """Expected time in the shell ``a < |x| < b`` before leaving ``r_in < |x| < r_out``.

    Solves ``(1/2)(v'' + (d-1)/r v') = -1_[a,b](r)``, ``v(r_in) = v(r_out) = 0``
    by second-order central differences on ``n`` interior points (source
    averaged over each cell) and
    interpolates linearly at ``r_eval``.  ``r_in = 0`` gives a ball (with the
    symmetry condition ``v'(0) = 0``).
    """
    if not 0 <= r_in < r_out:
        raise InputError("need 0 <= r_in < r_out")
    if r_in == 0.0:
        # nodes at half-cell offsets avoid the coordinate singularity at r = 0
        dr = r_out / (n + 0.5)
        r = (np.arange(n) + 0.5) * dr
    else:
        dr = (r_out - r_in) / (n + 1)
        r = r_in + dr * np.arange(1, n + 1)
    lower = 1.0 / dr**2 - (d - 1) / (2 * r * dr)
    upper = 1.0 / dr**2 + (d - 1) / (2 * r * dr)
    diag = np.full(n, -2.0 / dr**2)
    if r_in == 0.0:
        # ghost node v(-dr/2) = v(dr/2)
        diag[0] += lower[0]
    # cell-averaged indicator keeps the scheme second order across the jumps at a and b
    overlap = np.clip(np.minimum(r + dr / 2, b) - np.maximum(r - dr / 2, a), 0.0, dr)
    rhs = -2.0 * overlap / dr
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    v = solve_banded((1, 1), ab, rhs)
    if r_in == 0.0:
        grid = np.concatenate([r, [r_out]])
        vals = np.concatenate([v, [0.0]])
    else:
        grid = np.concatenate([[r_in], r, [r_out]])
        vals = np.concatenate([[0.0], v, [0.0]])
    return np.interp(r_eval, grid, vals)


def annulus_occupation_exact_3d(delta: float, T: float, a: float, b: float, r):
    """Closed-form piecewise solution of the same radial problem for ``d = 3``.

    On each of the three pieces ``v = A_i + B_i / r`` (plus ``-r^2/3`` on the
    source shell); the six constants follow from the boundary values and
    ``C^1`` matching at ``a`` and ``b``.
    """
    if not delta <= a < b <= T:
        raise InputError("need delta <= a < b <= T")
    # unknowns: A1 B1 A2 B2 A3 B3
    M = np.array([
        [1, 1 / delta, 0, 0, 0, 0],
        [0, 0, 0, 0, 1, 1 / T],
        [1, 1 / a, -1, -1 / a, 0, 0],
        [0, -1 / a**2, 0, 1 / a**2, 0, 0],
        [0, 0, 1, 1 / b, -1, -1 / b],
        [0, 0, 0, -1 / b**2, 0, 1 / b**2],
    ], dtype=np.float64)
    rhs = np.array([0, 0, -a**2 / 3, -2 * a / 3, b**2 / 3, 2 * b / 3], dtype=np.float64)
    # rows 3-6: (piece i) - (piece i+1) at the interface, where piece 2 carries -r^2/3
    A1, B1, A2, B2, A3, B3 = np.linalg.solve(M, rhs)
    r = np.asarray(r, dtype=np.float64)
    return np.where(r <= a, A1 + B1 / r,
                    np.where(r <= b, A2 + B2 / r - r**2 / 3, A3 + B3 / r))
