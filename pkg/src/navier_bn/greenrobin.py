"""Navier Green function of the bilaplacian on a ball, its regular part and
the projection of a centered bubble.

Only the regular part ``H`` matters here. For a pole ``x`` it is the
biharmonic function on ``B_rho`` with boundary values
``H = |x-y|^(4-n)`` and ``Delta_y H = 2(4-n)|x-y|^(2-n)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .dimconsts import DimParams, sphere_area
from .radial import (RadialField, RadialGrid, build_grid, laplacian_radial,
                     solve_navier_bilaplacian, solve_poisson_radial)

T_MAX_FRACTION = 0.95
SERIES_CUTOFF = 0.3  # below this t/rho the power series replaces quadrature


class CrossCheckError(RuntimeError):
    """Two independent evaluations of the same quantity disagree."""


@dataclass(frozen=True)
class RobinValue:
    x_radius: float
    value: float
    method: str  # "center_closed_form" or "two_stage_numeric"


def robin_center_closed(n: int, rho: float) -> float:
    return 2.0 * (n - 2) / n * rho ** (4.0 - n)


def regular_part_center(n: int, rho: float):
    """Coefficients ``(A, B)`` of ``H(0, y) = A + B |y|^2``."""
    B = (4.0 - n) * rho ** (2.0 - n) / n
    A = rho ** (4.0 - n) - B * rho**2
    return A, B


def robin_center_numeric(dims: DimParams, rho: float, points: int = 2400) -> float:
    """R(0) from two chained radial Dirichlet solves."""
    n = dims.n
    grid = build_grid(n, rho, points, 1.0)
    # the harmonic extension of a constant boundary datum is that constant
    lap_h = grid.field(np.full(grid.size, 2.0 * (4 - n) * rho ** (2.0 - n)))
    h = solve_poisson_radial(lap_h, rho ** (4.0 - n))
    return h.inner_value


def robin_center(dims: DimParams, rho: float, rtol: float = 1e-8) -> RobinValue:
    """Robin function at the center, closed form checked against a solve."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    a = robin_center_closed(dims.n, rho)
    b = robin_center_numeric(dims, rho)
    if abs(a - b) > rtol * abs(a):
        raise CrossCheckError(f"R(0) closed form {a!r} vs numeric {b!r} (n={dims.n}, rho={rho})")
    return RobinValue(0.0, a, "center_closed_form")


def _series_bracket(n: int, x: float, tol: float = 1e-17, max_terms: int = 5000) -> float:
    """``[(1-x)^(4-n) - (1-x)^2 F(n-2, n/2-1; n/2; x)] / x`` as a power series."""
    # coefficients of (1-x)^(4-n) and of F, generated by their term ratios
    a_prev = 1.0
    f = [1.0, 0.0, 0.0]  # F_k, F_{k-1}, F_{k-2}
    total = 0.0
    xk = 1.0
    for k in range(1, max_terms):
        a_k = a_prev * (n - 4 + k - 1) / k
        f_k = f[0] * (n - 2 + k - 1) * (n / 2 - 1 + k - 1) / ((n / 2 + k - 1) * k)
        g_k = f_k - 2 * f[0] + f[1]
        term = (a_k - g_k) * xk
        total += term
        if abs(term) < tol * abs(total) and k > 4:
            return total
        a_prev = a_k
        f = [f_k, f[0], f[1]]
        xk *= x
    raise RuntimeError("Robin series did not converge")


@lru_cache(maxsize=8)
def _legendre(m: int):
    return np.polynomial.legendre.leggauss(m)


def _sphere_mean_power(n: int, u: float, tol: float = 1e-10):
    """Mean over the unit sphere of ``|u e - z|^(4-2n)`` by Gauss-Legendre in angle."""
    m = 256
    prev = None
    while m <= 8192:
        x, w = _legendre(m)
        phi = 0.5 * math.pi * (x + 1.0)
        dist2 = 1.0 + u * u - 2.0 * u * np.cos(phi)
        integrand = np.sin(phi) ** (n - 2) * dist2 ** (2.0 - n)
        val = 0.5 * math.pi * (w @ integrand) * sphere_area(n - 1) / sphere_area(n)
        if prev is not None and abs(val - prev) < tol * abs(val):
            return val, m
        prev = val
        m *= 2
    raise RuntimeError(f"angular quadrature did not converge at u={u}")


def robin_offcenter(dims: DimParams, rho: float, t: float) -> RobinValue:
    """Robin function at distance ``t`` from the center.

    Away from the center the two-stage construction is evaluated directly:
    a Kelvin-image particular solution plus a harmonic correction given by
    the Poisson integral. The two pieces both grow like ``t^-2`` near the
    center, so for ``t < 0.3 rho`` their difference is summed as a power
    series in ``(t/rho)^2`` instead.
    """
    n = dims.n
    if not rho > 0:
        raise ValueError("rho must be positive")
    if not 0.0 <= t <= T_MAX_FRACTION * rho:
        raise ValueError(f"t={t} outside the accuracy range [0, {T_MAX_FRACTION} rho]")
    if t == 0.0:
        return RobinValue(0.0, robin_center_closed(n, rho), "center_closed_form")
    u = t / rho
    x = u * u
    if u < SERIES_CUTOFF:
        bracket = _series_bracket(n, x)
    else:
        mean, _ = _sphere_mean_power(n, u)
        particular = (1.0 - x) ** (4.0 - n)
        correction = -((1.0 - x) ** 2) * mean
        bracket = (particular + correction) / x
    return RobinValue(float(t), rho ** (4.0 - n) * bracket, "two_stage_numeric")


def robin_scan(dims: DimParams, rho: float, count: int, t_max: float = 0.9):
    ts = np.linspace(0.0, t_max * rho, count)
    return [robin_offcenter(dims, rho, float(t)) for t in ts]


def bubble(dims: DimParams, lam: float, r):
    """Centered bubble ``c_n (lam / (1 + lam^2 r^2))^((n-4)/2)``."""
    k = (dims.n - 4) / 2.0
    r = np.asarray(r, dtype=float)
    return dims.c_n * lam**k * (1.0 + (lam * r) ** 2) ** (-k)


def bubble_laplacian(dims: DimParams, lam: float, r):
    n = dims.n
    k = (n - 4) / 2.0
    t2 = (lam * np.asarray(r, dtype=float)) ** 2
    return -2.0 * k * dims.c_n * lam ** (k + 2) * (1.0 + t2) ** (-k - 2) * (n + 2.0 * t2)


def theta_coefficients(dims: DimParams, rho: float, lam: float):
    """``(A, B)`` with ``theta = U - PU = A + B r^2`` for the centered bubble."""
    n = dims.n
    B = float(bubble_laplacian(dims, lam, rho)) / (2 * n)
    A = float(bubble(dims, lam, rho)) - B * rho**2
    return A, B


@dataclass(frozen=True, eq=False)
class ProjectionBundle:
    """Bubble, its Navier projection and the defect ``theta = U - PU``.

    ``theta`` is the exact radial biharmonic ``A + B r^2`` carrying the
    bubble's boundary data; ``PU_solve`` is the projection obtained from two
    chained Poisson solves and serves as an independent check.
    """

    lam: float
    U: RadialField
    PU: RadialField
    theta: RadialField
    PU_solve: RadialField
    solve_deviation: float
    boundary_value: float
    boundary_laplacian: float


def project_bubble(dims: DimParams, grid: RadialGrid, lam: float) -> ProjectionBundle:
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if lam > grid.lambda_max:
        raise ValueError(f"lambda={lam:g} exceeds the grid's lambda_max={grid.lambda_max:g}")
    rho = grid.rho
    if lam * rho < 10:
        warnings.warn(f"lambda*rho={lam * rho:g} is small; the defect theta is not a "
                      "small correction in this regime", RuntimeWarning, stacklevel=2)
    U = grid.sample(lambda r: bubble(dims, lam, r))
    _, B = theta_coefficients(dims, rho, lam)
    u_rho = float(bubble(dims, lam, rho))
    # anchored at the boundary so that theta(rho) = U(rho) holds exactly
    theta = grid.sample(lambda r: u_rho + B * (r - rho) * (r + rho))
    PU = U - theta
    rhs = U.with_values(U.values**dims.p, U.inner_value**dims.p)
    PU_solve = solve_navier_bilaplacian(rhs)
    scale = float(np.max(np.abs(U.values)))
    dev = float(np.max(np.abs(PU_solve.values - PU.values))) / scale
    lap = laplacian_radial(PU_solve)
    return ProjectionBundle(lam=float(lam), U=U, PU=PU, theta=theta, PU_solve=PU_solve,
                            solve_deviation=dev,
                            boundary_value=float(PU_solve.values[-1]),
                            boundary_laplacian=float(lap.values[-1]))


def green_center_profile(dims: DimParams, grid: RadialGrid) -> RadialField:
    """``G(0, r) = r^(4-n) - H(0, r)``.

    ``G`` is singular at the origin, so ``inner_value`` holds the value at
    the innermost node and the field must not be integrated.
    """
    A, B = regular_part_center(dims.n, grid.rho)
    r = grid.nodes
    vals = r ** (4.0 - dims.n) - (A + B * r**2)
    return grid.field(vals, vals[0])


def theta_scale_derivative(dims: DimParams, rho: float, lam: float, r):
    """``lam d/dlam theta`` for the centered bubble at radii ``r``."""
    n = dims.n
    k = (n - 4) / 2.0
    L2 = (lam * rho) ** 2
    u_rho = float(bubble(dims, lam, rho))
    _, B = theta_coefficients(dims, rho, lam)
    du = k * u_rho * (1 - L2) / (1 + L2)
    dB = B * ((k + 2) * (1 - L2) / (1 + L2) + 4 * L2 / (n + 2 * L2))
    r = np.asarray(r, dtype=float)
    return du + dB * (r - rho) * (r + rho)
