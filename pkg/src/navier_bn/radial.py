"""Radial discretization of the ball B_rho in R^n.

Functions of ``r = |x|`` live on a grid uniform in ``s = ln r`` between a
small inner radius ``r_min`` and ``rho``. The disk ``|x| < r_min`` is not
resolved; integrals over it use the field's limiting value at the origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .dimconsts import sphere_area

MAX_POINTS = 200_000
PANEL = 6  # intervals per interpolation panel of the quadrature rule


class SolverError(RuntimeError):
    """A banded solve failed or produced non-finite values."""


def _fd_weights(offsets, order: int) -> np.ndarray:
    # weights w with sum_j w_j f(x + o_j h) = h^order f^(order)(x) + O(h^len)
    offsets = np.asarray(offsets, dtype=float)
    m = len(offsets)
    A = np.vander(offsets, m, increasing=True).T
    b = np.zeros(m)
    b[order] = math.factorial(order)
    return np.linalg.solve(A, b)


def _panel_weights(h: float, n: int) -> np.ndarray:
    """Product-integration weights of int_0^{6h} L_j(s) e^{n s} ds."""
    nodes = np.arange(PANEL + 1) * h
    x, w = np.polynomial.legendre.leggauss(32)
    s = 0.5 * PANEL * h * (x + 1.0)
    w = 0.5 * PANEL * h * w * np.exp(n * s)
    out = np.empty(PANEL + 1)
    for j in range(PANEL + 1):
        others = np.delete(nodes, j)
        L = np.prod((s[:, None] - others) / (nodes[j] - others), axis=1)
        out[j] = L @ w
    return out


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Log-uniform radial grid on ``[r_min, rho]`` with its quadrature weights.

    ``weights`` integrate against ``omega_n r^(n-1) dr`` over ``[r_min, rho]``;
    ``inner_weight`` is the measure of the ball of radius ``r_min``.
    """

    n: int
    rho: float
    r_min: float
    lambda_max: float
    s: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray
    inner_weight: float

    @property
    def h(self) -> float:
        return float(self.s[1] - self.s[0])

    @property
    def size(self) -> int:
        return len(self.nodes)

    @property
    def omega(self) -> float:
        return sphere_area(self.n)

    def field(self, values, inner_value: float | None = None) -> "RadialField":
        values = np.asarray(values, dtype=float)
        if inner_value is None:
            inner_value = float(values[0])
        return RadialField(self, values, float(inner_value))

    def sample(self, func) -> "RadialField":
        """Evaluate ``func(r)`` on the nodes and at ``r = 0``."""
        return RadialField(self, np.asarray(func(self.nodes), dtype=float),
                           float(func(np.array([0.0]))[0]))

    @cached_property
    def _derivs(self):
        return _difference_matrices(self.size, self.h)

    @cached_property
    def poisson(self) -> "PoissonOperator":
        return PoissonOperator(self)

    @cached_property
    def volume_poisson(self) -> "FiniteVolumePoisson":
        return FiniteVolumePoisson(self)


def build_grid(n: int, rho: float, points: int = 2000, lambda_max: float = 1.0) -> RadialGrid:
    """Build a log-uniform grid on the ball of radius ``rho``.

    Parameters
    ----------
    n : int
        Space dimension.
    rho : float
        Ball radius.
    points : int
        Requested number of intervals; rounded up to a multiple of 6.
    lambda_max : float
        Largest bubble concentration the grid must resolve. The inner radius
        is ``1e-4 / lambda_max``.
    """
    if points < 200:
        raise ValueError(f"points={points} below the minimum of 200")
    if points > MAX_POINTS:
        raise ValueError(f"points={points} exceeds the memory cap {MAX_POINTS}")
    if lambda_max < 1:
        raise ValueError("lambda_max must be >= 1")
    if not rho > 0:
        raise ValueError("rho must be positive")
    r_min = 1e-4 / lambda_max
    if r_min >= rho:
        raise ValueError(f"r_min={r_min:g} is not below rho={rho:g}")
    M = -(-int(points) // PANEL) * PANEL
    s0, s1 = math.log(r_min), math.log(rho)
    s = np.linspace(s0, s1, M + 1)
    h = (s1 - s0) / M
    omega = sphere_area(n)
    pw = _panel_weights(h, n)
    weights = np.zeros(M + 1)
    for k in range(M // PANEL):
        i = k * PANEL
        weights[i:i + PANEL + 1] += omega * math.exp(n * s[i]) * pw
    nodes = np.exp(s)
    nodes[-1] = rho
    return RadialGrid(n=n, rho=float(rho), r_min=r_min, lambda_max=float(lambda_max),
                      s=s, nodes=nodes, weights=weights,
                      inner_weight=omega * r_min**n / n)


@dataclass(frozen=True, eq=False)
class RadialField:
    """Nodal values of a radial function plus its limit at the origin."""

    grid: RadialGrid
    values: np.ndarray
    inner_value: float

    def __post_init__(self):
        if self.values.shape != self.grid.nodes.shape:
            raise ValueError("field values do not match the grid")
        if not (np.all(np.isfinite(self.values)) and math.isfinite(self.inner_value)):
            raise ValueError("field contains non-finite values")

    def inner_mismatch(self) -> float:
        """Distance between ``inner_value`` and a quadratic-in-r^2 extrapolation."""
        r2 = self.grid.nodes[:3] ** 2
        coef = np.polyfit(r2, self.values[:3], 2)
        return abs(np.polyval(coef, 0.0) - self.inner_value)

    def check_inner(self, tol: float = 1e-6) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.values))))
        return self.inner_mismatch() <= tol * scale

    def with_values(self, values, inner_value: float) -> "RadialField":
        return RadialField(self.grid, np.asarray(values, dtype=float), float(inner_value))

    def __mul__(self, other):
        if isinstance(other, RadialField):
            return self.with_values(self.values * other.values,
                                    self.inner_value * other.inner_value)
        return self.with_values(self.values * other, self.inner_value * other)

    __rmul__ = __mul__

    def __add__(self, other):
        return self.with_values(self.values + other.values, self.inner_value + other.inner_value)

    def __sub__(self, other):
        return self.with_values(self.values - other.values, self.inner_value - other.inner_value)

    def __neg__(self):
        return self.with_values(-self.values, -self.inner_value)


def integrate(f: RadialField) -> float:
    """Integral of ``f`` over the ball against Lebesgue measure."""
    g = f.grid
    return float(g.weights @ f.values + g.inner_weight * f.inner_value)


def _difference_matrices(size: int, h: float):
    """Fourth-order first and second s-derivatives as CSR matrices."""
    M = size - 1
    rows, cols, d1, d2 = [], [], [], []
    c1 = _fd_weights([-2, -1, 0, 1, 2], 1) / h
    c2 = _fd_weights([-2, -1, 0, 1, 2], 2) / h**2
    for i in range(size):
        if 2 <= i <= M - 2:
            offs = np.arange(-2, 3)
            w1, w2 = c1, c2
        else:
            start = 0 if i < 2 else M - 5
            offs = np.arange(start, start + 6) - i
            w1 = _fd_weights(offs, 1) / h
            w2 = _fd_weights(offs, 2) / h**2
        rows.extend([i] * len(offs))
        cols.extend(i + offs)
        d1.extend(w1)
        d2.extend(w2)
    D1 = sparse.csr_matrix((d1, (rows, cols)), shape=(size, size))
    D2 = sparse.csr_matrix((d2, (rows, cols)), shape=(size, size))
    return D1, D2


def laplacian_radial(f: RadialField) -> RadialField:
    """Radial Laplacian ``e^{-2s} (f_ss + (n-2) f_s)`` by finite differences."""
    g = f.grid
    D1, D2 = g._derivs
    v = f.values
    lap = (D2 @ v + (g.n - 2) * (D1 @ v)) / g.nodes**2
    # the origin limit is taken from the innermost node
    return f.with_values(lap, lap[0])


def _poisson_rows(grid: RadialGrid):
    """Banded rows of the Poisson system with Neumann/Dirichlet closures."""
    size = grid.size
    M = size - 1
    h = grid.h
    n = grid.n
    D1, D2 = grid._derivs
    A = (D2 + (n - 2) * D1).tolil()
    # regularity at the origin enters as a prescribed s-derivative at r_min
    A[0, :] = 0.0
    A[0, 0:5] = _fd_weights(np.arange(5), 1) / h
    A[M, :] = 0.0
    A[M, M] = 1.0
    return A.tocsr()


def _to_banded(A, lower: int = 4, upper: int = 4) -> np.ndarray:
    size = A.shape[0]
    ab = np.zeros((lower + upper + 1, size))
    coo = A.tocoo()
    if np.any(coo.col - coo.row > upper) or np.any(coo.row - coo.col > lower):
        raise AssertionError("matrix exceeds the expected band")
    ab[upper + coo.row - coo.col, coo.col] = coo.data
    return ab


def _poisson_rhs(rhs: RadialField, boundary_value: float) -> np.ndarray:
    g = rhs.grid
    b = rhs.values * g.nodes**2
    b[0] = g.r_min**2 * rhs.inner_value / g.n
    b[-1] = boundary_value
    return b


def _inner_limit(grid: RadialGrid, g0: float, rhs_inner: float) -> float:
    return g0 - rhs_inner * grid.r_min**2 / (2 * grid.n)


def _checked(x: np.ndarray, grid: RadialGrid) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise SolverError(f"non-finite Poisson solution (n={grid.n}, M={grid.size - 1}, "
                          f"h={grid.h:.3e}, r_min={grid.r_min:.3e})")
    return x


def solve_poisson_radial(rhs: RadialField, boundary_value: float = 0.0) -> RadialField:
    """Solve ``Delta g = rhs`` in the ball with ``g(rho) = boundary_value``.

    Regularity at the origin is imposed through the small-r expansion
    ``g_s = r^2 rhs(0) / n`` at ``r_min``.
    """
    grid = rhs.grid
    ab = grid.poisson.banded
    b = _poisson_rhs(rhs, boundary_value)
    try:
        x = linalg.solve_banded((4, 4), ab, b, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"banded Poisson solve failed (n={grid.n}, M={grid.size - 1}, "
                          f"h={grid.h:.3e}): {exc}") from exc
    x = _checked(x, grid)
    return RadialField(grid, x, _inner_limit(grid, x[0], rhs.inner_value))


def solve_navier_bilaplacian(rhs: RadialField) -> RadialField:
    """Solve ``Delta^2 w = rhs`` with ``w = Delta w = 0`` on the sphere."""
    lap_w = solve_poisson_radial(rhs, 0.0)
    return solve_poisson_radial(lap_w, 0.0)


def h2_products(u: RadialField, v: RadialField) -> tuple[float, float]:
    """Return ``(int Du Dv, int u v)`` with ``D`` the Laplacian."""
    lu = laplacian_radial(u)
    lv = laplacian_radial(v) if v is not u else lu
    # float products commute exactly, so the result is symmetric bit for bit
    return integrate(lu * lv), integrate(u * v)


class PoissonOperator:
    """Factorized discrete Poisson inverse with homogeneous Dirichlet data.

    ``apply(z)`` maps nodal values ``z`` to ``v`` with ``Delta v = z`` and
    ``v(rho) = 0``, using ``z[0]`` as the origin limit of ``z``.
    ``apply_transpose`` is its exact algebraic transpose.
    """

    def __init__(self, grid: RadialGrid):
        self.grid = grid
        A = _poisson_rows(grid)
        self.banded = _to_banded(A)
        self._lu = splinalg.splu(A.tocsc())
        scale = grid.nodes**2
        scale[0] = grid.r_min**2 / grid.n
        scale[-1] = 0.0
        self._scale = scale

    def apply(self, z: np.ndarray) -> np.ndarray:
        return _checked(self._lu.solve(self._scale * z), self.grid)

    def apply_transpose(self, y: np.ndarray) -> np.ndarray:
        return self._scale * _checked(self._lu.solve(y, trans="T"), self.grid)

    def inner_value(self, v: np.ndarray, z: np.ndarray) -> float:
        return _inner_limit(self.grid, v[0], z[0])


class FiniteVolumePoisson:
    """Second-order conservative Dirichlet Poisson inverse on the grid nodes.

    Node ``i`` owns the shell between the neighbouring midpoints in ``s``;
    the innermost node owns the whole inner ball. Fluxes through the shell
    faces give a symmetric tridiagonal matrix ``T`` with ``T v = w Delta v``,
    so ``apply`` is exactly self-adjoint for the cell volumes ``weights``.
    That property, not accuracy, is why it is used for optimization.
    """

    def __init__(self, grid: RadialGrid):
        self.grid = grid
        n = grid.n
        s = grid.s
        M = grid.size - 1
        omega = grid.omega
        mid = 0.5 * (s[:-1] + s[1:])
        edges = np.concatenate(([0.0], np.exp(n * mid), [grid.rho**n]))
        self.weights = omega * np.diff(edges) / n
        flux = omega * np.exp((n - 2) * mid) / grid.h
        ab = np.zeros((2, M))
        ab[1] = flux
        ab[1, 1:] += flux[:-1]
        ab[0, 1:] = -flux[:-1]
        self._chol = linalg.cholesky_banded(ab)

    def apply(self, z: np.ndarray) -> np.ndarray:
        v = np.zeros(self.grid.size)
        v[:-1] = -linalg.cho_solve_banded((self._chol, False), (self.weights * z)[:-1])
        return _checked(v, self.grid)
