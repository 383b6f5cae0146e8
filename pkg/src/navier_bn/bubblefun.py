"""The quotient functional and its values along the projected bubble family.

For a centered bubble on the ball every ingredient of the quotient is
written as a large whole-space value minus a small, separately computed
deflection. The deflections are evaluated directly so that energy gaps far
below double-precision resolution of the Sobolev constant stay accurate.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .dimconsts import DimParams
from .greenrobin import project_bubble, robin_center_closed, robin_offcenter
from .radial import RadialField, RadialGrid, integrate, laplacian_radial


# ---------------------------------------------------------------- potentials

@dataclass(frozen=True)
class PotentialSpec:
    """Radial potential ``V(r)``.

    ``kind`` is one of ``constant`` (``data = (value,)``),
    ``polynomial_radial`` (``data`` = coefficients of ``1, r, r^2, ...``) or
    ``table`` (``data = (radii, values)``, linear interpolation).
    """

    kind: str
    data: tuple

    def __post_init__(self):
        if self.kind == "constant":
            if len(self.data) != 1:
                raise ValueError("constant potential takes exactly one value")
        elif self.kind == "polynomial_radial":
            if len(self.data) == 0:
                raise ValueError("polynomial potential needs coefficients")
        elif self.kind == "table":
            radii, values = self.data
            if len(radii) != len(values) or len(radii) < 2:
                raise ValueError("table potential needs matching radii and values")
            if np.any(np.diff(radii) <= 0):
                raise ValueError("table radii must be strictly increasing")
        else:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if not all(np.all(np.isfinite(np.asarray(d, dtype=float))) for d in self.data):
            raise ValueError("potential data must be finite")

    @classmethod
    def constant(cls, value: float) -> "PotentialSpec":
        return cls("constant", (float(value),))

    @classmethod
    def polynomial(cls, coeffs) -> "PotentialSpec":
        return cls("polynomial_radial", tuple(float(c) for c in coeffs))

    @classmethod
    def table(cls, radii, values) -> "PotentialSpec":
        return cls("table", (tuple(float(r) for r in radii), tuple(float(v) for v in values)))

    @classmethod
    def parse(cls, text: str) -> "PotentialSpec":
        """Parse ``const:-1``, ``poly:-0.25,0,1`` or ``table:0:-1,0.5:-1,1:0``."""
        kind, _, body = text.strip().partition(":")
        try:
            if kind in ("const", "constant"):
                return cls.constant(float(body))
            if kind in ("poly", "polynomial_radial"):
                return cls.polynomial(float(c) for c in body.split(","))
            if kind == "table":
                pairs = [p.split(":") for p in body.split(",")]
                return cls.table([float(a) for a, _ in pairs], [float(b) for _, b in pairs])
        except ValueError as exc:
            raise ValueError(f"malformed potential {text!r}: {exc}") from None
        raise ValueError(f"malformed potential {text!r}")

    def to_string(self) -> str:
        if self.kind == "constant":
            return f"const:{self.data[0]!r}"
        if self.kind == "polynomial_radial":
            return "poly:" + ",".join(repr(c) for c in self.data)
        return "table:" + ",".join(f"{r!r}:{v!r}" for r, v in zip(*self.data))

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "constant":
            return np.full_like(r, self.data[0])
        if self.kind == "polynomial_radial":
            return np.polynomial.polynomial.polyval(r, self.data)
        radii, values = self.data
        return np.interp(r, radii, values)

    def on(self, grid: RadialGrid) -> RadialField:
        return grid.sample(self)

    def negativity_radii(self, rho: float, scan_points: int = 1001) -> np.ndarray:
        """Radii in ``[0, rho]`` where ``V < 0`` on a uniform scan."""
        r = np.linspace(0.0, rho, scan_points)
        return r[self(r) < 0]


# ---------------------------------------------------------------- quotient

def quotient(dims: DimParams, grid: RadialGrid, u: RadialField, eps: float,
             V: PotentialSpec) -> float:
    """``(int |Du|^2 + eps int V u^2) / (int |u|^2*)^(2/2*)`` on the grid."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    ts = dims.two_star
    au = np.abs(u.values)
    denom = integrate(u.with_values(au**ts, abs(u.inner_value) ** ts))
    if not denom > 0:
        raise ValueError("quotient denominator vanishes")
    lap = laplacian_radial(u)
    num = integrate(lap * lap)
    if eps != 0.0:
        num += eps * integrate(V.on(grid) * u * u)
    return num / denom ** (2.0 / ts)


def relative_quotient_shift(two_star: float, X: float, Y: float) -> float:
    """``(1 + X) / (1 + Y)^(2/2*) - 1`` without cancellation."""
    return math.expm1(math.log1p(X) - (2.0 / two_star) * math.log1p(Y))


def _critical_deficit(q, two_star: float):
    """``(1 - (1-q)^2*) / q`` for ``q`` in ``[0, 1]``."""
    q = np.asarray(q, dtype=float)
    out = np.empty_like(q)
    small = q < 1e-4
    qs = q[small]
    # binomial series; four terms are exact to double precision below 1e-4
    out[small] = two_star * (1 - (two_star - 1) / 2 * qs
                             * (1 - (two_star - 2) / 3 * qs * (1 - (two_star - 3) / 4 * qs)))
    qb = q[~small]
    with np.errstate(divide="ignore"):
        out[~small] = -np.expm1(two_star * np.log1p(-qb)) / qb
    return out


# ---------------------------------------------------------------- bubble family

def tail_scaled(dims: DimParams, L: float) -> float:
    """``L^(n-4) int_{|t|>L} U_1^2* dt`` for the unit bubble."""
    n = dims.n
    pref = dims.omega_n * dims.c_n**dims.two_star
    if L < 100.0:
        x = 1.0 / (1.0 + L * L)
        val = 0.5 * special.beta(n / 2, n / 2) * special.betainc(n / 2, n / 2, x)
        return pref * val * L ** (n - 4.0)
    # int_L^inf t^(-n-1) (1 + t^-2)^(-n) dt expanded in t^-2
    x = L**-2.0
    total, coef, j = 0.0, 1.0, 0
    while True:
        term = coef / (n + 2 * j)
        total += term
        if abs(term) < 1e-17 * abs(total):
            break
        coef *= -(n + j) / (j + 1) * x
        j += 1
    return pref * total * x * x


@dataclass(frozen=True)
class BubbleTerms:
    """Scaled deflections of the projected bubble ``PU_lambda`` on ``B_rho``.

    With ``L = lambda rho``:

    * ``eH = L^(n-4) (S4 - int |D PU|^2)``
    * ``eP = L^(n-4) (S4 - int PU^2*)``
    * ``w = lambda^4 int V PU^2``
    """

    n: int
    rho: float
    log_lam: float
    eH: float
    eP: float
    w: float
    tail: float

    @property
    def log_L(self) -> float:
        return self.log_lam + math.log(self.rho)

    def XY(self, dims: DimParams, eps: float) -> tuple[float, float]:
        """Relative numerator and denominator shifts of the quotient."""
        S4 = dims.S4
        sL = math.exp((4 - self.n) * self.log_L)
        X = (-self.eH * sL + eps * self.w * math.exp(-4 * self.log_lam)) / S4
        Y = -self.eP * sL / S4
        return X, Y

    def log_gap_first_order(self, dims: DimParams, eps: float) -> float:
        """``log(S2 - S)`` from the first-order expansion; ``-inf`` if no deflection."""
        n = self.n
        ts = dims.two_star
        scale = math.exp((4 - n) * math.log(self.rho) + (8 - n) * self.log_lam)
        bracket = scale * (self.eH - 2.0 / ts * self.eP) - eps * self.w
        if bracket <= 0:
            return -math.inf
        return (1 - n / 4) * math.log(dims.sobolev_S2) - 4 * self.log_lam + math.log(bracket)

    def gap(self, dims: DimParams, eps: float) -> float:
        """``S2 - S_epsV[PU_lambda]``; negative when the bubble lies above S2."""
        if self.log_lam > 30:
            lg = self.log_gap_first_order(dims, eps)
            if lg == -math.inf:
                return -self.excess(dims, eps)
            return math.exp(lg)
        X, Y = self.XY(dims, eps)
        return -dims.sobolev_S2 * relative_quotient_shift(dims.two_star, X, Y)

    def excess(self, dims: DimParams, eps: float) -> float:
        X, Y = self.XY(dims, eps)
        return dims.sobolev_S2 * relative_quotient_shift(dims.two_star, X, Y)

    def log_gap(self, dims: DimParams, eps: float) -> float:
        """``log(S2 - S)``, exact when representable, first order otherwise."""
        if self.log_lam > 30:
            return self.log_gap_first_order(dims, eps)
        g = self.gap(dims, eps)
        return math.log(g) if g > 0 else -math.inf

    def alpha_excess(self, dims: DimParams, eps: float) -> float:
        """``|alpha| - 1`` of the normalization ``int (alpha PU)^2* = S4``."""
        _, Y = self.XY(dims, eps)
        return math.expm1(-math.log1p(Y) / dims.two_star)


def bubble_terms(dims: DimParams, rho: float, V: PotentialSpec, log_lam: float,
                 h: float = 0.02, sigma_min: float = -14.0) -> BubbleTerms:
    """Deflections of ``PU_lambda`` evaluated in the bubble's own frame.

    All integrals run over ``t = lambda r`` in ``[0, lambda rho]`` on a grid
    uniform in ``log t`` and are formed in log space, so ``lambda`` may be far
    beyond the floating-point range.
    """
    n = dims.n
    c = dims.c_n
    k = (n - 4) / 2.0
    p = dims.p
    ts = dims.two_star
    log_L = log_lam + math.log(rho)
    if log_L <= sigma_min + 1:
        raise ValueError("lambda*rho too small for the bubble-frame evaluator")
    panels = max(1, math.ceil((log_L - sigma_min) / (6 * h)))
    m = 6 * panels
    sig = np.linspace(sigma_min, log_L, m + 1)
    hh = sig[1] - sig[0]
    nc = np.array([41, 216, 27, 272, 27, 216, 41], dtype=float) * hh / 140.0
    wts = np.zeros(m + 1)
    for j in range(panels):
        wts[6 * j:6 * j + 7] += nc

    x = math.exp(-2 * log_L)
    u_L = c * (1 + x) ** (-k)
    b_L = -k * c * (1 + x) ** (-k - 2) * (2 + n * x) / n
    tau2 = np.exp(2 * (sig - log_L))
    vartheta = u_L - b_L * (1 - tau2)
    log_U1 = math.log(c) - k * np.logaddexp(0.0, 2 * sig)
    log_meas = math.log(dims.omega_n) + n * sig
    # theta / U, which equals 1 on the sphere
    q = np.exp(-(n - 4) * log_L + np.log(vartheta) - log_U1)
    q = np.minimum(q, 1.0)

    core = np.exp(p * log_U1 + log_meas) * vartheta
    J_theta = wts @ core
    J_P = wts @ (core * _critical_deficit(q, ts))
    r = rho * np.sqrt(tau2)
    Vr = V(r)
    w = wts @ (Vr * np.exp(2 * log_U1 + log_meas) * (1 - q) ** 2)
    t_min = math.exp(sigma_min)
    inner = dims.omega_n * t_min**n / n
    J_theta += inner * c**p * vartheta[0]
    w += inner * float(V(np.array([0.0]))[0]) * c * c
    tail = tail_scaled(dims, math.exp(log_L)) if log_L < 350 else 0.0
    return BubbleTerms(n=n, rho=float(rho), log_lam=float(log_lam), eH=tail + J_theta,
                       eP=tail + J_P, w=float(w), tail=tail)


def bubble_terms_on_grid(dims: DimParams, grid: RadialGrid, V: PotentialSpec,
                         lam: float) -> BubbleTerms:
    """The same deflections measured by quadrature on a radial grid."""
    n = dims.n
    ts = dims.two_star
    b = project_bubble(dims, grid, lam)
    U, theta, PU = b.U, b.theta, b.PU
    L = lam * grid.rho
    tail = tail_scaled(dims, L)
    Up = U.with_values(U.values**dims.p, U.inner_value**dims.p)
    q = theta.values / U.values
    q0 = theta.inner_value / U.inner_value
    sL = L ** (n - 4.0)
    eH = tail + sL * integrate(Up * theta)
    defl = Up * theta
    defl = defl.with_values(defl.values * _critical_deficit(np.minimum(q, 1.0), ts),
                            defl.inner_value * _critical_deficit(np.array([q0]), ts)[0])
    eP = tail + sL * integrate(defl)
    w = lam**4 * integrate(V.on(grid) * PU * PU)
    return BubbleTerms(n=n, rho=grid.rho, log_lam=math.log(lam), eH=eH, eP=eP, w=w, tail=tail)


@dataclass(frozen=True)
class BestBubble:
    log_lam: float
    gap: float
    log_gap: float
    terms: BubbleTerms

    @property
    def lam(self) -> float:
        return math.exp(self.log_lam)


def best_bubble(dims: DimParams, rho: float, V: PotentialSpec, eps: float,
                log_lam_guess: float | None = None, half_width: float = 3.0,
                xatol: float = 1e-9) -> BestBubble:
    """Maximize the gap ``S2 - S_epsV[PU_lambda]`` over ``log lambda``."""
    if log_lam_guess is None:
        log_lam_guess = predicted_log_lambda(dims, rho, V, eps)
    lo = max(log_lam_guess - half_width, math.log(20.0 / rho))
    hi = log_lam_guess + half_width

    def log_gap(ll):
        return bubble_terms(dims, rho, V, ll).log_gap(dims, eps)

    # coarse scan: locate the best deflection, or learn that there is none
    grid = np.linspace(lo, hi, 61)
    lgs = np.array([log_gap(x) for x in grid])
    above = not np.any(np.isfinite(lgs))

    def objective(ll):
        t = bubble_terms(dims, rho, V, ll)
        if above:
            # no deflection anywhere: minimize the excess over S2 instead
            ex = t.excess(dims, eps)
            return math.log(ex) if ex > 0 else -1e6
        lg = t.log_gap(dims, eps)
        if lg == -math.inf:
            # above S2: ranked behind every genuine deflection
            return 1e6 + math.log1p(t.excess(dims, eps))
        return -lg

    if above:
        a, b = lo, hi
    else:
        i = int(np.argmax(lgs))  # leftmost on ties
        a, b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = optimize.minimize_scalar(objective, bounds=(a, b), method="bounded",
                                   options={"xatol": xatol, "maxiter": 500})
    ll = float(res.x)
    if min(ll - lo, hi - ll) < 1e-3 * half_width:
        warnings.warn("best bubble scale sits at the edge of the search window",
                      RuntimeWarning, stacklevel=2)
    t = bubble_terms(dims, rho, V, ll)
    return BestBubble(log_lam=ll, gap=t.gap(dims, eps), log_gap=t.log_gap(dims, eps), terms=t)


# ---------------------------------------------------------------- scale laws

@dataclass(frozen=True)
class LambdaStar:
    A: float
    B: float
    eps: float
    n: int
    lambda0: float
    f_at_min: float
    c0: float = math.nan
    bound_holds: bool = False
    samples: int = 0


def scale_objective(n: int, A: float, B: float, eps: float, lam):
    """Two-term scale model ``A lambda^(4-n) - eps B lambda^-4``."""
    lam = np.asarray(lam, dtype=float)
    return A / lam ** (n - 4) - eps * B / lam**4


def lambda_star(dims: DimParams, A: float, B: float, eps: float,
                samples: int = 200, span: float = 100.0) -> LambdaStar:
    """Minimizer of ``f(lambda) = A lambda^(4-n) - eps B lambda^-4``.

    The two-branch lower bound on ``f - f(lambda0)`` is checked on a log grid
    of ``samples`` points spanning ``lambda0 / span`` to ``span lambda0``; the
    reported ``c0`` is the smallest ratio of the gap to the bound.
    """
    n = dims.n
    if n < 9:
        raise ValueError("closed-form lambda_star needs n >= 9; use log_lambda_star at n = 8")
    if not (A > 0 and B > 0 and eps > 0):
        raise ValueError("A, B and eps must be positive")
    e = 1.0 / (n - 8)
    lam0 = ((n - 4) * A / (4 * eps * B)) ** e
    f0 = float(scale_objective(n, A, B, eps, lam0))
    lam = lam0 * np.logspace(-math.log10(span), math.log10(span), samples)
    lam = lam[np.abs(lam / lam0 - 1) > 1e-3]
    gap = scale_objective(n, A, B, eps, lam) - f0
    split = (A / (eps * B)) ** e / lam <= 2 * (4.0 / (n - 4)) ** e
    bound = np.where(split,
                     eps ** ((n - 6) * e) * (1 / lam - 1 / lam0) ** 2,
                     eps ** ((n - 4) * e))
    ratios = gap / bound
    c0 = float(np.min(ratios))
    return LambdaStar(A=A, B=B, eps=eps, n=n, lambda0=lam0, f_at_min=f0, c0=c0,
                      bound_holds=bool(c0 > 0 and np.all(gap >= 0)), samples=len(lam))


def log_lambda_star(dims: DimParams, A: float, B: float, eps: float) -> float:
    """``log lambda`` maximizing ``(eps B log lambda - A) / lambda^4`` at n = 8.

    The logarithm is returned because ``lambda`` itself overflows for small
    ``eps``.
    """
    if dims.n != 8:
        raise ValueError("log_lambda_star applies to n = 8 only")
    if not (A > 0 and B > 0 and eps > 0):
        raise ValueError("A, B and eps must be positive")
    return 0.25 + A / (eps * B)


def deflection_coefficients(dims: DimParams, rho: float, V: PotentialSpec):
    """``(A, B)`` of the leading bubble expansion at the center."""
    R0 = robin_center_closed(dims.n, rho)
    V0 = float(V(np.array([0.0]))[0])
    A = dims.a_n * dims.c_n**dims.two_star * R0
    B = dims.b_n * dims.c_n**2 * abs(V0)
    return A, B


def predicted_log_lambda(dims: DimParams, rho: float, V: PotentialSpec, eps: float) -> float:
    """Leading-order optimal ``log lambda`` for the centered bubble."""
    A, B = deflection_coefficients(dims, rho, V)
    if B == 0 or eps == 0:
        # no potential term: the quotient decreases toward S2 as lambda grows
        return math.log(1e3 / rho)
    if dims.n == 8:
        return log_lambda_star(dims, A, B, eps)
    return math.log(lambda_star(dims, A, B, eps, samples=3).lambda0)


# ---------------------------------------------------------------- Phi_n

class DomainError(ValueError):
    """The potential has no negativity set."""


def phi_n(dims: DimParams, rho: float, V: PotentialSpec, scan_points: int = 200):
    """``(Phi_n, argmax radius)`` over the negativity set of ``V``."""
    n = dims.n
    if n < 8:
        raise ValueError("Phi_n is defined for n >= 8")
    radii = np.linspace(0.0, 0.95 * rho, scan_points)
    Vr = V(radii)
    mask = Vr < 0
    if not np.any(mask):
        raise DomainError("the negativity set of V is empty")
    best, best_r = -math.inf, math.nan
    for r, v in zip(radii[mask], Vr[mask]):
        R = robin_offcenter(dims, rho, float(r)).value
        if n == 8:
            val = abs(v) / R
        else:
            val = R ** (-4.0 / (n - 8)) * abs(v) ** ((n - 4.0) / (n - 8))
        if val > best:
            best, best_r = val, float(r)
    return best, best_r


def log_upper_bound_prediction(dims: DimParams, rho: float, V: PotentialSpec, eps: float,
                               scan_points: int = 200) -> float:
    n = dims.n
    if n < 8:
        raise ValueError("prediction needs n >= 8")
    if not eps > 0:
        raise ValueError("eps must be positive")
    phi, _ = phi_n(dims, rho, V, scan_points)
    if n == 8:
        return -dims.c_n**2 / (10 * phi * eps)
    return math.log(dims.frak_C_n * phi) + (n - 4) / (n - 8) * math.log(eps)


def upper_bound_prediction(dims: DimParams, rho: float, V: PotentialSpec, eps: float,
                           scan_points: int = 200) -> float:
    """Predicted leading gap ``S2 - S(eps V)``; underflows to 0 at n = 8 for small eps."""
    return math.exp(log_upper_bound_prediction(dims, rho, V, eps, scan_points))


# ---------------------------------------------------------------- expansions

@dataclass
class ExpansionReport:
    n: int
    rho: float
    eps: float
    lambda_grid: list
    deflection_H: list = field(default_factory=list)
    deflection_H_pred: list = field(default_factory=list)
    potential_term: list = field(default_factory=list)
    potential_term_pred: list = field(default_factory=list)
    deflection_P: list = field(default_factory=list)
    deflection_P_pred: list = field(default_factory=list)
    quotient_shift: list = field(default_factory=list)
    quotient_shift_pred: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def residuals(self, line: str) -> np.ndarray:
        meas = np.array(getattr(self, line))
        pred = np.array(getattr(self, line + "_pred"))
        return meas - pred

    def ratios(self, line: str) -> np.ndarray:
        return np.array(getattr(self, line)) / np.array(getattr(self, line + "_pred"))

    def rows(self):
        keys = ["deflection_H", "deflection_H_pred", "potential_term", "potential_term_pred",
                "deflection_P", "deflection_P_pred", "quotient_shift", "quotient_shift_pred"]
        for i, lam in enumerate(self.lambda_grid):
            yield {"lambda": lam, **{k: getattr(self, k)[i] for k in keys}}


def _loglog_slope(x, y):
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.abs(np.asarray(y, dtype=float)))
    return float(np.polyfit(x, y, 1)[0])


def expansion_report(dims: DimParams, grid: RadialGrid, V: PotentialSpec, eps: float,
                     lambda_grid) -> ExpansionReport:
    """Measured bubble-family energies against their leading expansions.

    Slopes of the residuals on log-log axes are filled in when at least four
    scales spanning a factor of 8 or more are given. At ``n = 8`` the
    potential residual is divided by ``log lambda`` before fitting.
    """
    n = dims.n
    rho = grid.rho
    lambda_grid = sorted(float(x) for x in lambda_grid)
    rep = ExpansionReport(n=n, rho=rho, eps=eps, lambda_grid=lambda_grid)
    R0 = robin_center_closed(n, rho)
    V0 = float(V(np.array([0.0]))[0])
    ac = dims.a_n * dims.c_n**dims.two_star * R0
    S2 = dims.sobolev_S2
    for lam in lambda_grid:
        if lam * rho < 20:
            msg = f"lambda*rho={lam * rho:g} < 20: pre-asymptotic"
            rep.warnings.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            t = bubble_terms_on_grid(dims, grid, V, lam)
        sL = (lam * rho) ** (4.0 - n)
        rep.deflection_H.append(t.eH * sL)
        rep.deflection_H_pred.append(ac * lam ** (4.0 - n))
        rep.deflection_P.append(t.eP * sL)
        rep.deflection_P_pred.append(dims.two_star * ac * lam ** (4.0 - n))
        rep.potential_term.append(t.w * lam**-4.0)
        if n == 8:
            wp = dims.b_n * dims.c_n**2 * V0 * lam**-4.0 * math.log(lam)
        else:
            wp = dims.b_n * dims.c_n**2 * V0 * lam**-4.0
        rep.potential_term_pred.append(wp)
        X, Y = t.XY(dims, eps)
        rep.quotient_shift.append(S2 * relative_quotient_shift(dims.two_star, X, Y))
        rep.quotient_shift_pred.append((ac * lam ** (4.0 - n) + eps * wp) / S2 ** ((n - 4) / 4))
    lams = np.array(lambda_grid)
    if len(lams) >= 4 and lams[-1] / lams[0] >= 8:
        for line in ("deflection_H", "deflection_P", "potential_term", "quotient_shift"):
            res = rep.residuals(line)
            if line == "potential_term" and n == 8:
                res = res / np.log(lams)
            if np.all(res != 0):
                rep.slopes[line] = _loglog_slope(lams, res)
    return rep
