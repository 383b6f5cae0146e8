"""Dimension-dependent constants of the fourth-order critical Sobolev problem.

All closed forms are evaluated in double precision through ``math.lgamma``;
:func:`verify_integral_constants` cross-checks the two integral constants by
adaptive quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

N_MAX = 24


@dataclass(frozen=True)
class DimParams:
    """Dimension ``n`` together with every constant derived from it.

    ``b_n`` is ``None`` for ``n < 8``; ``frak_C_n`` and ``frak_D_n`` are
    ``None`` for ``n < 9`` (their exponent ``1/(n-8)`` is undefined there).
    ``c0_distributional`` is the constant in
    ``Delta^2 |x|^(4-n) = c0_distributional * delta``; ``c0_convention`` is the
    half-size normalization ``(n-4)(n-2) omega_n`` kept alongside it.
    """

    n: int
    two_star: float
    c_n: float
    sobolev_S2: float
    omega_n: float
    a_n: float
    b_n: float | None
    frak_C_n: float | None
    frak_D_n: float | None
    c0_convention: float = field(repr=False, default=0.0)
    c0_distributional: float = field(repr=False, default=0.0)

    @property
    def p(self) -> float:
        """Exponent ``(n+4)/(n-4) = 2* - 1`` of the bubble equation."""
        return self.two_star - 1.0

    @property
    def S4(self) -> float:
        """``S2^(n/4)``, the bubble energy on the whole space."""
        return self.sobolev_S2 ** (self.n / 4.0)

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "two_star": self.two_star,
            "c_n": self.c_n,
            "sobolev_S2": self.sobolev_S2,
            "omega_n": self.omega_n,
            "a_n": self.a_n,
            "b_n": self.b_n,
            "frak_C_n": self.frak_C_n,
            "frak_D_n": self.frak_D_n,
            "c0_convention": self.c0_convention,
            "c0_distributional": self.c0_distributional,
        }


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere in R^n."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def _check_dim(n: int, minimum: int = 5) -> int:
    if isinstance(n, bool) or int(n) != n:
        raise TypeError(f"dimension must be an integer, got {n!r}")
    n = int(n)
    if n < minimum:
        raise ValueError(f"dimension n={n} not supported (need n >= {minimum})")
    if n > N_MAX:
        raise ValueError(f"dimension n={n} exceeds the supported cap {N_MAX}")
    return n


def make_dims(n: int) -> DimParams:
    """Evaluate all closed-form constants for dimension ``n``.

    Raises
    ------
    ValueError
        If ``n < 5`` or ``n > 24``.
    """
    n = _check_dim(n)
    two_star = 2.0 * n / (n - 4)
    c_n = float((n - 4) * (n - 2) * n * (n + 2)) ** ((n - 4) / 8.0)
    # log form avoids overflow of Gamma(n) at the top of the range
    log_ratio = math.lgamma(n / 2.0) - math.lgamma(float(n))
    S2 = math.pi**2 * n * (n - 4) * (n * n - 4) * math.exp(4.0 / n * log_ratio)
    omega = sphere_area(n)
    a_n = 2.0 * omega / (n * (n + 2))
    if n == 8:
        b_n = omega
    elif n >= 9:
        b_n = omega * math.exp(
            math.lgamma(n / 2.0 - 4) + math.lgamma(n / 2.0) - math.lgamma(n - 4.0)
        ) / 2.0
    else:
        b_n = None

    C_n = D_n = None
    if n >= 9:
        e = 1.0 / (n - 8)
        common = (
            a_n ** (-4 * e)
            * b_n ** ((n - 4) * e)
            * c_n ** (2.0 * n / (n - 4) - 8 * e)
        )
        C_n = (n - 8) / (n - 4) * (4.0 / (n - 4)) ** (4 * e) * common * S2 ** ((4 - n) / 4.0)
        D_n = (4.0 / (n - 4)) ** ((n - 4) * e) * common * S2 ** (-n / 4.0)

    return DimParams(
        n=n,
        two_star=two_star,
        c_n=c_n,
        sobolev_S2=S2,
        omega_n=omega,
        a_n=a_n,
        b_n=b_n,
        frak_C_n=C_n,
        frak_D_n=D_n,
        c0_convention=(n - 4) * (n - 2) * omega,
        c0_distributional=2.0 * (n - 2) * (n - 4) * omega,
    )


def radial_power_integral(n: int, m: float, epsrel: float = 1e-13) -> float:
    """``int_{R^n} (1+|z|^2)^(-m) dz`` by adaptive quadrature.

    The substitution ``r = tan(phi)`` maps the half line onto ``[0, pi/2]``
    with a bounded integrand ``sin^(n-1) cos^(2m-n-1)``, so no tail
    truncation is involved. Requires ``2m > n``.
    """
    if 2 * m <= n:
        raise ValueError(f"integral diverges for n={n}, m={m}")
    k = 2 * m - n - 1

    def f(phi):
        return np.sin(phi) ** (n - 1) * np.cos(phi) ** k

    val, _ = integrate.quad(f, 0.0, math.pi / 2, epsabs=0.0, epsrel=epsrel, limit=200)
    return sphere_area(n) * val


@dataclass
class ConstantReport:
    n: int
    a_closed: float
    a_quad: float
    b_closed: float | None
    b_quad: float | None
    tol: float
    notes: list[str] = field(default_factory=list)

    @property
    def a_dev(self) -> float:
        return abs(self.a_quad - self.a_closed)

    @property
    def b_dev(self) -> float | None:
        if self.b_quad is None:
            return None
        return abs(self.b_quad - self.b_closed)

    @property
    def a_rel(self) -> float:
        return self.a_dev / abs(self.a_closed)

    @property
    def b_rel(self) -> float | None:
        if self.b_quad is None:
            return None
        return self.b_dev / abs(self.b_closed)

    @property
    def passed(self) -> bool:
        ok = self.a_rel < self.tol
        if self.b_quad is not None:
            ok = ok and self.b_rel < self.tol
        return bool(ok)

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "a_closed": self.a_closed,
            "a_quad": self.a_quad,
            "a_dev": self.a_dev,
            "a_rel": self.a_rel,
            "b_closed": self.b_closed,
            "b_quad": self.b_quad,
            "b_dev": self.b_dev,
            "b_rel": self.b_rel,
            "tol": self.tol,
            "passed": self.passed,
            "notes": list(self.notes),
        }


def verify_integral_constants(n: int, tol: float = 1e-10) -> ConstantReport:
    """Compare quadrature values of ``a_n`` and ``b_n`` with their closed forms.

    The report passes when every relative deviation is below ``tol``. For
    ``n = 8`` the ``b_n`` integral diverges logarithmically and is skipped.
    """
    n = _check_dim(n, minimum=8)
    d = make_dims(n)
    a_quad = radial_power_integral(n, (n + 4) / 2.0)
    notes = []
    if n == 8:
        b_quad = None
        notes.append("b_8 integral diverges logarithmically; b_8 = omega_8 by definition")
    else:
        b_quad = radial_power_integral(n, n - 4.0)
    return ConstantReport(
        n=n,
        a_closed=d.a_n,
        a_quad=a_quad,
        b_closed=d.b_n,
        b_quad=b_quad,
        tol=tol,
        notes=notes,
    )


def sobolev_quotient_quadrature(n: int, rho: float = 1e3) -> float:
    """Rayleigh quotient of the unit bubble on R^n by radial quadrature.

    The integrals run over ``[0, rho]`` (split at powers of ten) and the
    tails beyond ``rho`` are added from the leading large-``r`` behaviour
    ``Delta U ~ -4 k c r^(2-n)`` and ``U ~ c r^(4-n)``.
    """
    n = _check_dim(n)
    k = (n - 4) / 2.0
    c = make_dims(n).c_n
    ts = 2.0 * n / (n - 4)

    def lap2(r):
        return (2 * k * c * (1 + r * r) ** (-k - 2) * (n + 2 * r * r)) ** 2 * r ** (n - 1)

    def upow(r):
        return (c * (1 + r * r) ** (-k)) ** ts * r ** (n - 1)

    cuts = [0.0] + [10.0**j for j in range(0, int(math.floor(math.log10(rho))) + 1)]
    if cuts[-1] < rho:
        cuts.append(rho)
    num = sum(integrate.quad(lap2, a, b, epsabs=0.0, epsrel=1e-13, limit=200)[0]
              for a, b in zip(cuts, cuts[1:]))
    den = sum(integrate.quad(upow, a, b, epsabs=0.0, epsrel=1e-13, limit=200)[0]
              for a, b in zip(cuts, cuts[1:]))
    num += (4 * k * c) ** 2 * rho ** (4.0 - n) / (n - 4)
    den += c**ts * rho ** (-float(n)) / n
    omega = sphere_area(n)
    return omega * num / (omega * den) ** (2.0 / ts)
