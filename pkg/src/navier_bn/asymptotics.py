"""Sweeps in ``eps`` and fits of the limiting laws for the gap and the
blow-up parameters.

At ``n = 8`` both the optimal scale and the gap leave the double range for
small ``eps`` (``log lambda ~ 72/eps``), so records carry logarithms next
to the plain values.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from .bubblefun import (DomainError, PotentialSpec, best_bubble, phi_n,
                        predicted_log_lambda)
from .dimconsts import DimParams, make_dims
from .greenrobin import robin_offcenter
from .minimizer import MinimizerOptions, fit_decomposition, minimize_quotient
from .radial import build_grid

DEFAULT_POINTS = 3000
LAMBDA_HEADROOM = 3.0  # grid lambda_max over the predicted scale at the smallest eps
GRID_LAMBDA_CAP = 1e8


class InsufficientWindow(ValueError):
    """Too few usable records, or an eps window that is too narrow."""


@dataclass(frozen=True)
class SweepRecord:
    """One point of an ``eps`` sweep.

    ``alpha_excess`` is ``alpha - 1``, kept separately because it lies far
    below the rounding level of ``alpha``. ``log_gap`` is ``-inf`` when the
    gap is not positive.
    """

    eps: float
    gap: float
    log_gap: float
    bubble_gap: float
    bubble_log_gap: float
    lambda_fit: float
    log_lambda_fit: float
    alpha_fit: float
    alpha_excess: float
    v_norm: float
    converged: bool
    mode: str
    grid_points: int = 0
    lambda_max: float = math.nan
    iterations: int = 0
    el_residual: float = math.nan
    orthogonality: tuple = (math.nan, math.nan)
    error: str = ""

    def as_dict(self) -> dict:
        d = asdict(self)
        d["orthogonality"] = list(self.orthogonality)
        return d


def _exp_or_inf(x: float) -> float:
    return math.exp(x) if x < 709.0 else math.inf


def _log_or_minf(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


@lru_cache(maxsize=4)
def _grid(n: int, rho: float, points: int, lambda_max: float):
    return build_grid(n, rho, points, lambda_max)


def sweep_grid_lambda_max(dims: DimParams, rho: float, V: PotentialSpec, eps_min: float) -> float:
    """Grid range needed to resolve the optimal scale at ``eps_min``."""
    ll = predicted_log_lambda(dims, rho, V, eps_min)
    return float(max(LAMBDA_HEADROOM * _exp_or_inf(ll), 1.0))


def _failed(eps: float, mode: str, msg: str, points: int = 0, lam_max: float = math.nan):
    nan = math.nan
    return SweepRecord(eps=eps, gap=nan, log_gap=nan, bubble_gap=nan, bubble_log_gap=nan,
                       lambda_fit=nan, log_lambda_fit=nan, alpha_fit=nan, alpha_excess=nan,
                       v_norm=nan, converged=False, mode=mode, grid_points=points,
                       lambda_max=lam_max, error=msg)


def _bubble_record(dims, rho, V, eps) -> SweepRecord:
    bb = best_bubble(dims, rho, V, eps)
    ax = bb.terms.alpha_excess(dims, eps)
    return SweepRecord(eps=eps, gap=bb.gap, log_gap=bb.log_gap, bubble_gap=bb.gap,
                       bubble_log_gap=bb.log_gap, lambda_fit=_exp_or_inf(bb.log_lam),
                       log_lambda_fit=bb.log_lam, alpha_fit=1.0 + ax, alpha_excess=ax,
                       v_norm=0.0, converged=True, mode="bubble_only")


def _full_record(dims, rho, V, eps, points, lam_max, opts) -> SweepRecord:
    grid = _grid(dims.n, rho, points, lam_max)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = minimize_quotient(dims, grid, eps, V, opts)
    fit = fit_decomposition(dims, grid, res)
    return SweepRecord(eps=eps, gap=res.gap, log_gap=_log_or_minf(res.gap),
                       bubble_gap=res.bubble_gap, bubble_log_gap=_log_or_minf(res.bubble_gap),
                       lambda_fit=fit.lam, log_lambda_fit=math.log(fit.lam),
                       alpha_fit=fit.alpha, alpha_excess=res.alpha_excess,
                       v_norm=fit.v_norm, converged=bool(res.converged and not fit.flagged),
                       mode="full", grid_points=grid.size - 1, lambda_max=lam_max,
                       iterations=res.iterations, el_residual=res.el_residual,
                       orthogonality=tuple(fit.orthogonality_residuals))


def _run_one(job) -> SweepRecord:
    n, rho, V, eps, mode, points, lam_max, opts = job
    dims = make_dims(n)
    try:
        if mode == "bubble_only":
            return _bubble_record(dims, rho, V, eps)
        return _full_record(dims, rho, V, eps, points, lam_max, opts)
    except Exception as exc:  # recorded, never fatal for the sweep
        return _failed(eps, mode, f"{type(exc).__name__}: {exc}", points, lam_max)


def sweep(dims: DimParams, rho: float, V: PotentialSpec, eps_list, mode: str = "full",
          points: int = DEFAULT_POINTS, lambda_max: float | None = None,
          opts: MinimizerOptions | None = None, workers: int = 1) -> list[SweepRecord]:
    """Minimal energies and fitted blow-up parameters along ``eps_list``.

    Parameters
    ----------
    eps_list : sequence of float
        Positive and strictly decreasing.
    mode : {"full", "bubble_only"}
        ``full`` runs the minimizer on a grid whose range is sized from the
        predicted scale at the smallest ``eps``; ``bubble_only`` optimizes
        over projected bubbles only and needs no grid.
    workers : int
        Size of a process pool for the independent ``eps`` points.

    Returns
    -------
    list of SweepRecord
        In input order. A failed point is recorded with ``error`` set.
    """
    if mode not in ("full", "bubble_only"):
        raise ValueError(f"unknown sweep mode {mode!r}")
    eps_list = [float(e) for e in eps_list]
    if not eps_list:
        raise ValueError("empty eps list")
    if any(not e > 0 for e in eps_list):
        raise ValueError("eps values must be positive")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps values must be strictly decreasing")
    lam_max = math.nan
    if mode == "full":
        if lambda_max is None:
            lambda_max = sweep_grid_lambda_max(dims, rho, V, eps_list[-1])
        lam_max = float(lambda_max)
        if lam_max > GRID_LAMBDA_CAP:
            return [_failed(e, mode, f"predicted scale needs lambda_max={lam_max:.3g} beyond "
                            f"the grid cap {GRID_LAMBDA_CAP:g}; use bubble_only", points,
                            lam_max) for e in eps_list]
    jobs = [(dims.n, float(rho), V, e, mode, int(points), lam_max, opts) for e in eps_list]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_run_one, jobs))
    else:
        out = [_run_one(j) for j in jobs]
    return out


# ---------------------------------------------------------------- fits

@dataclass(frozen=True)
class FitResult:
    """Least-squares fit of one law along a sweep.

    For ``law == "power"``, ``y = prefactor * eps^exponent_or_rate``. For
    ``law == "exponential"``, ``log y = -exponent_or_rate / eps + log prefactor``.
    ``value`` and ``target`` hold the limit estimate and its predicted value
    where the law has one.
    """

    law: str
    exponent_or_rate: float
    prefactor: float
    r_squared: float
    window: tuple
    quantity: str = "gap"
    value: float = math.nan
    target: float = math.nan
    monotone: bool | None = None
    count: int = 0

    @property
    def relative_error(self) -> float:
        """``|value/target - 1|``, or ``|value|`` for a zero target."""
        if self.target == 0:
            return abs(self.value)
        return abs(self.value / self.target - 1.0)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        d["relative_error"] = self.relative_error
        return d


def _linfit(x, y):
    """Slope, intercept and coefficient of determination of ``y ~ x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, icept), *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - (slope * x + icept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(res**2))
    scale = max(float(np.max(np.abs(y))), 1e-300)
    if ss_tot <= (1e-14 * scale) ** 2 * len(y):
        r2 = 1.0
    else:
        r2 = min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)
    return float(slope), float(icept), r2


def _usable(records, need_gap=True, min_count=4):
    recs = [r for r in records if r.converged and not r.error]
    if need_gap:
        recs = [r for r in recs if math.isfinite(r.log_gap)]
    recs.sort(key=lambda r: -r.eps)
    if len(recs) < min_count:
        raise InsufficientWindow(f"need >= {min_count} converged records, have {len(recs)}")
    eps = np.array([r.eps for r in recs])
    if eps.max() / eps.min() < math.sqrt(10.0):
        raise InsufficientWindow("eps window spans less than half a decade")
    return recs, eps


def gap_law_target(dims: DimParams, rho: float, V: PotentialSpec):
    """Predicted ``(exponent or rate, prefactor)`` of the gap law."""
    phi, _ = phi_n(dims, rho, V)
    if dims.n == 8:
        return dims.c_n**2 / (10 * phi), 1.0
    return (dims.n - 4) / (dims.n - 8), dims.frak_C_n * phi


def fit_gap_law(dims: DimParams, records, law: str | None = None,
                rho: float | None = None, V: PotentialSpec | None = None) -> FitResult:
    """Fit the gap law along a sweep.

    ``power`` (default for ``n >= 9``) regresses ``log gap`` on ``log eps``.
    ``exponential`` (default for ``n = 8``) regresses ``eps log gap`` on
    ``eps``; the intercept gives ``-c`` and the slope the first correction.
    With ``rho`` and ``V`` the predicted rate or prefactor is attached as
    ``target``.
    """
    if law is None:
        law = "exponential" if dims.n == 8 else "power"
    recs, eps = _usable(records)
    lg = np.array([r.log_gap for r in recs])
    window = (float(eps.min()), float(eps.max()))
    target = math.nan
    if law == "power":
        slope, icept, r2 = _linfit(np.log(eps), lg)
        out = dict(exponent_or_rate=slope, prefactor=math.exp(icept), value=math.exp(icept))
        if rho is not None and V is not None:
            target = float(gap_law_target(dims, rho, V)[1])
    elif law == "exponential":
        slope, icept, r2 = _linfit(eps, eps * lg)
        out = dict(exponent_or_rate=-icept, prefactor=_exp_or_inf(slope), value=-icept)
        if rho is not None and V is not None:
            target = float(gap_law_target(dims, rho, V)[0])
    else:
        raise ValueError(f"unknown law {law!r}")
    return FitResult(law=law, r_squared=r2, window=window, quantity="gap", target=target,
                     count=len(recs), **out)


def _monotone_tail(values, count=3) -> bool:
    tail = np.asarray(values[-count:], dtype=float)
    return bool(np.all(np.diff(tail) <= 0))


def fit_blowup_laws(dims: DimParams, rho: float, V: PotentialSpec, records) -> list[FitResult]:
    """Fits of the scale, the amplitude and the remainder along a sweep.

    For ``n >= 9``:

    * ``eps lambda^(n-8)``: power fit of ``lambda`` and a limit from the
      linear extrapolation of ``eps lambda^(n-8)`` to ``eps = 0``;
    * ``(alpha - 1) / eps^((n-4)/(n-8))`` at the smallest ``eps``, with a
      power fit of ``alpha - 1``;
    * ``||v|| / eps^((n-4)/(2n-16))`` at the smallest ``eps``, with the
      decrease over the last three points in ``monotone``.

    For ``n = 8`` only the scale law ``eps log lambda`` is fitted.
    """
    n = dims.n
    recs, eps = _usable(records, need_gap=False)
    window = (float(eps.min()), float(eps.max()))
    ll = np.array([r.log_lambda_fit for r in recs])
    _, r0 = phi_n(dims, rho, V)
    R = robin_offcenter(dims, rho, r0).value
    V0 = abs(float(V(np.array([r0]))[0]))
    out = []
    if n == 8:
        y = eps * ll
        slope, icept, r2 = _linfit(eps, y)
        out.append(FitResult(law="exponential", exponent_or_rate=icept, prefactor=math.nan,
                             r_squared=r2, window=window, quantity="eps*log(lambda)",
                             value=icept, target=float(dims.c_n**2 * R / (40 * V0)),
                             count=len(recs)))
        return out
    # scale
    slope, icept, r2 = _linfit(np.log(eps), ll)
    y = eps * np.exp((n - 8) * ll)
    s2, limit, _ = _linfit(eps, y)
    target = float((n - 4) * dims.a_n * dims.c_n ** (dims.two_star - 2) * R
                   / (4 * dims.b_n * V0))
    diffs = np.abs(np.diff(y))
    out.append(FitResult(law="power", exponent_or_rate=slope, prefactor=math.exp(icept),
                         r_squared=r2, window=window, quantity="eps*lambda^(n-8)",
                         value=limit, target=target,
                         monotone=bool(np.all(np.diff(diffs) <= 0)) if len(diffs) > 1 else None,
                         count=len(recs)))
    # amplitude
    gamma = (n - 4) / (n - 8)
    ax = np.array([r.alpha_excess for r in recs])
    phi, _ = phi_n(dims, rho, V)
    if np.all(ax > 0):
        slope, icept, r2 = _linfit(np.log(eps), np.log(ax))
        pref = math.exp(icept)
    else:
        slope, pref, r2 = math.nan, math.nan, 0.0
    out.append(FitResult(law="power", exponent_or_rate=slope, prefactor=pref, r_squared=r2,
                         window=window, quantity="(|alpha|-1)/eps^((n-4)/(n-8))",
                         value=float(ax[-1] / eps[-1] ** gamma),
                         target=float(dims.frak_D_n * phi), count=len(recs)))
    # remainder
    beta = (n - 4) / (2 * n - 16)
    vn = np.array([r.v_norm for r in recs])
    ratio = vn / eps**beta
    if np.all(vn > 0):
        slope, icept, r2 = _linfit(np.log(eps), np.log(vn))
        pref = math.exp(icept)
    else:
        slope, pref, r2 = math.nan, math.nan, 0.0
    out.append(FitResult(law="power", exponent_or_rate=slope, prefactor=pref, r_squared=r2,
                         window=window, quantity="||v||/eps^((n-4)/(2n-16))",
                         value=float(ratio[-1]), target=0.0,
                         monotone=_monotone_tail(ratio), count=len(recs)))
    return out


# ---------------------------------------------------------------- sign check

@dataclass(frozen=True)
class SignCheck:
    ok: bool
    argmax_radius: float
    V_at_argmax: float
    mass_center: float
    diagnostics: str = ""

    def __bool__(self) -> bool:
        return self.ok


def concentration_sign_check(dims: DimParams, rho: float, V: PotentialSpec,
                             record: SweepRecord) -> SignCheck:
    """Check that concentration happens where the potential is negative.

    Radial profiles concentrate at the origin by symmetry, so the mass
    center is reported as ``0``; the check is that ``V`` is negative at the
    maximizer of ``Phi_n`` and that the record shows a genuine deflection.
    """
    nan = math.nan
    if not record.converged or record.error:
        return SignCheck(False, nan, nan, nan, "record not converged")
    try:
        _, r0 = phi_n(dims, rho, V)
    except DomainError:
        return SignCheck(False, nan, nan, nan, "no deflection: V has no negative values")
    v0 = float(V(np.array([r0]))[0])
    if not math.isfinite(record.log_gap):
        return SignCheck(False, r0, v0, 0.0, "no deflection: energy not below S2")
    if not v0 < 0:
        return SignCheck(False, r0, v0, 0.0, "V is not negative at the Phi_n maximizer")
    return SignCheck(True, r0, v0, 0.0, "")
