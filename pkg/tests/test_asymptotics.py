import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from navier_bn import (InsufficientWindow, PotentialSpec, SweepRecord,
                       concentration_sign_check, fit_blowup_laws, fit_gap_law,
                       make_dims, sweep)
from navier_bn.asymptotics import _linfit, gap_law_target

V_MINUS = PotentialSpec.constant(-1.0)
V_PLUS = PotentialSpec.constant(1.0)
EPS9 = list(np.geomspace(3e-2, 3e-3, 6))
EPS8 = list(np.geomspace(0.2, 0.05, 6))


def synthetic(eps, gap=None, lam=None, alpha_excess=0.0, v_norm=0.0, log_gap=None):
    nan = math.nan
    g = nan if gap is None else gap
    lam = nan if lam is None else lam
    if log_gap is None:
        log_gap = math.log(g) if g > 0 else -math.inf
    return SweepRecord(eps=eps, gap=g, log_gap=log_gap,
                       bubble_gap=g, bubble_log_gap=nan, lambda_fit=lam,
                       log_lambda_fit=math.log(lam), alpha_fit=1 + alpha_excess,
                       alpha_excess=alpha_excess, v_norm=v_norm, converged=True,
                       mode="full")


@pytest.fixture(scope="module")
def sweep9():
    return sweep(make_dims(9), 1.0, V_MINUS, EPS9)


@pytest.fixture(scope="module")
def sweep8():
    return sweep(make_dims(8), 1.0, V_MINUS, EPS8, mode="bubble_only")


# ---------------------------------------------------------------- sweep

def test_sweep_gaps_positive_and_decreasing(sweep9):
    gaps = [r.gap for r in sweep9]
    assert all(r.converged and not r.error for r in sweep9)
    assert all(g > 0 for g in gaps)
    assert np.all(np.diff(gaps) < 0)
    assert [r.eps for r in sweep9] == EPS9


def test_sweep_full_beats_bubble(sweep9):
    for r in sweep9:
        assert r.gap >= r.bubble_gap - 1e-10
        assert r.gap >= r.bubble_gap


def test_sweep_scale_grows(sweep9):
    lams = [r.lambda_fit for r in sweep9]
    assert np.all(np.diff(lams) > 0)
    y = np.array([r.eps * r.lambda_fit for r in sweep9])
    assert np.all(np.diff(np.abs(np.diff(y))) <= 0)


def test_sweep_parallel_matches_serial(sweep9):
    par = sweep(make_dims(9), 1.0, V_MINUS, EPS9, workers=3)
    assert [r.as_dict() for r in par] == [r.as_dict() for r in sweep9]


def test_sweep_n8_rate_roughly_constant(sweep8):
    vals = np.array([r.eps * r.log_gap for r in sweep8])
    assert np.all(np.isfinite(vals))
    assert np.ptp(vals) / abs(vals.mean()) < 0.1


def test_sweep_positive_potential_has_no_gap():
    recs = sweep(make_dims(9), 1.0, V_PLUS, EPS9[:2])
    assert all(r.gap <= 1e-10 for r in recs)
    recs = sweep(make_dims(8), 1.0, V_PLUS, EPS8[:2], mode="bubble_only")
    assert all(r.gap <= 1e-10 for r in recs)


@pytest.mark.parametrize("eps_list", [[1e-2, 2e-2], [1e-2, 1e-2], [1e-2, -1e-3], []])
def test_sweep_rejects_bad_eps(eps_list):
    with pytest.raises(ValueError):
        sweep(make_dims(9), 1.0, V_MINUS, eps_list)


def test_sweep_rejects_unknown_mode():
    with pytest.raises(ValueError):
        sweep(make_dims(9), 1.0, V_MINUS, [1e-2], mode="fast")


def test_sweep_records_failures_without_aborting():
    recs = sweep(make_dims(8), 1.0, V_MINUS, [0.2, 0.1], mode="full")
    assert len(recs) == 2
    assert all(not r.converged and "bubble_only" in r.error for r in recs)
    recs = sweep(make_dims(9), 1.0, V_MINUS, [1e-2, 5e-3], points=600, lambda_max=10.0)
    assert all(r.error and not r.converged for r in recs)


# ---------------------------------------------------------------- fits

def test_power_fit_synthetic():
    d = make_dims(9)
    _, C = gap_law_target(d, 1.0, V_MINUS)
    recs = [synthetic(e, gap=C * e**5, lam=100.0) for e in EPS9]
    fit = fit_gap_law(d, recs, rho=1.0, V=V_MINUS)
    assert fit.law == "power"
    assert fit.exponent_or_rate == pytest.approx(5.0, rel=1e-12)
    assert fit.prefactor == pytest.approx(C, rel=1e-10)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert fit.relative_error < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.floats(1.0, 8.0), st.floats(1e-12, 1e3))
def test_power_fit_recovers_planted_law(exponent, pref):
    recs = [synthetic(e, gap=pref * e**exponent, lam=100.0) for e in EPS9]
    fit = fit_gap_law(make_dims(9), recs)
    assert fit.exponent_or_rate == pytest.approx(exponent, rel=1e-10)
    assert fit.prefactor == pytest.approx(pref, rel=1e-9)


def test_exponential_fit_synthetic():
    d = make_dims(8)
    recs = [synthetic(e, gap=0.0, lam=100.0, log_gap=-288.0 / e + 3.0) for e in EPS8]
    fit = fit_gap_law(d, recs, rho=1.0, V=V_MINUS)
    assert fit.law == "exponential"
    assert fit.exponent_or_rate == pytest.approx(288.0, rel=1e-10)
    assert fit.target == pytest.approx(d.c_n**2 / (10 * 2 / 3), rel=1e-12)


def test_gap_law_n8_real(sweep8):
    fit = fit_gap_law(make_dims(8), sweep8, rho=1.0, V=V_MINUS)
    assert fit.relative_error < 0.15


def test_scale_law_synthetic():
    d = make_dims(9)
    K = 316.9
    recs = [synthetic(e, gap=e**5, lam=K / e) for e in EPS9]
    scale = fit_blowup_laws(d, 1.0, V_MINUS, recs)[0]
    assert scale.value == pytest.approx(K, rel=1e-12)
    assert scale.exponent_or_rate == pytest.approx(-1.0, rel=1e-12)


def test_scale_law_n8(sweep8):
    d = make_dims(8)
    (fit,) = fit_blowup_laws(d, 1.0, V_MINUS, sweep8)
    assert fit.target == pytest.approx(d.c_n**2 * 1.5 / 40, rel=1e-12)
    assert fit.relative_error < 0.10


def test_blowup_laws_n9(sweep9):
    fits = fit_blowup_laws(make_dims(9), 1.0, V_MINUS, sweep9)
    scale, amp, rem = fits
    assert scale.relative_error < 0.15
    assert amp.relative_error < 0.25
    assert rem.monotone and rem.target == 0.0
    assert all(0.0 <= f.r_squared <= 1.0 for f in fits)


def test_fit_needs_enough_records():
    recs = [synthetic(e, gap=e**5, lam=1.0) for e in EPS9[:3]]
    with pytest.raises(InsufficientWindow):
        fit_gap_law(make_dims(9), recs)


def test_fit_needs_wide_window():
    recs = [synthetic(e, gap=e**5, lam=1.0) for e in np.geomspace(1e-2, 5e-3, 5)]
    with pytest.raises(InsufficientWindow):
        fit_gap_law(make_dims(9), recs)


def test_fit_skips_unconverged():
    recs = [synthetic(e, gap=e**5, lam=1.0) for e in EPS9]
    recs[2] = replace(recs[2], converged=False, gap=1.0, log_gap=0.0)
    fit = fit_gap_law(make_dims(9), recs)
    assert fit.count == 5
    assert fit.exponent_or_rate == pytest.approx(5.0, rel=1e-12)


@settings(max_examples=50)
@given(st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=12))
def test_r_squared_in_unit_interval(ys):
    x = np.arange(len(ys), dtype=float)
    _, _, r2 = _linfit(x, ys)
    assert 0.0 <= r2 <= 1.0


# ---------------------------------------------------------------- sign check

def test_sign_check_negative_potential(sweep9):
    chk = concentration_sign_check(make_dims(9), 1.0, V_MINUS, sweep9[-1])
    assert chk and chk.argmax_radius == 0.0 and chk.V_at_argmax == -1.0


def test_sign_check_localized_potential():
    d = make_dims(9)
    V = PotentialSpec.parse("poly:-0.25,0,1")
    rec = sweep(d, 1.0, V, [2e-2], mode="bubble_only")[0]
    chk = concentration_sign_check(d, 1.0, V, rec)
    assert chk.ok and chk.V_at_argmax < 0


def test_sign_check_positive_potential(sweep9):
    chk = concentration_sign_check(make_dims(9), 1.0, V_PLUS, sweep9[0])
    assert not chk and "no deflection" in chk.diagnostics


def test_sign_check_unconverged():
    rec = replace(synthetic(1e-2, gap=1.0, lam=1.0), converged=False)
    assert not concentration_sign_check(make_dims(9), 1.0, V_MINUS, rec)
