import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from navier_bn import (MinimizerOptions, PotentialSpec, build_grid, coercivity_check,
                       el_residual, fit_decomposition, integrate, make_dims,
                       minimize_quotient, project_bubble)
from navier_bn.asymptotics import sweep_grid_lambda_max
from navier_bn.bubblefun import upper_bound_prediction
from navier_bn.minimizer import (BubbleFrame, _bubble_modes, coercivity_ratio,
                                 project_tangent, random_navier_field)
from navier_bn.radial import RadialField

V_MINUS = PotentialSpec.constant(-1.0)
EPS = 1e-2


@pytest.fixture(scope="module")
def setup9():
    d = make_dims(9)
    grid = build_grid(9, 1.0, 3000, sweep_grid_lambda_max(d, 1.0, V_MINUS, EPS))
    return d, grid


@pytest.fixture(scope="module")
def result9(setup9):
    d, grid = setup9
    return minimize_quotient(d, grid, EPS, V_MINUS)


def _mass(u, ts):
    return integrate(u.with_values(np.abs(u.values) ** ts, abs(u.inner_value) ** ts))


# ---------------------------------------------------------------- minimize_quotient

def test_normalization(setup9, result9):
    d, _ = setup9
    assert _mass(result9.u, d.two_star) == pytest.approx(d.S4, rel=1e-10)


def test_converged_below_sobolev(setup9, result9):
    d, _ = setup9
    assert result9.converged
    assert 0 < result9.gap
    assert result9.S_value <= d.sobolev_S2


def test_gap_near_prediction(setup9, result9):
    d, _ = setup9
    pred = upper_bound_prediction(d, 1.0, V_MINUS, EPS)
    assert 0.9 * pred <= result9.gap <= 1.1 * pred


def test_improves_on_bubble(result9):
    assert result9.gap >= result9.bubble_gap
    assert result9.v_norm > 0


def test_orthogonality(result9):
    assert max(result9.orthogonality) < 1e-8


def test_residual_consistent_with_tolerance(result9):
    opts = MinimizerOptions()
    assert el_residual(None, None, result9, EPS, V_MINUS) == result9.el_residual
    assert result9.el_residual < 10 * opts.tol


def test_nonnegative_profile(result9):
    assert np.all(result9.u.values >= 0)


def test_random_start_agrees(setup9, result9):
    d, grid = setup9
    res = minimize_quotient(d, grid, EPS, V_MINUS, MinimizerOptions(init="random", seed=3))
    assert res.converged
    assert res.gap == pytest.approx(result9.gap, rel=1e-6)
    assert res.lam == pytest.approx(result9.lam, rel=1e-6)


def test_deterministic(setup9, result9):
    d, grid = setup9
    again = minimize_quotient(d, grid, EPS, V_MINUS)
    assert again.gap == result9.gap
    assert np.array_equal(again.u.values, result9.u.values)


def test_descent_decreases_objective(setup9, result9):
    d, grid = setup9
    frame = BubbleFrame(d, grid, EPS, V_MINUS, result9.lam)
    z0 = np.zeros(grid.size)
    _, state = frame.value(z0)
    df, _ = frame.increment(z0, state, result9.z)
    assert df < 0


def test_lambda_law(setup9, result9):
    d, _ = setup9
    target = 5 * d.a_n * d.c_n ** (d.two_star - 2) * (14 / 9) / (4 * d.b_n)
    assert EPS * result9.lam == pytest.approx(target, rel=0.15)


def test_unresolved_grid_rejected():
    d = make_dims(9)
    grid = build_grid(9, 1.0, 600, 10.0)
    with pytest.raises(ValueError):
        minimize_quotient(d, grid, EPS, V_MINUS)


def test_negative_eps_rejected(setup9):
    d, grid = setup9
    with pytest.raises(ValueError):
        minimize_quotient(d, grid, -1.0, V_MINUS)


# ---------------------------------------------------------------- residual

def test_residual_of_bubble_without_potential():
    d = make_dims(9)
    grid = build_grid(9, 1e2, 2400, 10.0)
    u = project_bubble(d, grid, 1.0).PU
    assert el_residual(d, grid, u, 0.0, V_MINUS) < 1e-5


def test_residual_of_bubble_with_potential():
    d = make_dims(9)
    grid = build_grid(9, 1.0, 2400, 1e3)
    res = [el_residual(d, grid, project_bubble(d, grid, lam).PU, 1.0, V_MINUS)
           for lam in (20.0, 40.0, 80.0)]
    assert all(r > 0 for r in res)
    assert res[0] > res[1] > res[2]


# ---------------------------------------------------------------- decomposition

@pytest.fixture(scope="module")
def small():
    d = make_dims(9)
    grid = build_grid(9, 1.0, 600, 1e3)
    return d, grid, project_bubble(d, grid, 100.0).PU


def test_self_fit(small):
    d, grid, pu = small
    fit = fit_decomposition(d, grid, pu)
    assert fit.alpha == pytest.approx(1.0, rel=1e-12)
    assert fit.lam == pytest.approx(100.0, rel=1e-12)
    assert fit.v_norm < 1e-9
    assert not fit.flagged


def test_scaled_fit(small):
    d, grid, pu = small
    fit = fit_decomposition(d, grid, pu * 1.01)
    assert fit.alpha == pytest.approx(1.01, rel=1e-12)
    assert fit.lam == pytest.approx(100.0, rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.floats(-0.2, 0.2), st.floats(0.3, 3.0))
def test_pythagoras_for_perturbed_bubble(amp, width):
    d = make_dims(9)
    grid = build_grid(9, 1.0, 600, 1e3)
    pu = project_bubble(d, grid, 100.0).PU
    bump = grid.sample(lambda r: np.exp(-((100 * r - 1) / width) ** 2))
    end = grid.sample(lambda r: math.exp(-((100 - 1) / width) ** 2) + 0 * r)
    u = pu + (bump - end) * (amp * float(pu.values.max()))
    fit = fit_decomposition(d, grid, u)
    assert fit.pythagoras_defect < 1e-8
    assert max(fit.orthogonality_residuals) < 1e-6


def test_no_bubble_flagged(small):
    d, grid, _ = small
    fit = fit_decomposition(d, grid, grid.sample(lambda r: np.cos(np.pi * r / 2)))
    assert fit.flagged


def test_structured_fit(setup9, result9):
    d, grid = setup9
    fit = fit_decomposition(d, grid, result9)
    assert fit.pythagoras_defect < 1e-8
    plain = fit_decomposition(d, grid, RadialField(grid, result9.u.values.copy(),
                                                   result9.u.inner_value))
    assert plain.lam == pytest.approx(result9.lam, rel=1e-8)
    assert plain.alpha == pytest.approx(result9.alpha, rel=1e-10)
    assert plain.pythagoras_defect < 1e-8


# ---------------------------------------------------------------- coercivity

@pytest.mark.parametrize("n", [8, 9, 10])
def test_coercivity_on_complement(n):
    d = make_dims(n)
    grid = build_grid(n, 1.0, 2000, 1e3)
    assert coercivity_check(d, grid, 20.0, trials=200) >= 8 / (n + 6) - 0.05


def test_coercivity_fails_without_projection():
    d = make_dims(9)
    grid = build_grid(9, 1.0, 2000, 1e3)
    assert coercivity_check(d, grid, 20.0, trials=50, project=False) < 8 / 15


def test_coercivity_order_independent():
    d = make_dims(8)
    grid = build_grid(8, 1.0, 1200, 1e3)
    a = coercivity_check(d, grid, 20.0, trials=20, seed=5)
    b = min(coercivity_check(d, grid, 20.0, trials=20, seed=5) for _ in range(2))
    assert a == b


def test_scale_mode_is_annihilated():
    d = make_dims(9)
    grid = build_grid(9, 1.0, 1200, 1e3)
    _, dpu = _bubble_modes(d, grid, 20.0)
    assert project_tangent(d, grid, 20.0, dpu) is None


def test_random_field_navier_data():
    d = make_dims(9)
    grid = build_grid(9, 1.0, 1200, 1e3)
    from navier_bn import laplacian_radial
    v = random_navier_field(d, grid, 20.0, np.random.default_rng(0))
    assert abs(v.values[-1]) < 1e-14 * np.max(np.abs(v.values))
    assert abs(laplacian_radial(v).values[-1]) < 1e-10 * np.max(np.abs(laplacian_radial(v).values))
    assert coercivity_ratio(d, grid, 20.0, v) < 1


def test_coercivity_rejects_unresolved_scale():
    d = make_dims(9)
    grid = build_grid(9, 1.0, 600, 10.0)
    with pytest.raises(ValueError):
        coercivity_check(d, grid, 100.0)


def test_no_potential_stays_above_sobolev():
    d = make_dims(9)
    grid = build_grid(9, 1.0, 1200, 1e5)
    with pytest.warns(RuntimeWarning):
        res = minimize_quotient(d, grid, 0.0, V_MINUS)
    assert res.gap <= 0
    assert abs(res.gap) < 1e-15 * d.sobolev_S2
