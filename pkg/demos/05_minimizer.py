"""Constrained minimization of the quotient at one eps, n = 9.

The minimizer is alpha (PU_lambda + v) with v orthogonal to the bubble and
its scale derivative. The gap below S2 beats the best projected bubble.
"""

import warnings

from navier_bn import (PotentialSpec, build_grid, fit_decomposition, make_dims,
                      minimize_quotient, upper_bound_prediction)
from navier_bn.asymptotics import sweep_grid_lambda_max

dims = make_dims(9)
V = PotentialSpec.constant(-1.0)
eps = 1e-2
grid = build_grid(9, 1.0, 3000, sweep_grid_lambda_max(dims, 1.0, V, eps))
with warnings.catch_warnings():
    warnings.simplefilter("ignore", RuntimeWarning)
    res = minimize_quotient(dims, grid, eps, V)
print(f"converged: {res.converged} after {res.iterations} iterations")
print(f"gap S2 - S        = {res.gap:.6e}")
print(f"bubble-only gap   = {res.bubble_gap:.6e}")
print(f"predicted gap     = {upper_bound_prediction(dims, 1.0, V, eps):.6e}")
print(f"lambda = {res.lam:.4f}, alpha - 1 = {res.alpha_excess:.3e}, ||v|| = {res.v_norm:.3e}")
print(f"Euler-Lagrange residual {res.el_residual:.2e}, orthogonality {res.orthogonality}")
fit = fit_decomposition(dims, grid, res)
print(f"refit: lambda = {fit.lam:.4f}, Pythagoras defect {fit.pythagoras_defect:.1e}")
