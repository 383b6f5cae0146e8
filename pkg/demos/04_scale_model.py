"""The two-term scale model and the optimal bubble scale.

For n >= 9 the minimizer of A lambda^(4-n) - eps B lambda^-4 is a power of
eps. At n = 8 the scale grows like exp(72/eps) and only its logarithm is
representable.
"""

from navier_bn import PotentialSpec, lambda_star, log_lambda_star, make_dims
from navier_bn.bubblefun import deflection_coefficients

d9 = make_dims(9)
ls = lambda_star(d9, 1.0, 1.0, 1.0)
print(f"n=9, A=B=eps=1: lambda0 = {ls.lambda0}, f(lambda0) = {ls.f_at_min:.5f}, "
      f"lower-bound constant c0 = {ls.c0:.4f}")

V = PotentialSpec.constant(-1.0)
A, B = deflection_coefficients(d9, 1.0, V)
for eps in (1e-1, 1e-2, 1e-3):
    print(f"  unit ball, V=-1, eps={eps:g}: lambda* = {lambda_star(d9, A, B, eps).lambda0:.4g}")

d8 = make_dims(8)
A, B = deflection_coefficients(d8, 1.0, V)
print(f"\nn=8, unit ball, V=-1: A/B = {A / B:.4f}")
for eps in (0.2, 0.1, 0.05):
    print(f"  eps={eps:g}: log lambda* = {log_lambda_star(d8, A, B, eps):.3f}")
