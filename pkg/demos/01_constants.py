"""Dimension constants and their quadrature cross-checks for n = 8..12."""

from navier_bn import make_dims, sobolev_quotient_quadrature, verify_integral_constants

print(f"{'n':>3} {'2*':>6} {'S2':>14} {'a_n rel dev':>12} {'b_n rel dev':>12} {'S2 quad rel':>12}")
for n in range(8, 13):
    d = make_dims(n)
    rep = verify_integral_constants(n)
    s2q = sobolev_quotient_quadrature(n)
    b_rel = "exact" if rep.b_rel is None else f"{rep.b_rel:.1e}"
    print(f"{n:>3} {d.two_star:>6.3f} {d.sobolev_S2:>14.6f} {rep.a_rel:>12.1e} {b_rel:>12} "
          f"{abs(s2q / d.sobolev_S2 - 1):>12.1e}")
print("\nThe bubble quotient reproduces S2 and both integral constants match quadrature.")
