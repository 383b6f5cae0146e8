"""Bubble-only sweep at n = 8 and fits of the exponential gap law.

Gaps are of size exp(-288/eps) and are handled as logarithms throughout.
"""

from navier_bn import PotentialSpec, fit_gap_law, make_dims, sweep

dims = make_dims(8)
V = PotentialSpec.constant(-1.0)
eps_list = [0.2, 0.15, 0.11, 0.085, 0.065, 0.05]
recs = sweep(dims, 1.0, V, eps_list, mode="bubble_only", workers=1)
for r in recs:
    print(f"eps={r.eps:<6g} log gap={r.log_gap:12.4f}  eps*log gap={r.eps * r.log_gap:9.3f}  "
          f"log lambda={r.log_lambda_fit:9.3f}")
fit = fit_gap_law(dims, recs, rho=1.0, V=V)
print(f"\nfitted rate {fit.exponent_or_rate:.3f} vs predicted {fit.target:.3f} "
      f"(relative error {fit.relative_error:.1e})")
