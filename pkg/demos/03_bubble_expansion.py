"""Energies of the projected bubble against their leading expansions, n = 9."""

from navier_bn import PotentialSpec, build_grid, expansion_report, make_dims

dims = make_dims(9)
grid = build_grid(9, 1.0, 3000, 1e3)
rep = expansion_report(dims, grid, PotentialSpec.constant(-1.0), 1.0, [25, 50, 100, 200])
print(f"{'lambda':>7} {'deflection':>12} {'predicted':>12} {'potential':>12} {'predicted':>12}")
for row in rep.rows():
    print(f"{row['lambda']:>7.0f} {row['deflection_H']:>12.5e} {row['deflection_H_pred']:>12.5e} "
          f"{row['potential_term']:>12.5e} {row['potential_term_pred']:>12.5e}")
print("\nlog-log slopes of the residuals:")
for k, s in rep.slopes.items():
    print(f"  {k:>16}: {s:+.3f}")
