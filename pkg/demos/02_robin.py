"""Robin function of the Navier Green function on the unit ball.

R(t) blows up like (1-t)^(4-n) at the boundary; the rescaled value stays
between two constants.
"""

import numpy as np

from navier_bn import make_dims, robin_center, robin_scan

for n in (8, 9, 12):
    d = make_dims(n)
    c = robin_center(d, 1.0)
    print(f"n={n}: R(0) = {c.value:.12f} (closed form {2 * (n - 2) / n:.12f})")
    for v in robin_scan(d, 1.0, 5):
        t = v.x_radius
        print(f"    t={t:.3f}  R={v.value:12.5e}  R*(1-t)^(n-4)={v.value * (1 - t) ** (n - 4):.5f}"
              f"  in [{2.0 ** (4 - n):.5f}, {2 * (n - 2) / n:.5f}]")
