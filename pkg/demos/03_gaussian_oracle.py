"""Population self-potential of N(0, A) and its small-eps expansion."""

from __future__ import annotations

import numpy as np

from selfot.gaussian_oracle import gaussian_entropic_map, solve_self_quadratic, taylor_self_potential

A = np.array([[1.0, 0.3], [0.3, 0.6]])
prec = np.linalg.inv(A)
print(" eps      |S - eps/2 A^-1|   |S - taylor|")
for eps in (0.08, 0.04, 0.02, 0.01):
    S = solve_self_quadratic(A, eps).S
    first = np.abs(S - 0.5 * eps * prec).max()
    second = np.abs(S - taylor_self_potential(A, eps).S).max()
    print(f"{eps:.2f}   {first:.3e}          {second:.3e}")

# entropic map N(0,1) -> N(0,4): T_eps(x) ~ 2x - (eps/2) x
for eps in (0.2, 0.05):
    t = gaussian_entropic_map([[1.0]], [[4.0]], eps, [1.0])[0]
    print(f"eps={eps}: T(1) = {t:.5f}, first-order prediction {2 - eps / 2:.5f}")
