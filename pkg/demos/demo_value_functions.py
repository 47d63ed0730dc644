"""Walk through the four routes to the value function u(t, q).

The contracted exchange's value solves a linear ODE driven by a symmetric
tridiagonal generator: diagonal -C1 q^2 (inventory penalty), off-diagonals
C1' (fills moving the book).  We solve it four ways and watch them agree.
"""

import numpy as np

from maketake import (
    ModelParams,
    solve_log_ratios,
    solve_matrix_exp,
    solve_mc,
    solve_series,
    validate,
)
from maketake.solver import solve_series_grid

vp = validate(ModelParams(q_bar=10))
print("derived constants:")
print(f"  C1  = {vp.constants.c1:.6e}   (inventory penalty rate)")
print(f"  C1' = {vp.constants.c1_prime:.6f}   (fill coupling rate)")

# route 1: eigendecomposition of the tridiagonal generator
grid = solve_matrix_exp(vp, "exchange", np.linspace(0.0, vp.T, 101))
print(f"\nlog u(0, 0) by matrix exponential: {grid.log_u[0, vp.q_bar]:.12f}")

# route 2: positive power series with a Poisson tail cutoff
series = solve_series(vp, "exchange", 0.0, 0)
print(f"log u(0, 0) by series summation:   {series:.12f}")

# route 3: jump-process Monte Carlo (the probabilistic representation)
vp_mc = validate(ModelParams(q_bar=5, T=10.0))
est, se = solve_mc(vp_mc, "exchange", 0.0, 0, 50_000, seed=2)
truth = np.exp(solve_series(vp_mc, "exchange", 0.0, 0))
print(f"\nshort-horizon u(0,0): MC {est:.4f} +- {se:.4f}, series {truth:.4f}, "
      f"z = {(est - truth) / se:+.2f}")

# route 4: the log-ratio system that the quotes actually need
ratios = solve_log_ratios(vp, "exchange", dt=0.02)
direct = np.diff(solve_series_grid(vp, "exchange", [0.0])[0])
print(f"\nlog-ratio ODE vs series at t=0: max gap "
      f"{np.abs(ratios.v_plus[0] - direct).max():.2e}")
print("v_plus(0, q) for q = -3..2:", np.round(ratios.v_plus[0][vp.q_bar - 3:vp.q_bar + 3], 5))
