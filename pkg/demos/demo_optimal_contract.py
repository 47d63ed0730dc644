"""Build the optimal incentive scheme and compare its quotes with the
no-contract benchmark, the risk-neutral limit and the first-best bound."""

import numpy as np

from maketake import (
    ModelParams,
    benchmark_policy,
    contracted_policy,
    first_best,
    indifference_y0,
    risk_neutral_policy,
    solve_matrix_exp,
    taker_fee_heuristic,
    validate,
)

vp = validate(ModelParams())  # full standard set, q_bar = 50
bench_grid = solve_matrix_exp(vp, "benchmark")
pol_b = benchmark_policy(bench_grid, vp)
pol_c = contracted_policy(solve_matrix_exp(vp, "exchange"), vp,
                          y0=indifference_y0(bench_grid, vp))
pol_rn = risk_neutral_policy(vp)

print("initial quotes (t = 0):")
print(f"{'q':>5} {'contracted ask':>15} {'benchmark ask':>15} {'contracted bid':>15}")
for q in (-40, -20, 0, 20, 40):
    print(f"{q:>5} {pol_c.ask_spread(0, q):>15.4f} {pol_b.ask_spread(0, q):>15.4f} "
          f"{pol_c.bid_spread(0, q):>15.4f}")

print(f"\ntotal spread at q=0: contracted "
      f"{pol_c.ask_spread(0, 0) + pol_c.bid_spread(0, 0):.4f}, benchmark "
      f"{pol_b.ask_spread(0, 0) + pol_b.bid_spread(0, 0):.4f}, risk-neutral "
      f"{pol_rn.ask_spread(0, 0) + pol_rn.bid_spread(0, 0):.4f}")

print(f"\nincentive coefficients at (t=0, q=10):")
print(f"  Z^S = {pol_c.z_s(10):+.4f}  (price-risk share -gamma q/(gamma+eta))")
print(f"  Z^a = {pol_c.z_a(0, 10):+.4f}   Z^b = {pol_c.z_b(0, 10):+.4f}")
print(f"  indifference transfer Y_0 = {pol_c.y0:.2f} ticks")

fee = taker_fee_heuristic(vp, target_spread=1.0)
print(f"\ntaker fee for a one-tick target spread: approx {fee.approx}, "
      f"exact {fee.exact:.6f}")

fb = first_best(vp, R=-1.0, times=np.array([0.0, vp.T]))
sb = -(vp.sigma * vp.eta / vp.k) * solve_matrix_exp(
    vp, "exchange", np.array([0.0, vp.T])
).log_u_at(0.0)[vp.q_bar]
print(f"\nfirst best vs second best, log(-v(0,0)): {fb.log_neg_v0:.4f} vs "
      f"{sb:.4f} (gap {abs(fb.log_neg_v0 - sb):.4f}; dictating the quotes helps)")
