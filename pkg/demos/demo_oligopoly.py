"""Symmetric platforms competing for one market maker: how the equilibrium
transfer and the quotes change with the number of exchanges."""

from dataclasses import replace

from maketake import ModelParams, nash_policy, solve_matrix_exp, validate

base = ModelParams()
print(f"{'N':>3} {'total spread (0,0)':>19} {'ask skew at q=20':>17} "
      f"{'aggregate Z^S coef':>19}")
for n in (1, 2, 4, 8):
    vp = validate(replace(base, n_exchanges=n))
    pol = nash_policy(solve_matrix_exp(vp, "nash"), vp)
    total = pol.ask_spread(0, 0) + pol.bid_spread(0, 0)
    skew = pol.ask_spread(0, 20) - pol.ask_spread(0, 0)
    print(f"{n:>3} {total:>19.4f} {skew:>17.4f} {pol.zs_coef:>19.4f}")

print("\nmore platforms: the inventory sensitivity of the quotes collapses")
print("and the aggregate price-risk share -N gamma/(eta + N gamma) "
      "drifts toward the full transfer -1.")
