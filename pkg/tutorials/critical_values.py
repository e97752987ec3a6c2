"""
Where the critical values come from
===================================

The studentized statistic converges to a ratio of Brownian functionals,
not to a normal. Its quantiles can be simulated directly; here a modest run
is set against the tabulated values.
"""

from sgdinfer import CRITICAL_VALUES, simulate_critical_values

sim = simulate_critical_values(ell=1, quantiles=sorted(CRITICAL_VALUES), paths=40_000, grid=1000, seed=1)

for p in sorted(CRITICAL_VALUES):
    print(f"p={p:<6} simulated {sim[p]:6.3f} +/- {sim.stderr[p]:.3f}   tabulated {CRITICAL_VALUES[p]}")

# a 95% normal interval would use 1.96; the pivot's tails are far heavier

# joint tests of two restrictions need their own quantile
wald2 = simulate_critical_values(ell=2, quantiles=[0.95], paths=20_000, grid=1000, seed=1, statistic="wald")
print(f"\nWald, two restrictions, 95%: {wald2[0.95]:.2f}")
print(wald2.to_csv())
