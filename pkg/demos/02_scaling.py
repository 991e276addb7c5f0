"""Optimise a policy orbit and compare it with the product-state baseline.

Run: python3 demos/02_scaling.py [n_max]

n_max = 8 takes well under a minute on one core.
"""

import math
import sys

from aqplfc.distributions import PhasePrior
from aqplfc.metrics import check_feasibility, hl_baseline, sql_baseline
from aqplfc.optimizer import DEConfig, build_orbit
from aqplfc.scaling import fit_rows, sql_scan

n_max = int(sys.argv[1]) if len(sys.argv) > 1 else 8

orbit, fit = build_orbit(n_max, PhasePrior.uniform(), "sine", DEConfig(),
                         progress=lambda n, rep, v: print(f"N = {n:2d}  V = {v:.5f}"))
print(f"adaptive orbit: exponent {fit.exponent:.3f}, R^2 {fit.r_squared:.5f}, "
      f"feasible {check_feasibility(fit)}")

rows = sql_scan(range(4, n_max + 1), samples=50_000)
base = fit_rows(rows)
print(f"product-state baseline: exponent {base.exponent:.3f}")

# phase uncertainty sqrt(V) against the 1/sqrt(N) and 1/N references
print(" N   adaptive   product   1/sqrt(N)   1/N")
for (n, v), (_, vb, _, _) in zip(fit.points, rows):
    print(f"{n:2d}  {math.sqrt(v):8.4f}  {math.sqrt(vb):8.4f}  {sql_baseline(n):9.4f}  {hl_baseline(n):7.4f}")
