"""Learn orbits from prior features on a small wrapped-normal grid.

Run: python3 demos/04_learning.py

Uses a reduced optimiser budget and n_max = 7, so it finishes in a few minutes.
"""

import math

from aqplfc import learning
from aqplfc.distributions import PhasePrior
from aqplfc.optimizer import DEConfig

cfg = DEConfig(population=16, max_generations=40)
priors = [PhasePrior.wrapped_normal(0.3 + k * math.pi / 3, s) for k in range(6) for s in (1.0, 1.25, 1.5)]
ds = learning.generate_dataset(priors, n_max=7, zeta=3, cfg=cfg, family="sine",
                               progress=lambda i, p, fit, ok: print(f"prior {i:2d} {p.parameters} "
                                                                    f"exponent {fit.exponent:.3f} ok={ok}"))
print(f"{len(ds)} feasible of {len(priors)}")

spec = learning.SplitSpec(model_fraction=0.75, folds=3, seed=0)
model_set, test_set = learning.split_dataset(ds, spec)
hyper = learning.calibrate(model_set, [[1], [2], [3]], spec, "knn")
reg = learning.train(model_set, "knn", hyper)
report = learning.test(reg, test_set, cfg=cfg, max_loss_ratio=0.9)
print(f"k = {hyper[0]}  mean loss {report['mean_loss']:.3f}  medoid baseline {report['baseline_mean_loss']:.3f}")
print(f"feasible predictions {report['feasible_fraction']:.2f}  passed {report['passed']}")
