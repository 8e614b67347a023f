"""Is the unexpectedness gain at alpha = 0.03 more than noise?

Ten reruns with different root seeds (split, initialization) for each
estimator and closure, followed by a Welch t-test on every metric. This is
the same protocol the acceptance test uses; it takes a few seconds.
"""
import numpy as np

from latent_unexp.config import parse_config
from latent_unexp.pipeline import robustness_matrix, significance
from pathlib import Path

cfg = parse_config(Path(__file__).with_name("clustered.conf"))
results = robustness_matrix(cfg, ("mf", "nmf", "knn"), ("sphere", "box", "hull"), (0.0, 0.03), range(10))

print(f"{'setting':<12}{'Unexp a=0':>11}{'a=0.03':>9}{'p':>10}{'Div a=0':>10}{'a=0.03':>9}  RMSE equal")
for (est, clo), per in results.items():
    base, alt = per[0.0], per[0.03]
    sig = significance(alt, base)
    mean = lambda reps, m: np.mean([getattr(r, m) for r in reps])  # noqa: E731
    same = all(a.rmse == b.rmse for a, b in zip(base, alt))
    print(f"{est + '/' + clo:<12}{mean(base, 'unexp'):11.4f}{mean(alt, 'unexp'):9.4f}{sig['unexp'][1]:10.2g}"
          f"{mean(base, 'diversity'):10.4f}{mean(alt, 'diversity'):9.4f}  {same}")
