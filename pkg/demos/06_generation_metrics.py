"""Entropy-based generation metrics and their mathematical bounds.

With K classes, a perfect-and-diverse generator hits inter-entropy ln K,
intra-entropy 0 and a score of exactly K; a collapsed or confused one
drifts toward a score of 1. The same report is produced for real clips by
a trained classifier, which gives the experimental reference point.
"""

import numpy as np

from motionfuse import MetricsReport, inception_score, inter_entropy, mean_intra_entropy

print("mathematical bounds (balanced one-hot classifications):")
for k in (6, 20, 90):
    one_hots = np.eye(k)
    print(
        f"  K={k:2d}: H(y)={inter_entropy(one_hots):.2f}  "
        f"H(y|v)={mean_intra_entropy(one_hots):.2f}  "
        f"score={inception_score(one_hots):.2f}"
    )

print("\ncollapsed generator (every video classified the same):")
same = np.tile(np.eye(6)[0], (30, 1))
print(f"  score={inception_score(same):.2f} (diversity term is zero)")

print("\nunsure classifier (uniform distributions):")
uniform = np.full((30, 6), 1 / 6)
print(f"  score={inception_score(uniform):.2f} (realism term cancels diversity)")

print("\nnoisy but mostly-correct classifications:")
rng = np.random.default_rng(0)
noisy = np.eye(6)[np.arange(30) % 6] * 0.85 + 0.15 / 6
noisy /= noisy.sum(axis=1, keepdims=True)
report = MetricsReport.from_distributions(noisy)
print(" ", report.to_json())
