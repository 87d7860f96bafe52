"""
Why balanced partitions
=======================

Expected one-step gain of the true message's posterior as a function of the
mass P0 placed in S0. It is concave with its maximum at 1/2.
"""

import numpy as np

from sbcspm import expected_weight, expected_weight_d1, expected_weight_d2, weight_distribution

P0 = np.linspace(0, 1, 11)
for p in (0.05, 0.2, 0.4):
    ew = expected_weight(P0, p)
    print(f"p={p}: E[w] on P0 = 0, 0.1, ..., 1")
    print("   ", np.round(ew, 4))
    print(f"    d1(1/2) = {expected_weight_d1(0.5, p)}, max d2 = {expected_weight_d2(P0, p).max():.3f}")

wd = weight_distribution(0.3, 0.1)
print("update factors at P0=0.3, p=0.1:", np.round(wd.values, 4), "with probabilities", wd.probs)
